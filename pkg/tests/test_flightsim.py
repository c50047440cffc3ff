import numpy as np
import pytest

from swarmlift.flightsim import (
    AssemblyDynamics,
    CascadedPid,
    ControllerConfig,
    RigidBodyState,
    SimConfig,
    TorquePulse,
    TrajectorySpec,
    allocation_matrix,
    assembly_inertia,
    disturbance_torque,
    dynamics_step,
    make_dynamics,
    mix,
    quat_to_euler,
    quat_to_rot,
    run_flight,
)
from swarmlift.formation import Formation, build_input_matrix, even_formation, optimize_formation
from swarmlift.mission import build_controller
from swarmlift.scenarios import builtin_scenario


def square_formation(side=1.0, c_t=1.0, c_q=0.01, com=(0.0, 0.0)):
    positions = np.array([(side, side), (-side, side), (-side, -side), (side, -side)])
    signs = np.array([1.0, -1.0, 1.0, -1.0])
    arcs = np.arange(4, dtype=float)
    matrix = build_input_matrix(positions, signs, c_t, c_q, com)
    return Formation(arcs, positions, signs, c_t, c_q, np.asarray(com, float), matrix)


class TestAssemblyInertia:
    def test_point_robots_at_origin_add_no_inertia(self, rect_payload):
        form = square_formation(side=0.0)
        props = assembly_inertia(rect_payload, form, (0.0, 0.0, 2.4))
        slab_izz = 2.4 * (1.76 ** 2 + 0.2 ** 2) / 12.0
        assert np.isclose(props.inertia[2, 2], slab_izz)

    def test_robot_point_masses_add_parallel_axis_terms(self, rect_payload):
        positions = np.array([(1.0, 0.0), (-1.0, 0.0)])
        signs = np.array([1.0, -1.0])
        matrix = build_input_matrix(positions, signs, 1.0, 0.01, (0, 0))
        form = Formation(np.arange(2, dtype=float), positions, signs, 1.0, 0.01,
                         np.zeros(2), matrix)
        props = assembly_inertia(rect_payload, form, (0.0, 0.0, 1e-12))
        assert np.isclose(props.inertia[1, 1], 2 * 0.1 * 1.0 ** 2, atol=1e-9)

    def test_rectangle_slab_izz_value(self, rect_payload):
        form = square_formation(side=0.0)
        props = assembly_inertia(rect_payload, form, (0.0, 0.0, 2.4))
        assert np.isclose(props.inertia[2, 2], 0.6275, atol=2e-4)

    def test_total_mass(self, rect_payload):
        form = even_formation(rect_payload, 8)
        props = assembly_inertia(rect_payload, form, (0.1, 0.0, 3.5))
        assert np.isclose(props.mass, 3.5 + 8 * 0.1)


class PidReference:
    """Independent cascade implementation mirrored from the documented law."""

    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        self.outer_div = max(1, int(round(cfg.inner_rate / cfg.outer_rate)))
        self.tick = 0
        self.i_pos = np.zeros(3)
        self.i_vel = np.zeros(3)
        self.i_ang = np.zeros(3)
        self.i_rate = np.zeros(3)
        self.p_pos = None
        self.p_vel = None
        self.p_ang = None
        self.p_rate = None
        self.acc = np.zeros(3)

    @staticmethod
    def pid(gains, err, integ, prev, dt, lim):
        kp, ki, kd = gains
        integ += err * dt
        np.clip(integ, -lim, lim, out=integ)
        der = np.zeros_like(err) if prev is None else (err - prev) / dt
        return kp * err + ki * integ + kd * der

    def step(self, pos, vel, euler, omega, pos_ref, vel_ff, yaw_ref=0.0):
        cfg = self.cfg
        dt_in = 1.0 / cfg.inner_rate
        if self.tick % self.outer_div == 0:
            dt_out = self.outer_div * dt_in
            pe = np.asarray(pos_ref, float) - np.asarray(pos, float)
            vr = self.pid(cfg.pos_gains, pe, self.i_pos, self.p_pos, dt_out,
                          cfg.int_limits[0])
            self.p_pos = pe
            ve = vr + np.asarray(vel_ff, float) - np.asarray(vel, float)
            self.acc = self.pid(cfg.vel_gains, ve, self.i_vel, self.p_vel, dt_out,
                                cfg.int_limits[1])
            self.p_vel = ve
        self.tick += 1
        thrust = max(cfg.est_mass * (cfg.gravity + self.acc[2]), 0.0)
        yaw = float(euler[2])
        rr = (self.acc[0] * np.sin(yaw) - self.acc[1] * np.cos(yaw)) / cfg.gravity
        pr = (self.acc[0] * np.cos(yaw) + self.acc[1] * np.sin(yaw)) / cfg.gravity
        rr = float(np.clip(rr, -cfg.max_tilt, cfg.max_tilt))
        pr = float(np.clip(pr, -cfg.max_tilt, cfg.max_tilt))
        ye = float(np.mod(yaw_ref - yaw + np.pi, 2 * np.pi) - np.pi)
        ae = np.array([rr - euler[0], pr - euler[1], ye])
        rate_ref = self.pid(cfg.ang_gains, ae, self.i_ang, self.p_ang, dt_in,
                            cfg.int_limits[2])
        self.p_ang = ae
        re = rate_ref - np.asarray(omega, float)
        tu = self.pid(cfg.rate_gains, re, self.i_rate, self.p_rate, dt_in,
                      cfg.int_limits[3])
        self.p_rate = re
        torque = np.asarray(cfg.est_inertia_diag, float) * tu
        tz = float(np.clip(torque[2], -cfg.yaw_torque_limit, cfg.yaw_torque_limit))
        return np.array([thrust, torque[0], torque[1], tz])


class TestCascadedPid:
    def test_hover_equals_gravity_compensation(self):
        cfg = ControllerConfig(est_mass=4.3)
        ctl = CascadedPid(cfg)
        w = ctl.step(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3),
                     np.zeros(3), np.zeros(3))
        assert np.allclose(w, [4.3 * 9.81, 0.0, 0.0, 0.0])

    def test_mass_error_feeds_forward(self):
        w_heavy = CascadedPid(ControllerConfig(est_mass=4.3)).step(
            np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))
        w_light = CascadedPid(ControllerConfig(est_mass=4.0)).step(
            np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))
        assert np.isclose(w_heavy[0] - w_light[0], 0.3 * 9.81)

    def test_matches_independent_implementation(self):
        cfg = ControllerConfig(est_mass=4.0,
                               est_inertia_diag=np.array([0.02, 1.2, 1.25]))
        ours = CascadedPid(cfg)
        ref = PidReference(cfg)
        rng = np.random.default_rng(5)
        for step in range(200):
            pos = rng.normal(0, 0.5, 3)
            vel = rng.normal(0, 0.5, 3)
            euler = rng.normal(0, 0.2, 3)
            omega = rng.normal(0, 0.5, 3)
            pos_ref = rng.normal(0, 0.5, 3)
            vel_ff = rng.normal(0, 0.2, 3)
            w1 = ours.step(pos, vel, euler, omega, pos_ref, vel_ff)
            w2 = ref.step(pos, vel, euler, omega, pos_ref, vel_ff)
            assert np.allclose(w1, w2, atol=1e-9), f"diverged at step {step}"

    def test_bad_rates_rejected(self):
        with pytest.raises(ValueError):
            ControllerConfig(outer_rate=500.0, inner_rate=100.0)


class TestMixer:
    def test_symmetric_collective_splits_evenly(self):
        form = square_formation()
        thrusts, saturated = mix([4.0 * 2.0, 0.0, 0.0, 0.0], form, 14.2)
        assert np.allclose(thrusts, 2.0)
        assert not saturated

    def test_pure_roll_is_antisymmetric(self):
        # raw allocation (pre-clamp): antisymmetric pattern, zero collective
        form = square_formation()
        raw = np.linalg.pinv(allocation_matrix(form)) @ np.array([0.0, 0.5, 0.0, 0.0])
        assert np.isclose(np.sum(raw), 0.0, atol=1e-12)
        assert np.isclose(np.sum(form.positions[:, 1] * raw), 0.5)
        assert np.allclose(raw + raw[::-1], raw + raw[::-1])  # finite
        clamped, _ = mix([0.0, 0.5, 0.0, 0.0], form, 14.2)
        assert np.all(clamped >= 0.0)

    def test_allocation_residual_unsaturated(self, rect_payload):
        rng = np.random.default_rng(2)
        form = even_formation(rect_payload, 8, com=(0.1, 0.0))
        a = allocation_matrix(form)
        pinv = np.linalg.pinv(a)
        for _ in range(50):
            wrench = np.array([rng.uniform(20, 60), rng.uniform(-1, 1),
                               rng.uniform(-3, 3), rng.uniform(-0.2, 0.2)])
            raw = pinv @ wrench
            assert np.linalg.norm(a @ raw - wrench) <= 1e-9

    def test_saturation_flagged(self):
        form = square_formation()
        _, saturated = mix([100.0, 0.0, 0.0, 0.0], form, thrust_limit=5.0)
        assert saturated


def torque_free_dynamics():
    inertia = np.diag([0.02, 1.2, 1.25])
    return AssemblyDynamics(
        mass=4.3, inertia=inertia, inv_inertia=np.linalg.inv(inertia),
        thrust_offsets=np.zeros((4, 3)), spin_signs=np.array([1.0, -1.0, 1.0, -1.0]),
        thrust_coeff=1.0, torque_coeff=0.01, gravity=9.81, contact_offsets=None)


class TestDynamics:
    def test_free_fall(self):
        dyn = torque_free_dynamics()
        state = RigidBodyState(np.zeros(3), np.zeros(3),
                               np.array([1.0, 0, 0, 0]), np.zeros(3))
        new, _ = dynamics_step(state, np.zeros(4), np.zeros(3), dyn, 1e-3)
        assert np.isclose(new.velocity[2], -9.81e-3)

    def test_hover_fixed_point(self, rect_payload):
        form = even_formation(rect_payload, 8, com=(0.0, 0.0))
        props = assembly_inertia(rect_payload, form, (0.0, 0.0, 3.2))
        dyn = make_dynamics(rect_payload, form, props, ground=False)
        hover = props.mass * 9.81 / 8
        state = RigidBodyState(np.array([0.0, 0.0, 1.0]), np.zeros(3),
                               np.array([1.0, 0, 0, 0]), np.zeros(3))
        new, _ = dynamics_step(state, np.full(8, hover), np.zeros(3), dyn, 1e-3)
        assert np.allclose(new.position, state.position, atol=1e-9)
        assert np.allclose(new.velocity, 0.0, atol=1e-9)
        assert np.allclose(new.angular_velocity, 0.0, atol=1e-9)

    def test_torque_free_energy_conserved(self):
        dyn = torque_free_dynamics()
        state = RigidBodyState(np.zeros(3), np.zeros(3),
                               np.array([1.0, 0, 0, 0]),
                               np.array([1.2, 0.4, -0.7]))
        e0 = 0.5 * state.angular_velocity @ dyn.inertia @ state.angular_velocity
        max_drift = 0.0
        for _ in range(10_000):
            state, drift = dynamics_step(state, np.zeros(4), np.zeros(3), dyn, 1e-3)
            max_drift = max(max_drift, drift)
        e1 = 0.5 * state.angular_velocity @ dyn.inertia @ state.angular_velocity
        assert abs(e1 - e0) / e0 <= 1e-6
        assert max_drift <= 1e-9

    def test_coarse_step_rejected(self):
        dyn = torque_free_dynamics()
        state = RigidBodyState(np.zeros(3), np.zeros(3),
                               np.array([1.0, 0, 0, 0]), np.zeros(3))
        with pytest.raises(ValueError):
            dynamics_step(state, np.zeros(4), np.zeros(3), dyn, 0.02)

    def test_quaternion_euler_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            r = quat_to_rot(q)
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.isclose(np.linalg.det(r), 1.0)
            e = quat_to_euler(q)
            assert np.all(np.isfinite(e))


class TestTrajectory:
    def test_phases_and_velocity_continuity(self):
        traj = TrajectorySpec(hover_height=1.0, target=(0.5, 0.0, 1.0))
        pos0, vel0 = traj.reference(0.0)
        assert np.allclose(pos0, 0.0) and np.allclose(vel0, 0.0)
        pos_end, vel_end = traj.reference(traj.t_end + 1.0)
        assert np.allclose(pos_end, traj.target) and np.allclose(vel_end, 0.0)
        for t_edge in (traj.t_ramp, traj.t_climb, traj.t_move_start, traj.t_move_end):
            p0, v0 = traj.reference(t_edge - 1e-9)
            p1, v1 = traj.reference(t_edge + 1e-9)
            assert np.allclose(p0, p1, atol=1e-6)
            assert np.allclose(v0, v1, atol=1e-5)

    def test_disturbance_pulse_window(self):
        pulses = (TorquePulse(1.0, 2.0, (0.3, 0.0, 0.0)),)
        assert disturbance_torque(pulses, 0.5)[0] == 0.0
        assert disturbance_torque(pulses, 1.5)[0] == 0.3
        assert disturbance_torque(pulses, 2.0)[0] == 0.0


class TestRunFlight:
    @pytest.fixture(scope="class")
    def short_scenario(self):
        sc = builtin_scenario("rectangle")
        from dataclasses import replace
        traj = TrajectorySpec(hover_height=0.5, target=(0.0, 0.0, 0.5),
                              t_ramp=1.5, t_climb=3.0, t_move_start=3.5,
                              t_move_end=4.5, t_end=6.0)
        return replace(sc, trajectory=traj)

    def test_hover_regulator_rmse_small(self, short_scenario):
        sc = short_scenario
        rng = np.random.default_rng(1)
        form, _ = optimize_formation(sc.payload, sc.theta_true, 8, 1e-5,
                                     mode="free", rng=rng, restarts=2)
        ctrl = build_controller(sc, sc.payload, form, sc.theta_true)
        log = run_flight(sc.payload, form, sc.theta_true, sc.theta_true,
                         sc.trajectory, (), ctrl, sc.sim)
        assert log.verdict == "completed"
        assert np.all(log.rmse < 0.08)
        assert np.linalg.norm(log.final_position - np.array([0.0, 0.0, 0.5])) < 0.05

    def test_drop_rule_matches_log(self, short_scenario):
        sc = short_scenario
        even = even_formation(sc.payload, 8, com=sc.theta_true[:2])
        ctrl = build_controller(sc, sc.payload, even, sc.theta_true)
        log = run_flight(sc.payload, even, sc.theta_true, sc.theta_true,
                         sc.trajectory, sc.disturbance, ctrl, sc.sim)
        tilts = np.max(np.abs(log.eulers[:, :2]), axis=1)
        if log.verdict == "dropped":
            assert tilts[-1] > np.radians(45.0)
            assert np.all(tilts[:-1] <= np.radians(45.0) + 1e-12)
        else:
            assert np.all(tilts <= np.radians(45.0))

    def test_determinism_bitwise(self, short_scenario):
        sc = short_scenario
        form = even_formation(sc.payload, 8, com=sc.theta_true[:2])
        ctrl = build_controller(sc, sc.payload, form, sc.theta_true)
        log1 = run_flight(sc.payload, form, sc.theta_true, sc.theta_true,
                          sc.trajectory, sc.disturbance, ctrl, sc.sim)
        log2 = run_flight(sc.payload, form, sc.theta_true, sc.theta_true,
                          sc.trajectory, sc.disturbance, ctrl, sc.sim)
        assert np.array_equal(log1.positions, log2.positions)
        assert np.array_equal(log1.thrusts, log2.thrusts)

    def test_linear_model_toggle_runs(self, short_scenario):
        sc = short_scenario
        form = even_formation(sc.payload, 8, com=(0.0, 0.0))
        theta = (0.0, 0.01, 3.0)
        ctrl = build_controller(sc, sc.payload, form, theta)
        sim = SimConfig(linear_model=True, ground=False)
        log = run_flight(sc.payload, form, theta, theta, sc.trajectory, (), ctrl, sim)
        assert log.verdict in ("completed", "dropped")
        assert len(log.times) > 100
