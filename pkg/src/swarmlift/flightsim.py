"""Closed-loop flight of the payload-plus-robots assembly.

The assembly is one rigid body: the slab plus point-mass robots clamped to
the rail. Per-robot thrusts act along body z at the attachment offsets and
rotor drag adds signed yaw torque. Ground support during the takeoff ramp is
a frictionless penalty plane under the contact corners, so an unbalanced
equal-thrust ramp really tips the slab the way it does on the bench.

Control is a cascade of four PID loops (position, velocity, angle, angular
velocity) running at a slower outer and faster inner rate, with gravity
compensation from the estimated mass, and a pseudo-inverse mixer built from
the formation's input matrix. Physics integrates at a fixed RK4 step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formation import Formation
from .payload import PayloadModel, polygon_area, polygon_centroid, polygon_second_moments

DROP_ANGLE = np.radians(45.0)


# ---------------------------------------------------------------------------
# attitude helpers (quaternion w,x,y,z; body -> world)
# ---------------------------------------------------------------------------

def quat_to_rot(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_derivative(q: np.ndarray, omega_body: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    ox, oy, oz = omega_body
    return 0.5 * np.array([
        -x * ox - y * oy - z * oz,
        w * ox + y * oz - z * oy,
        w * oy - x * oz + z * ox,
        w * oz + x * oy - y * ox,
    ])


def quat_to_euler(q: np.ndarray) -> np.ndarray:
    """Roll, pitch, yaw (ZYX convention)."""
    w, x, y, z = q
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    s = np.clip(2 * (w * y - z * x), -1.0, 1.0)
    pitch = np.arcsin(s)
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def euler_to_rot(euler: np.ndarray) -> np.ndarray:
    r, p, y = euler
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


@dataclass
class RigidBodyState:
    position: np.ndarray          # world, m (assembly COM)
    velocity: np.ndarray          # world, m/s
    quaternion: np.ndarray        # body -> world
    angular_velocity: np.ndarray  # body, rad/s

    @property
    def euler(self) -> np.ndarray:
        return quat_to_euler(self.quaternion)

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(self.position.copy(), self.velocity.copy(),
                              self.quaternion.copy(), self.angular_velocity.copy())


# ---------------------------------------------------------------------------
# assembly mass properties
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssemblyProperties:
    mass: float
    inertia: np.ndarray           # 3x3 about the assembly COM, body axes
    com: np.ndarray               # (2,) payload-frame assembly COM


def _point_mass_inertia(mass: float, offset3: np.ndarray) -> np.ndarray:
    d = np.asarray(offset3, dtype=float)
    return mass * (float(d @ d) * np.eye(3) - np.outer(d, d))


def assembly_inertia(payload: PayloadModel, formation: Formation,
                     hypothesis) -> AssemblyProperties:
    """Mass, inertia tensor, and COM of slab plus clamped robots.

    The slab is treated as uniform with its centroidal inertia re-centered on
    the stated payload COM, which keeps the rigid-body model self-consistent
    when extra ballast moved the COM off the geometric centroid.
    """
    com_x, com_y, payload_mass = (float(v) for v in hypothesis)
    area = abs(polygon_area(payload.footprint))
    ixx_a, iyy_a, ixy_a = polygon_second_moments(payload.footprint)
    centroid = polygon_centroid(payload.footprint)
    # centroidal area moments
    ixx_c = ixx_a - area * centroid[1] ** 2
    iyy_c = iyy_a - area * centroid[0] ** 2
    ixy_c = ixy_a - area * centroid[0] * centroid[1]
    density = payload_mass / area if payload_mass > 0 else 0.0
    slab = np.array([
        [density * ixx_c, -density * ixy_c, 0.0],
        [-density * ixy_c, density * iyy_c, 0.0],
        [0.0, 0.0, density * (ixx_c + iyy_c)],
    ])

    robot_mass = payload.robot_mass
    n = formation.n_robots
    total = payload_mass + n * robot_mass
    com = (payload_mass * np.array([com_x, com_y])
           + robot_mass * np.sum(formation.positions, axis=0)) / total

    inertia = slab + _point_mass_inertia(payload_mass, np.array([com_x - com[0], com_y - com[1], 0.0]))
    for pos in formation.positions:
        inertia = inertia + _point_mass_inertia(robot_mass, np.array([pos[0] - com[0], pos[1] - com[1], 0.0]))
    return AssemblyProperties(total, inertia, com)


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssemblyDynamics:
    mass: float
    inertia: np.ndarray
    inv_inertia: np.ndarray
    thrust_offsets: np.ndarray     # (n, 3) body frame, relative to assembly COM
    spin_signs: np.ndarray
    thrust_coeff: float
    torque_coeff: float
    gravity: float
    contact_offsets: np.ndarray | None = None   # (k, 3) ground-contact corners
    contact_stiffness: float = 2.0e4             # total N/m across all contacts
    contact_damping: float = 4.0e2


def make_dynamics(payload: PayloadModel, formation: Formation, props: AssemblyProperties,
                  ground: bool = True) -> AssemblyDynamics:
    offsets = np.column_stack([
        formation.positions[:, 0] - props.com[0],
        formation.positions[:, 1] - props.com[1],
        np.zeros(formation.n_robots),
    ])
    contacts = None
    if ground:
        contacts = np.column_stack([
            payload.contacts[:, 0] - props.com[0],
            payload.contacts[:, 1] - props.com[1],
            np.zeros(len(payload.contacts)),
        ])
    return AssemblyDynamics(props.mass, props.inertia, np.linalg.inv(props.inertia),
                            offsets, formation.signs.copy(), formation.thrust_coeff,
                            formation.torque_coeff, payload.gravity, contacts)


def _state_derivative(pos, vel, quat, omega, thrusts, disturbance, dyn: AssemblyDynamics):
    rot = quat_to_rot(quat)
    total_thrust = dyn.thrust_coeff * float(np.sum(thrusts))
    force_world = rot @ np.array([0.0, 0.0, total_thrust])
    force_world = force_world + np.array([0.0, 0.0, -dyn.mass * dyn.gravity])

    torque = np.zeros(3)
    torque[0] = dyn.thrust_coeff * float(np.sum(dyn.thrust_offsets[:, 1] * thrusts))
    torque[1] = -dyn.thrust_coeff * float(np.sum(dyn.thrust_offsets[:, 0] * thrusts))
    torque[2] = dyn.torque_coeff * float(np.sum(dyn.spin_signs * thrusts))
    torque = torque + disturbance

    if dyn.contact_offsets is not None:
        k_each = dyn.contact_stiffness / len(dyn.contact_offsets)
        c_each = dyn.contact_damping / len(dyn.contact_offsets)
        for offset in dyn.contact_offsets:
            world_off = rot @ offset
            z = pos[2] + world_off[2]
            if z < 0.0:
                vz = vel[2] + float(np.cross(rot @ omega, world_off)[2])
                f = max(0.0, -k_each * z - c_each * vz)
                force_world = force_world + np.array([0.0, 0.0, f])
                torque = torque + np.cross(offset, rot.T @ np.array([0.0, 0.0, f]))

    acc = force_world / dyn.mass
    omega_dot = dyn.inv_inertia @ (torque - np.cross(omega, dyn.inertia @ omega))
    qdot = quat_derivative(quat, omega)
    return vel, acc, qdot, omega_dot


def dynamics_step(state: RigidBodyState, thrusts, disturbance, dyn: AssemblyDynamics,
                  dt: float) -> tuple[RigidBodyState, float]:
    """One fixed RK4 step; returns the new state and the quaternion norm drift."""
    if dt > 0.01:
        raise ValueError("physics step too coarse for attitude integration")
    thrusts = np.asarray(thrusts, dtype=float)
    disturbance = np.asarray(disturbance, dtype=float)

    def f(p, v, q, w):
        return _state_derivative(p, v, q, w, thrusts, disturbance, dyn)

    p0, v0, q0, w0 = state.position, state.velocity, state.quaternion, state.angular_velocity
    k1 = f(p0, v0, q0, w0)
    k2 = f(p0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[1], q0 + 0.5 * dt * k1[2], w0 + 0.5 * dt * k1[3])
    k3 = f(p0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[1], q0 + 0.5 * dt * k2[2], w0 + 0.5 * dt * k2[3])
    k4 = f(p0 + dt * k3[0], v0 + dt * k3[1], q0 + dt * k3[2], w0 + dt * k3[3])

    pos = p0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vel = v0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    quat = q0 + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    omega = w0 + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

    norm = float(np.linalg.norm(quat))
    drift = abs(norm - 1.0)
    quat = quat / norm
    return RigidBodyState(pos, vel, quat, omega), drift


# ---------------------------------------------------------------------------
# cascaded PID controller
# ---------------------------------------------------------------------------

@dataclass
class ControllerConfig:
    """Gains and limits for the four-loop cascade.

    Each loop carries a (kp, ki, kd) triple. The inner pair (angle, angular
    velocity) runs at ``inner_rate``; the outer pair (position, velocity)
    updates every ``inner_rate / outer_rate`` controller ticks and holds its
    output in between. Torque commands scale with the estimated inertia so
    one gain set covers different payload shapes.
    """

    pos_gains: tuple[float, float, float] = (1.1, 0.0, 0.0)
    vel_gains: tuple[float, float, float] = (2.6, 1.2, 0.0)
    ang_gains: tuple[float, float, float] = (9.0, 0.0, 0.0)
    rate_gains: tuple[float, float, float] = (28.0, 18.0, 0.0)
    outer_rate: float = 50.0
    inner_rate: float = 250.0
    thrust_limit: float = 14.2        # N per robot
    est_mass: float = 4.0             # kg, gravity compensation
    est_inertia_diag: np.ndarray = field(default_factory=lambda: np.ones(3))
    max_tilt: float = 0.5             # rad reference clamp
    # the rate-loop integrator must hold the standing trim torque left by the
    # COM-estimate error, which can reach ~1 N-m on a 0.02 kg-m2 roll axis
    int_limits: tuple[float, float, float, float] = (1.0, 2.0, 1.0, 8.0)
    # rotor drag gives only ~n * c_q * thrust of yaw authority; commanding
    # more would burn the whole thrust budget on yaw through the allocator
    yaw_torque_limit: float = 0.25    # N m
    gravity: float = 9.81

    def __post_init__(self):
        if self.inner_rate < self.outer_rate:
            raise ValueError("inner loop must run at least as fast as the outer loop")
        for gains in (self.pos_gains, self.vel_gains, self.ang_gains, self.rate_gains):
            if any(g < 0 for g in gains):
                raise ValueError("PID gains must be nonnegative")


class CascadedPid:
    """Position -> velocity -> angle -> angular velocity cascade.

    step() is called at the inner rate and returns the desired wrench
    (collective thrust, roll/pitch/yaw torques). Integrators clamp at the
    configured limits for anti-windup.
    """

    def __init__(self, config: ControllerConfig):
        self.cfg = config
        self.outer_div = max(1, int(round(config.inner_rate / config.outer_rate)))
        self.reset()

    def reset(self):
        self._tick = 0
        self._int_pos = np.zeros(3)
        self._int_vel = np.zeros(3)
        self._int_ang = np.zeros(3)
        self._int_rate = np.zeros(3)
        self._prev_pos_err = None
        self._prev_vel_err = None
        self._prev_ang_err = None
        self._prev_rate_err = None
        self._acc_des = np.zeros(3)

    @staticmethod
    def _pid(gains, err, integ, prev_err, dt, limit):
        kp, ki, kd = gains
        integ += err * dt
        np.clip(integ, -limit, limit, out=integ)
        deriv = np.zeros_like(err) if prev_err is None else (err - prev_err) / dt
        return kp * err + ki * integ + kd * deriv

    def step(self, position, velocity, euler, omega_body, pos_ref, vel_ff,
             yaw_ref: float = 0.0) -> np.ndarray:
        cfg = self.cfg
        dt_in = 1.0 / cfg.inner_rate

        if self._tick % self.outer_div == 0:
            dt_out = self.outer_div * dt_in
            pos_err = np.asarray(pos_ref, dtype=float) - np.asarray(position, dtype=float)
            vel_ref = self._pid(cfg.pos_gains, pos_err, self._int_pos,
                                self._prev_pos_err, dt_out, cfg.int_limits[0])
            self._prev_pos_err = pos_err
            vel_ref = vel_ref + np.asarray(vel_ff, dtype=float)
            vel_err = vel_ref - np.asarray(velocity, dtype=float)
            self._acc_des = self._pid(cfg.vel_gains, vel_err, self._int_vel,
                                      self._prev_vel_err, dt_out, cfg.int_limits[1])
            self._prev_vel_err = vel_err
        self._tick += 1

        acc = self._acc_des
        thrust = cfg.est_mass * (cfg.gravity + acc[2])
        thrust = float(np.clip(thrust, 0.0, None))

        yaw = float(euler[2])
        g = cfg.gravity
        roll_ref = (acc[0] * np.sin(yaw) - acc[1] * np.cos(yaw)) / g
        pitch_ref = (acc[0] * np.cos(yaw) + acc[1] * np.sin(yaw)) / g
        roll_ref = float(np.clip(roll_ref, -cfg.max_tilt, cfg.max_tilt))
        pitch_ref = float(np.clip(pitch_ref, -cfg.max_tilt, cfg.max_tilt))
        yaw_err = float(np.mod(yaw_ref - yaw + np.pi, 2 * np.pi) - np.pi)
        ang_err = np.array([roll_ref - euler[0], pitch_ref - euler[1], yaw_err])

        rate_ref = self._pid(cfg.ang_gains, ang_err, self._int_ang,
                             self._prev_ang_err, dt_in, cfg.int_limits[2])
        self._prev_ang_err = ang_err
        rate_err = rate_ref - np.asarray(omega_body, dtype=float)
        torque_unit = self._pid(cfg.rate_gains, rate_err, self._int_rate,
                                self._prev_rate_err, dt_in, cfg.int_limits[3])
        self._prev_rate_err = rate_err
        torque = np.asarray(cfg.est_inertia_diag, dtype=float) * torque_unit
        yaw_torque = float(np.clip(torque[2], -cfg.yaw_torque_limit, cfg.yaw_torque_limit))
        return np.array([thrust, torque[0], torque[1], yaw_torque])


def pid_cascade_step(controller: CascadedPid, state: RigidBodyState, pos_ref,
                     vel_ff=(0.0, 0.0, 0.0), yaw_ref: float = 0.0) -> np.ndarray:
    """One controller tick on a rigid-body state; returns the desired wrench."""
    return controller.step(state.position, state.velocity, state.euler,
                           state.angular_velocity, pos_ref, vel_ff, yaw_ref)


# ---------------------------------------------------------------------------
# mixer
# ---------------------------------------------------------------------------

def allocation_matrix(formation: Formation) -> np.ndarray:
    """4 x n map from per-robot thrusts to (collective force, body torques).

    Rows reuse the formation's input matrix: its first row carries pitch
    moments (torque about y is -thrust_coeff * x), its second roll moments.
    """
    b = formation.input_matrix
    n = formation.n_robots
    return np.vstack([
        np.full(n, formation.thrust_coeff),
        b[1],        # roll torque row: thrust_coeff * y offsets
        -b[0],       # pitch torque row: -thrust_coeff * x offsets
        b[2],        # yaw torque row: signed torque coefficients
    ])


def mix(wrench_des, formation: Formation, thrust_limit: float,
        pinv: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
    """Least-squares thrust allocation, clamped to [0, thrust_limit]."""
    if pinv is None:
        pinv = np.linalg.pinv(allocation_matrix(formation))
    raw = pinv @ np.asarray(wrench_des, dtype=float)
    clamped = np.clip(raw, 0.0, thrust_limit)
    saturated = bool(np.any(raw < -1e-12) or np.any(raw > thrust_limit + 1e-12))
    return clamped, saturated


# ---------------------------------------------------------------------------
# reference trajectory and disturbance
# ---------------------------------------------------------------------------

def _smoothstep(frac: float, duration: float) -> tuple[float, float]:
    """Cubic ease with zero end slopes; returns (blend, blend rate)."""
    s = 3.0 * frac * frac - 2.0 * frac ** 3
    ds = (6.0 * frac - 6.0 * frac * frac) / duration
    return s, ds


@dataclass(frozen=True)
class TrajectorySpec:
    """Ramp, climb, translate, hold: smooth-blended 3-D reference.

    ``t_ramp`` is the open-loop equal-thrust phase; the climb brings the
    payload to hover height, the translation leg moves it to the target.
    Each leg eases in and out so the velocity feedforward is continuous.
    """

    hover_height: float = 1.0
    target: tuple[float, float, float] = (0.0, 0.0, 1.0)
    t_ramp: float = 1.5
    t_climb: float = 3.5
    t_move_start: float = 4.5
    t_move_end: float = 8.0
    t_end: float = 12.0
    start_xy: tuple[float, float] = (0.0, 0.0)

    @property
    def takeoff_end(self) -> float:
        return self.t_climb

    def reference(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Position reference and velocity feedforward at time t."""
        x0, y0 = self.start_xy
        tx, ty, tz = self.target
        if t <= self.t_ramp:
            return np.array([x0, y0, 0.0]), np.zeros(3)
        if t <= self.t_climb:
            dur = self.t_climb - self.t_ramp
            s, ds = _smoothstep((t - self.t_ramp) / dur, dur)
            return (np.array([x0, y0, s * self.hover_height]),
                    np.array([0.0, 0.0, ds * self.hover_height]))
        if t <= self.t_move_start:
            return np.array([x0, y0, self.hover_height]), np.zeros(3)
        if t <= self.t_move_end:
            dur = self.t_move_end - self.t_move_start
            s, ds = _smoothstep((t - self.t_move_start) / dur, dur)
            start = np.array([x0, y0, self.hover_height])
            end = np.array([tx, ty, tz])
            return start + s * (end - start), ds * (end - start)
        return np.array([tx, ty, tz]), np.zeros(3)


@dataclass(frozen=True)
class TorquePulse:
    t_start: float
    t_end: float
    torque: tuple[float, float, float]


def disturbance_torque(pulses, t: float) -> np.ndarray:
    total = np.zeros(3)
    for p in pulses:
        if p.t_start <= t < p.t_end:
            total = total + np.asarray(p.torque, dtype=float)
    return total


# ---------------------------------------------------------------------------
# flight runner
# ---------------------------------------------------------------------------

@dataclass
class FlightLog:
    times: np.ndarray
    positions: np.ndarray          # tracked payload-origin point, world
    velocities: np.ndarray
    eulers: np.ndarray
    references: np.ndarray
    thrusts: np.ndarray
    disturbances: np.ndarray
    verdict: str                   # "completed" | "dropped" | "aborted"
    drop_time: float | None
    rmse: np.ndarray               # per-axis tracking error after takeoff
    peak_tilt: float               # max(|roll|, |pitch|) overall
    takeoff_peak_tilt: float       # same during the takeoff window
    final_position: np.ndarray
    max_quat_drift: float

    @property
    def dropped(self) -> bool:
        return self.verdict == "dropped"


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 1.0e-3
    log_rate: float = 100.0
    ground: bool = True
    # equal-thrust ramp peak as a fraction of hover thrust; > 1 carries the
    # open-loop phase through lift-off, which is when imbalance tips the slab
    ramp_fraction: float = 1.2
    linear_model: bool = False


def _linear_derivative(pos, vel, euler, omega, thrusts, disturbance, dyn: AssemblyDynamics):
    total = dyn.thrust_coeff * float(np.sum(thrusts))
    acc = np.array([dyn.gravity * euler[1], -dyn.gravity * euler[0],
                    total / dyn.mass - dyn.gravity])
    torque = np.zeros(3)
    torque[0] = dyn.thrust_coeff * float(np.sum(dyn.thrust_offsets[:, 1] * thrusts))
    torque[1] = -dyn.thrust_coeff * float(np.sum(dyn.thrust_offsets[:, 0] * thrusts))
    torque[2] = dyn.torque_coeff * float(np.sum(dyn.spin_signs * thrusts))
    torque = torque + disturbance
    omega_dot = dyn.inv_inertia @ torque
    return vel, acc, omega.copy(), omega_dot


def _linear_step(pos, vel, euler, omega, thrusts, disturbance, dyn, dt):
    def f(p, v, e, w):
        return _linear_derivative(p, v, e, w, thrusts, disturbance, dyn)

    k1 = f(pos, vel, euler, omega)
    k2 = f(pos + 0.5 * dt * k1[0], vel + 0.5 * dt * k1[1], euler + 0.5 * dt * k1[2], omega + 0.5 * dt * k1[3])
    k3 = f(pos + 0.5 * dt * k2[0], vel + 0.5 * dt * k2[1], euler + 0.5 * dt * k2[2], omega + 0.5 * dt * k2[3])
    k4 = f(pos + dt * k3[0], vel + dt * k3[1], euler + dt * k3[2], omega + dt * k3[3])
    return (pos + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            vel + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            euler + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
            omega + dt / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]))


def run_flight(payload: PayloadModel, formation: Formation, true_hypothesis,
               est_hypothesis, trajectory: TrajectorySpec, pulses,
               controller_config: ControllerConfig,
               sim: SimConfig = SimConfig()) -> FlightLog:
    """Fly the closed loop until the horizon, a drop, or a NaN state.

    True mass properties drive the dynamics; the controller only sees the
    estimate (gravity compensation, torque scaling, mixer geometry).
    """
    true_props = assembly_inertia(payload, formation, true_hypothesis)
    dyn = make_dynamics(payload, formation, true_props, ground=sim.ground)

    controller = CascadedPid(controller_config)
    pinv = np.linalg.pinv(allocation_matrix(formation))

    # tracked point: payload-frame origin, expressed relative to the true COM
    origin_offset = np.array([-true_props.com[0], -true_props.com[1], 0.0])

    dt = sim.physics_dt
    n_steps = int(round(trajectory.t_end / dt))
    ctrl_every = max(1, int(round(1.0 / (controller_config.inner_rate * dt))))
    log_every = max(1, int(round(1.0 / (sim.log_rate * dt))))

    rest_z = -true_props.mass * payload.gravity / dyn.contact_stiffness if sim.ground else 0.0
    state = RigidBodyState(
        position=np.array([true_props.com[0], true_props.com[1], rest_z]),
        velocity=np.zeros(3),
        quaternion=np.array([1.0, 0.0, 0.0, 0.0]),
        angular_velocity=np.zeros(3),
    )
    euler_lin = np.zeros(3)

    hover_each = controller_config.est_mass * payload.gravity / formation.n_robots
    thrusts = np.zeros(formation.n_robots)

    rows = {k: [] for k in ("t", "pos", "vel", "euler", "ref", "u", "dist")}
    verdict, drop_time = "completed", None
    max_drift = 0.0

    for step in range(n_steps + 1):
        t = step * dt
        pos_ref, vel_ff = trajectory.reference(t)

        if sim.linear_model:
            euler = euler_lin.copy()
            rot = euler_to_rot(euler)
        else:
            euler = state.euler
            rot = quat_to_rot(state.quaternion)
        tracked = state.position + rot @ origin_offset
        tracked_vel = state.velocity + np.cross(rot @ state.angular_velocity, rot @ origin_offset)

        if step % ctrl_every == 0:
            if t < trajectory.t_ramp:
                level = sim.ramp_fraction * hover_each * (t / trajectory.t_ramp)
                thrusts = np.full(formation.n_robots, level)
            else:
                wrench = controller.step(tracked, tracked_vel, euler,
                                         state.angular_velocity, pos_ref, vel_ff)
                thrusts, _ = mix(wrench, formation, controller_config.thrust_limit, pinv)

        dist = disturbance_torque(pulses, t)

        if step % log_every == 0:
            rows["t"].append(t)
            rows["pos"].append(tracked.copy())
            rows["vel"].append(tracked_vel.copy())
            rows["euler"].append(euler.copy())
            rows["ref"].append(pos_ref.copy())
            rows["u"].append(thrusts.copy())
            rows["dist"].append(dist.copy())
            if max(abs(euler[0]), abs(euler[1])) > DROP_ANGLE:
                verdict, drop_time = "dropped", t
                break

        if not np.all(np.isfinite(state.position)):
            verdict, drop_time = "aborted", t
            break

        if step == n_steps:
            break
        if sim.linear_model:
            p, v, e, w = _linear_step(state.position, state.velocity, euler_lin,
                                      state.angular_velocity, thrusts, dist, dyn, dt)
            state.position, state.velocity, euler_lin, state.angular_velocity = p, v, e, w
        else:
            state, drift = dynamics_step(state, thrusts, dist, dyn, dt)
            max_drift = max(max_drift, drift)

    times = np.array(rows["t"])
    positions = np.array(rows["pos"])
    eulers = np.array(rows["euler"])
    refs = np.array(rows["ref"])

    after_takeoff = times >= trajectory.takeoff_end
    err = positions - refs
    if np.any(after_takeoff) and verdict == "completed":
        rmse = np.sqrt(np.mean(err[after_takeoff] ** 2, axis=0))
    else:
        rmse = np.full(3, np.nan)
    tilt = np.max(np.abs(eulers[:, :2]), axis=1)
    takeoff_mask = times <= trajectory.takeoff_end

    return FlightLog(
        times=times,
        positions=positions,
        velocities=np.array(rows["vel"]),
        eulers=eulers,
        references=refs,
        thrusts=np.array(rows["u"]),
        disturbances=np.array(rows["dist"]),
        verdict=verdict,
        drop_time=drop_time,
        rmse=rmse,
        peak_tilt=float(np.max(tilt)),
        takeoff_peak_tilt=float(np.max(tilt[takeoff_mask])) if np.any(takeoff_mask) else 0.0,
        final_position=positions[-1].copy(),
        max_quat_drift=max_drift,
    )
