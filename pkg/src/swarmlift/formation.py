"""Flight attachment-position selection on the payload rail.

The per-robot thrust-to-moment map is a 3 x n matrix built from body-frame
attachment coordinates (origin at the estimated COM): two rows scale the
coordinates by the thrust coefficient, the third holds signed torque
coefficients from rotor spin direction. Maximizing det(B B^T) maximizes the
attitude controllability volume; two balance constraints force the robot
centroid onto the estimated COM so equal thrust at takeoff produces no
roll/pitch moment.

The search runs over rail arc-length coordinates (robots cannot leave the
rail) with a Nelder-Mead core, an escalating exterior penalty for the
constraints, random-seeded multi-starts, and a final linear polish that
zeros the balance sums exactly whenever the local rail segments allow it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .payload import ConfigurationError, PayloadModel

DEFAULT_THRUST_COEFF = 1.0
DEFAULT_TORQUE_COEFF = 0.01
DEFAULT_MIN_SPACING = 0.15

# roundoff allowance when the configured balance tolerance is exactly zero:
# coordinate sums of ~10 robots cannot land closer to zero than ~1e-15
_FLOAT_BALANCE_SLACK = 1e-13


@dataclass(frozen=True)
class Formation:
    """Accepted set of attachment positions with the derived input matrix."""

    arc_positions: np.ndarray       # (n,) rail arc coordinates, sorted
    positions: np.ndarray           # (n, 2) payload-frame coordinates
    signs: np.ndarray               # (n,) rotor spin signs, +1 / -1
    thrust_coeff: float
    torque_coeff: float
    com: np.ndarray                 # (2,) body-frame origin used for the matrix
    input_matrix: np.ndarray        # 3 x n

    @property
    def n_robots(self) -> int:
        return len(self.signs)

    def balance_residuals(self) -> np.ndarray:
        return np.abs(np.sum(self.input_matrix[:2], axis=1))


@dataclass(frozen=True)
class OptimizationReport:
    objective: float
    balance_residuals: np.ndarray
    iterations: int
    restarts_used: int
    mode: str
    feasible: bool


def build_input_matrix(positions, signs, thrust_coeff: float, torque_coeff: float, com) -> np.ndarray:
    """Rows: thrust_coeff * (x - com_x), thrust_coeff * (y - com_y), sign * torque_coeff."""
    pos = np.asarray(positions, dtype=float)
    rel = pos - np.asarray(com, dtype=float)[None, :]
    signs = np.asarray(signs, dtype=float)
    return np.vstack([thrust_coeff * rel[:, 0], thrust_coeff * rel[:, 1], signs * torque_coeff])


def gramian_objective(matrix: np.ndarray) -> float:
    """det(B B^T); the controllability Gramian volume when the state matrix ~ 0."""
    b = np.asarray(matrix, dtype=float)
    return float(np.linalg.det(b @ b.T))


def alternating_signs(n: int) -> np.ndarray:
    return np.array([1.0 if k % 2 == 0 else -1.0 for k in range(n)])


def _make_formation(payload: PayloadModel, arcs, signs, com,
                    thrust_coeff, torque_coeff) -> Formation:
    arcs = np.array([payload.rail.wrap(s) for s in np.asarray(arcs, dtype=float)])
    order = np.argsort(arcs, kind="stable")
    arcs = arcs[order]
    signs = np.asarray(signs, dtype=float)[order]
    positions = payload.rail.points_at(arcs)
    com = np.asarray(com, dtype=float)
    matrix = build_input_matrix(positions, signs, thrust_coeff, torque_coeff, com)
    return Formation(arcs, positions, signs, float(thrust_coeff), float(torque_coeff),
                     com, matrix)


def even_formation(payload: PayloadModel, n_robots: int, com=(0.0, 0.0),
                   start_arc: float = 0.0,
                   thrust_coeff: float = DEFAULT_THRUST_COEFF,
                   torque_coeff: float = DEFAULT_TORQUE_COEFF) -> Formation:
    """Robots spaced evenly by arc length; the baseline flight layout."""
    if n_robots < 2:
        raise ConfigurationError("need at least two robots")
    arcs = start_arc + np.arange(n_robots) * (payload.rail.length / n_robots)
    return _make_formation(payload, arcs, alternating_signs(n_robots), com,
                           thrust_coeff, torque_coeff)


def _min_arc_gap(payload: PayloadModel, arcs: np.ndarray) -> float:
    srt = np.sort([payload.rail.wrap(s) for s in arcs])
    gaps = np.diff(srt)
    if payload.rail.closed:
        gaps = np.append(gaps, payload.rail.length - (srt[-1] - srt[0]))
    elif len(gaps) == 0:
        return np.inf
    return float(np.min(gaps)) if len(gaps) else np.inf


def _balance_sums(payload: PayloadModel, arcs: np.ndarray, com) -> np.ndarray:
    pos = payload.rail.points_at(arcs)
    return np.sum(pos - np.asarray(com)[None, :], axis=0)


def _polish_balance(payload: PayloadModel, arcs: np.ndarray, com,
                    min_spacing: float, max_steps: int = 12,
                    movers=None, target: float = 0.0) -> np.ndarray:
    """Nudge robots along their rail segments to drive the balance sums
    down to ``target`` (zero by default).

    The sums are piecewise linear in the arc coordinates, so the minimum-norm
    least-squares step on the local tangents lands essentially exactly; the
    step is halved if it would break the spacing floor. ``movers`` restricts
    which robots may shift, which keeps deliberately extreme layouts extreme.
    """
    arcs = np.array([payload.rail.wrap(s) for s in arcs], dtype=float)
    eps = 1e-7
    movers = np.arange(len(arcs)) if movers is None else np.asarray(movers, dtype=int)
    stop = max(target, 1e-13)

    def tangent(s):
        p0 = payload.rail.point_at(s - eps)
        p1 = payload.rail.point_at(s + eps)
        t = (p1 - p0) / (2 * eps)
        n = np.linalg.norm(t)
        return t / n if n > 0 else t

    for _ in range(max_steps):
        residual = _balance_sums(payload, arcs, com)
        if np.max(np.abs(residual)) <= stop:
            break
        jac = np.array([tangent(arcs[i]) for i in movers]).T   # 2 x m
        sub_step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        step = np.zeros(len(arcs))
        step[movers] = sub_step
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 0.25 * payload.rail.length:
            break
        applied = False
        for _ in range(4):
            trial = np.array([payload.rail.wrap(s + d) for s, d in zip(arcs, step)])
            if _min_arc_gap(payload, trial) >= 0.9 * min_spacing:
                new_res = _balance_sums(payload, trial, com)
                if np.max(np.abs(new_res)) < np.max(np.abs(residual)):
                    arcs = trial
                    applied = True
                break
            step = 0.5 * step
        if not applied:
            break
    return arcs


def _penalized_objective(payload: PayloadModel, com, signs, thrust_coeff, torque_coeff,
                         min_spacing, weight, epsilon=0.0):
    rail = payload.rail
    # only residual beyond the configured tolerance is an actual violation
    window = 0.9 * epsilon / max(thrust_coeff, 1e-12)

    def cost(arcs):
        arcs = np.array([rail.wrap(s) for s in arcs])
        pos = rail.points_at(arcs)
        matrix = build_input_matrix(pos, signs, thrust_coeff, torque_coeff, com)
        objective = gramian_objective(matrix)
        bal = np.sum(pos - np.asarray(com)[None, :], axis=0)
        excess = np.maximum(0.0, np.abs(bal) - window)
        penalty = float(excess @ excess)
        srt = np.sort(arcs)
        gaps = np.diff(srt)
        if rail.closed and len(srt) > 1:
            gaps = np.append(gaps, rail.length - (srt[-1] - srt[0]))
        short = np.maximum(0.0, min_spacing - gaps)
        penalty += float(short @ short)
        return -objective + weight * penalty

    return cost


def _pack_anchor_arcs(payload: PayloadModel, com, max_anchors: int = 4) -> list[float]:
    """Rail arcs of the footprint corners farthest from the COM estimate.

    Spread maximization under the zero-mean balance constraint concentrates
    robots around the far extremes, with the split ratio doing the balancing;
    corners are extreme in both coordinates at once.
    """
    rel = payload.footprint - np.asarray(com)[None, :]
    order = np.argsort(-np.linalg.norm(rel, axis=1), kind="stable")
    anchors = [payload.rail.arc_of(payload.footprint[i]) for i in order[:max_anchors]]
    return sorted(anchors)


def _packed_seed(payload, anchors, counts, min_spacing) -> np.ndarray | None:
    """Clusters of robots packed tightly around each anchor arc."""
    rail = payload.rail
    arcs = []
    step = 1.02 * min_spacing
    for anchor, count in zip(anchors, counts):
        offsets = (np.arange(count) - (count - 1) / 2.0) * step
        arcs.extend(rail.wrap(anchor + d) for d in offsets)
    arcs = np.array(arcs)
    if _min_arc_gap(payload, arcs) < min_spacing:
        return None
    return arcs


def _balanced_pack_seed(payload, com, anchors, counts, min_spacing):
    """Packed layout driven to exact balance by its least extreme robots."""
    seed = _packed_seed(payload, anchors, counts, min_spacing)
    if seed is None:
        return None
    pts = payload.rail.points_at(seed)
    rel = np.linalg.norm(pts - np.asarray(com)[None, :], axis=1)
    movers = list(np.argsort(rel, kind="stable")[:3])
    # wall-parked robots are the only y-movers; always give the solver one
    eps = 1e-6
    for i in range(len(seed)):
        p0 = payload.rail.point_at(seed[i] - eps)
        p1 = payload.rail.point_at(seed[i] + eps)
        if abs(p1[1] - p0[1]) > abs(p1[0] - p0[0]) and i not in movers:
            movers.append(i)
            break
    arcs = _polish_balance(payload, seed, com, min_spacing, movers=np.array(movers))
    return arcs


def _count_splits(n_robots: int, n_anchors: int):
    """All ways to distribute the robots over the pack anchors."""
    if n_anchors == 1:
        yield (n_robots,)
        return
    for first in range(n_robots + 1):
        for rest in _count_splits(n_robots - first, n_anchors - 1):
            yield (first,) + rest


def _score_layout(payload, com, arcs, signs, thrust_coeff, torque_coeff,
                  min_spacing, epsilon):
    pos = payload.rail.points_at(np.asarray(arcs, dtype=float))
    matrix = build_input_matrix(pos, signs, thrust_coeff, torque_coeff, com)
    residuals = np.abs(np.sum(matrix[:2], axis=1))
    objective = gramian_objective(matrix)
    feasible = bool(np.all(residuals <= epsilon + _FLOAT_BALANCE_SLACK)
                    and _min_arc_gap(payload, arcs) >= min_spacing - 1e-9)
    return feasible, objective, residuals


def _solver_edges(payload: PayloadModel):
    """All (horizontal, vertical) rail-segment pairs usable as balance solvers."""
    rail = payload.rail
    horizontals, verticals = [], []
    for i in range(len(rail._seg_len)):
        d = rail._seg_dir[i] / rail._seg_len[i]
        if abs(d[0]) > 0.9:
            horizontals.append(i)
        if abs(d[1]) > 0.9:
            verticals.append(i)
    return [(h, v) for h in horizontals for v in verticals]


def spaced_arc_samples(rng, length, n, spacing, m):
    """m uniform draws of n cyclically ordered arcs with gaps >= spacing.

    Sorts uniforms in the gap-reduced interval and re-inflates, then applies
    a random rotation: every sample honours the spacing floor exactly.
    """
    free = length - n * spacing
    if free <= 0:
        raise ConfigurationError("spacing floor leaves no room on the rail")
    u = np.sort(rng.uniform(0.0, free, size=(m, n)), axis=1)
    arcs = u + spacing * np.arange(n)[None, :]
    arcs = np.mod(arcs + rng.uniform(0.0, length, size=(m, 1)), length)
    return arcs


def batched_objective(payload: PayloadModel, com, arcs, thrust_coeff,
                      torque_coeff):
    """det(B B^T) for many arc layouts at once, spin signs by rail order."""
    m, n = arcs.shape
    pts = payload.rail.points_at(arcs.ravel()).reshape(m, n, 2)
    order = np.argsort(arcs, axis=1)
    signs = np.where(np.argsort(order, axis=1) % 2 == 0, 1.0, -1.0)
    rel = pts - np.asarray(com, dtype=float)[None, None, :]
    b = np.stack([thrust_coeff * rel[:, :, 0],
                  thrust_coeff * rel[:, :, 1],
                  torque_coeff * signs], axis=1)
    return np.linalg.det(np.einsum("bij,bkj->bik", b, b))


def _exact_balance_presample(payload: PayloadModel, com, n_robots, count, rng,
                             min_spacing, thrust_coeff, torque_coeff,
                             total=40_000, batch=8192):
    """Random spaced layouts driven to exact balance by two edge-bound robots.

    One robot rides a horizontal rail segment (its position solves the
    pitch-balance sum) and one a vertical segment (roll). The rest are drawn
    with the spacing floor built in; survivors are ranked by the true
    objective and the best feed the local search as seeds.
    """
    combos = _solver_edges(payload)
    if not combos:
        return []
    rail = payload.rail
    com = np.asarray(com, dtype=float)
    scored: list[tuple[float, np.ndarray]] = []
    batches = max(1, total // batch)
    for hi, vi in combos:
        h_start, h_dir, h_len = rail._seg_start[hi], rail._seg_dir[hi], rail._seg_len[hi]
        v_start, v_dir, v_len = rail._seg_start[vi], rail._seg_dir[vi], rail._seg_len[vi]
        h_y = h_start[1] + 0.5 * h_dir[1]
        v_x = v_start[0] + 0.5 * v_dir[0]
        lo_x, hi_x = sorted((h_start[0], h_start[0] + h_dir[0]))
        lo_y, hi_y = sorted((v_start[1], v_start[1] + v_dir[1]))
        for _ in range(max(1, batches // len(combos))):
            arcs_free = spaced_arc_samples(rng, rail.length, n_robots - 2,
                                           min_spacing, batch)
            pts = rail.points_at(arcs_free.ravel()).reshape(batch, n_robots - 2, 2)
            x_solved = n_robots * com[0] - pts[:, :, 0].sum(axis=1) - v_x
            y_solved = n_robots * com[1] - pts[:, :, 1].sum(axis=1) - h_y
            ok = (x_solved >= lo_x) & (x_solved <= hi_x) & \
                 (y_solved >= lo_y) & (y_solved <= hi_y)
            if not np.any(ok):
                continue
            x_solved, y_solved = x_solved[ok], y_solved[ok]
            arc_h = rail._cum[hi] + (x_solved - h_start[0]) / h_dir[0] * h_len
            arc_v = rail._cum[vi] + (y_solved - v_start[1]) / v_dir[1] * v_len
            arcs = np.column_stack([arcs_free[ok], arc_h, arc_v])
            srt = np.sort(arcs, axis=1)
            gaps = np.minimum(np.diff(srt, axis=1).min(axis=1),
                              rail.length - (srt[:, -1] - srt[:, 0]))
            arcs = arcs[gaps >= min_spacing]
            if len(arcs) == 0:
                continue
            dets = batched_objective(payload, com, arcs, thrust_coeff, torque_coeff)
            order = np.argsort(dets)[::-1][:count]
            for i in order:
                scored.append((float(dets[i]), arcs[i]))
    scored.sort(key=lambda item: -item[0])
    return [arcs for _, arcs in scored[:count]]


def _optimize_free(payload: PayloadModel, com, n_robots, epsilon, rng,
                   restarts, min_spacing, thrust_coeff, torque_coeff,
                   presample: int = 160_000):
    """Seeded multistart: end-pack layouts and exactly balanced random draws
    ranked by a penalized score, Nelder-Mead refinement, then a final polish.

    The constrained optimum packs robots against the far ends of the rail
    (spread maximization under a zero-mean constraint is bimodal), so pure
    local search from an even layout stalls; the seed pool puts the right
    basins in reach and the penalty runs do the fine work.
    """
    rail = payload.rail
    signs = alternating_signs(n_robots)
    even_arcs = np.arange(n_robots) * (rail.length / n_robots)
    rank_cost = _penalized_objective(payload, com, signs, thrust_coeff,
                                     torque_coeff, min_spacing, 1e3, epsilon)
    polish_target = 0.45 * epsilon / max(thrust_coeff, 1e-12)

    seeds = [even_arcs]
    anchors = _pack_anchor_arcs(payload, com)
    for counts in _count_splits(n_robots, len(anchors)):
        seed = _balanced_pack_seed(payload, com, anchors, counts, min_spacing)
        if seed is not None:
            seeds.append(seed)
    seeds.extend(_exact_balance_presample(payload, com, n_robots,
                                          max(restarts, 6), rng, min_spacing,
                                          thrust_coeff, torque_coeff,
                                          total=presample))
    # balance-polished random layouts cover rails where the edge-solver
    # construction starves (strongly offset COMs)
    polished = []
    for arcs in spaced_arc_samples(rng, rail.length, n_robots, min_spacing, 256):
        arcs = _polish_balance(payload, np.sort(arcs), com, min_spacing,
                               target=polish_target)
        ok, obj, _ = _score_layout(payload, com, arcs, signs, thrust_coeff,
                                   torque_coeff, min_spacing, epsilon)
        if ok:
            polished.append((obj, arcs))
    polished.sort(key=lambda t: -t[0])
    seeds.extend(arcs for _, arcs in polished[: max(restarts, 6)])
    seeds.sort(key=rank_cost)

    best = None
    total_iters = 0

    def consider(arcs):
        nonlocal best
        arcs = np.array([rail.wrap(s) for s in arcs])
        ok, obj, resid = _score_layout(payload, com, arcs, signs, thrust_coeff,
                                       torque_coeff, min_spacing, epsilon)
        entry = (ok, obj, arcs, signs, resid)
        if best is None or (entry[0], entry[1]) > (best[0], best[1]):
            best = entry

    def refine(start, weights, budget):
        nonlocal total_iters
        arcs = np.asarray(start, dtype=float)
        for weight in weights:
            cost = _penalized_objective(payload, com, signs, thrust_coeff,
                                        torque_coeff, min_spacing, weight, epsilon)
            res = minimize(cost, arcs, method="Nelder-Mead",
                           options={"maxiter": budget * n_robots, "xatol": 1e-10,
                                    "fatol": 1e-14, "adaptive": True})
            arcs = res.x
            total_iters += int(res.nit)
        consider(_polish_balance(payload, arcs, com, min_spacing,
                                 target=polish_target))

    def pattern_refine(arcs, steps=(0.08, 0.03, 0.01, 0.003, 0.001)):
        """Coordinate moves along the rail, re-balanced after every trial.

        Each accepted move keeps the layout exactly on the balance manifold
        (the other robots absorb the shift), so the determinant comparisons
        stay apples to apples; this slides robots onto binding spacing and
        corner limits that the simplex search approaches only asymptotically.
        """
        nonlocal total_iters
        arcs = np.array([rail.wrap(s) for s in arcs], dtype=float)
        _, val, _ = _score_layout(payload, com, arcs, signs, thrust_coeff,
                                  torque_coeff, min_spacing, epsilon)
        for step in steps:
            improving = True
            sweeps = 0
            while improving and sweeps < 12:
                improving = False
                sweeps += 1
                for i in range(n_robots):
                    for d in (step, -step):
                        trial = arcs.copy()
                        trial[i] = rail.wrap(trial[i] + d)
                        movers = np.array([j for j in range(n_robots) if j != i])
                        trial = _polish_balance(payload, trial, com, min_spacing,
                                                movers=movers, target=polish_target)
                        ok, obj, _ = _score_layout(payload, com, trial, signs,
                                                   thrust_coeff, torque_coeff,
                                                   min_spacing, epsilon)
                        total_iters += 1
                        if ok and obj > val * (1 + 1e-12):
                            arcs, val = trial, obj
                            improving = True
        consider(arcs)
        return arcs

    used = 0
    for start in seeds[:restarts]:
        used += 1
        consider(start)                      # a refined run must never lose to its seed
        refine(start, (1e4, 1e7, 1e10), budget=150)
    # a few wide-exploration runs guard against seed-pool blind spots
    for _ in range(max(2, restarts // 4)):
        used += 1
        refine(np.sort(rng.uniform(0.0, rail.length, size=n_robots)),
               (1e3, 1e6, 1e10), budget=200)
    # slide the front-runners onto their binding limits
    front = [best[2].copy()] if best is not None else []
    front.extend(np.asarray(s, dtype=float) for s in seeds[:5])
    for arcs in front:
        pattern_refine(arcs)
    return best, total_iters, used


def _symmetric_frame(payload: PayloadModel):
    """End walls and side-rail level of an axis-aligned rectangular payload."""
    xs, ys = payload.footprint[:, 0], payload.footprint[:, 1]
    return float(np.min(xs)), float(np.max(xs)), float(np.max(ys))


def _symmetric_layout(com, free_offsets, closing_sum, y_trim, x_lo, x_hi,
                      y_level) -> np.ndarray:
    """Trim duo on the end walls, COM pair, then mirrored pairs on the sides.

    The two end-wall robots sit at ``y_trim`` so equal thrust produces zero
    roll moment about the estimated COM even when its y offset is nonzero;
    the last mirrored pair closes the pitch balance exactly.
    """
    com_x = float(com[0])
    points = [(x_hi, y_trim), (x_lo, y_trim), (com_x, y_level), (com_x, -y_level)]
    xs = [com_x + e for e in free_offsets]
    xs.append(com_x + (closing_sum - float(np.sum(free_offsets))))
    for x in xs:
        points.append((x, y_level))
        points.append((x, -y_level))
    return np.asarray(points)


def _optimize_symmetric(payload: PayloadModel, com, n_robots, rng, restarts,
                        min_spacing, thrust_coeff, torque_coeff):
    """Exact-balance layout: four COM-decided positions plus mirrored pairs.

    The COM estimate fixes four robots (two end-wall trim positions and a
    side pair bracketing the COM); the remaining robots form mirrored side
    pairs whose x offsets are searched for the best controllability volume,
    with one offset eliminated by the pitch-balance constraint. Both balance
    sums are zero by construction, so the epsilon = 0 operating mode is
    satisfiable up to float roundoff.
    """
    if n_robots % 2 != 0 or n_robots < 6:
        raise ConfigurationError("symmetric mode needs an even robot count >= 6")
    x_lo, x_hi, y_level = _symmetric_frame(payload)
    margin = 5e-3
    com_x, com_y = float(com[0]), float(com[1])

    y_trim = n_robots * com_y / 2.0
    if abs(y_trim) > y_level - margin:
        raise ConfigurationError(
            "estimated COM y offset too large for end-wall roll trim")
    # the end walls sit symmetrically, so their pitch moments cancel up to the
    # COM offset; the mirrored side pairs absorb that remainder
    closing_sum = com_x - (x_lo + x_hi) / 2.0

    n_side_pairs = (n_robots - 4) // 2         # one of them is the closing pair
    n_free = n_side_pairs - 1

    def layout(free):
        return _symmetric_layout(com, free, closing_sum, y_trim, x_lo, x_hi, y_level)

    def arcs_of(points):
        return np.array([payload.rail.arc_of(p, tol=1e-6) for p in points])

    def valid(points):
        if np.any(points[:, 0] < x_lo - 1e-12) or np.any(points[:, 0] > x_hi + 1e-12):
            return False
        side = points[2:]
        if np.any(side[:, 0] < x_lo + margin) or np.any(side[:, 0] > x_hi - margin):
            return False
        return _min_arc_gap(payload, arcs_of(points)) >= min_spacing

    def cost(free):
        points = layout(free)
        if not valid(points):
            return 1e6 + float(np.sum(np.square(free)))
        matrix = build_input_matrix(points, _symmetric_signs(len(points)),
                                    thrust_coeff, torque_coeff, com)
        return -gramian_objective(matrix)

    span = x_hi - x_lo
    total_iters = 0
    best_free = np.zeros(n_free)
    if n_free > 0:
        best_val = cost(best_free)
        starts = [np.linspace(-span / 4, span / 4, n_free)]
        for _ in range(max(restarts - 1, 0)):
            starts.append(rng.uniform(-span / 2, span / 2, size=n_free))
        for s0 in starts:
            res = minimize(cost, s0, method="Nelder-Mead",
                           options={"maxiter": 2000, "xatol": 1e-12, "fatol": 1e-15,
                                    "adaptive": True})
            total_iters += int(res.nit)
            if res.fun < best_val:
                best_val, best_free = float(res.fun), res.x
    points = layout(best_free)
    if not valid(points):
        return None, total_iters, max(restarts, 1)
    signs = _symmetric_signs(len(points))
    arcs = arcs_of(points)
    matrix = build_input_matrix(points, signs, thrust_coeff, torque_coeff, com)
    residuals = np.abs(np.sum(matrix[:2], axis=1))
    objective = gramian_objective(matrix)
    feasible = bool(np.all(residuals <= _FLOAT_BALANCE_SLACK))
    return (feasible, objective, arcs, signs, residuals), total_iters, max(restarts, 1)


def _symmetric_signs(n: int) -> np.ndarray:
    """Opposite spin within each mirrored pair, orientation alternating by pair.

    Flipping the orientation pair-by-pair keeps the signed-torque row of the
    input matrix decorrelated from the roll row; if every top-edge robot spun
    the same way, yaw and roll moments would be produced by nearly parallel
    thrust patterns and the allocator would trade them at huge thrust cost.
    """
    signs = np.empty(n)
    for pair in range(n // 2):
        a = 1.0 if pair % 2 == 0 else -1.0
        signs[2 * pair] = a
        signs[2 * pair + 1] = -a
    if n % 2:
        signs[-1] = 1.0
    return signs


def optimize_formation(payload: PayloadModel, estimate, n_robots: int, epsilon: float,
                       mode: str = "free", rng: np.random.Generator | None = None,
                       restarts: int = 12, min_spacing: float = DEFAULT_MIN_SPACING,
                       thrust_coeff: float = DEFAULT_THRUST_COEFF,
                       torque_coeff: float = DEFAULT_TORQUE_COEFF,
                       ) -> tuple[Formation, OptimizationReport]:
    """Best feasible formation for the estimated payload parameters.

    ``estimate`` is the (com_x, com_y, mass) estimate; only the COM enters the
    geometry. ``mode`` is "free" (all positions searched) or "symmetric"
    (four COM-decided positions plus mirrored pairs, balance exact by
    construction).
    """
    if n_robots < 3:
        raise ConfigurationError("attitude control needs at least three robots")
    if epsilon < 0:
        raise ConfigurationError("balance tolerance must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(0)
    com = np.asarray(estimate, dtype=float)[:2]

    if mode == "free":
        best, iters, used = _optimize_free(payload, com, n_robots, epsilon, rng,
                                           restarts, min_spacing, thrust_coeff,
                                           torque_coeff)
    elif mode == "symmetric":
        best, iters, used = _optimize_symmetric(payload, com, n_robots, rng, restarts,
                                                min_spacing, thrust_coeff, torque_coeff)
    else:
        raise ConfigurationError(f"unknown formation mode {mode!r}")

    if best is None:
        raise ConfigurationError("no feasible symmetric layout for this COM estimate")

    feasible, objective, arcs, signs, residuals = best
    formation = _make_formation(payload, arcs, signs, com, thrust_coeff, torque_coeff)
    report = OptimizationReport(
        objective=gramian_objective(formation.input_matrix),
        balance_residuals=formation.balance_residuals(),
        iterations=iters,
        restarts_used=used,
        mode=mode,
        feasible=feasible,
    )
    return formation, report
