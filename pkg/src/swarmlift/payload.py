"""Payload geometry, attachment slots, and the hypothesis grid.

The payload is a flat slab resting on ground contacts, with a closed rail
running around its footprint. Robots clamp onto the rail, so every robot
position is a point on the rail polyline, addressed either by arc length
or by its 2-D coordinates in the payload frame.

Unknown physical parameters are the planar center-of-mass position and the
total mass. The estimator works on a discretized hypothesis set over these
three values, held here as a ParameterGrid with a probability vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81  # m/s^2

_ON_RAIL_TOL = 1e-9


class ConfigurationError(ValueError):
    """Raised when payload or grid configuration is inconsistent."""


# ---------------------------------------------------------------------------
# planar polygon / polyline helpers
# ---------------------------------------------------------------------------

def polygon_area(vertices: np.ndarray) -> float:
    """Signed area (positive for counter-clockwise vertex order)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a)
    return np.array([cx, cy])


def polygon_second_moments(vertices: np.ndarray) -> tuple[float, float, float]:
    """Area moments (Ixx=int y^2 dA, Iyy=int x^2 dA, Ixy=int xy dA) about the origin."""
    v = np.asarray(vertices, dtype=float)
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    cross = x0 * y1 - x1 * y0
    ixx = np.sum(cross * (y0 * y0 + y0 * y1 + y1 * y1)) / 12.0
    iyy = np.sum(cross * (x0 * x0 + x0 * x1 + x1 * x1)) / 12.0
    ixy = np.sum(cross * (x0 * y1 + 2 * x0 * y0 + 2 * x1 * y1 + x1 * y0)) / 24.0
    sign = 1.0 if polygon_area(v) >= 0 else -1.0
    return sign * float(ixx), sign * float(iyy), sign * float(ixy)


def point_in_polygon(point: np.ndarray, vertices: np.ndarray, tol: float = 1e-9) -> bool:
    """Even-odd test; points within ``tol`` of an edge count as inside."""
    px, py = float(point[0]), float(point[1])
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    inside = False
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        # distance to the edge segment
        ex, ey = x1 - x0, y1 - y0
        seg_len2 = ex * ex + ey * ey
        if seg_len2 > 0:
            t = max(0.0, min(1.0, ((px - x0) * ex + (py - y0) * ey) / seg_len2))
            dx, dy = px - (x0 + t * ex), py - (y0 + t * ey)
            if dx * dx + dy * dy <= tol * tol:
                return True
        if (y0 > py) != (y1 > py):
            x_cross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if px < x_cross:
                inside = not inside
    return inside


class RailPath:
    """Piecewise-linear path parameterized by arc length.

    Closed rails wrap around: arc coordinates are taken modulo the perimeter.
    """

    def __init__(self, vertices: np.ndarray, closed: bool = True):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ConfigurationError("rail needs at least two 2-D vertices")
        self.vertices = v
        self.closed = bool(closed)
        pts = np.vstack([v, v[:1]]) if closed else v
        seg = np.diff(pts, axis=0)
        self._seg_start = pts[:-1]
        self._seg_dir = seg
        self._seg_len = np.linalg.norm(seg, axis=1)
        if np.any(self._seg_len <= 0):
            raise ConfigurationError("rail has zero-length segment")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum[-1])

    def wrap(self, s: float) -> float:
        if self.closed:
            return float(np.mod(s, self.length))
        return float(np.clip(s, 0.0, self.length))

    def point_at(self, s: float) -> np.ndarray:
        s = self.wrap(float(s))
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(max(i, 0), len(self._seg_len) - 1)
        t = (s - self._cum[i]) / self._seg_len[i]
        return self._seg_start[i] + t * self._seg_dir[i]

    def points_at(self, s: np.ndarray) -> np.ndarray:
        """Vectorized point lookup; accepts any array of arc coordinates."""
        s = np.asarray(s, dtype=float).ravel()
        if self.closed:
            s = np.mod(s, self.length)
        else:
            s = np.clip(s, 0.0, self.length)
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1,
                      0, len(self._seg_len) - 1)
        t = (s - self._cum[idx]) / self._seg_len[idx]
        return self._seg_start[idx] + t[:, None] * self._seg_dir[idx]

    def arc_of(self, point: np.ndarray, tol: float = 1e-6) -> float:
        """Arc coordinate of a point lying on the rail (nearest-point projection)."""
        p = np.asarray(point, dtype=float)
        best_s, best_d = 0.0, np.inf
        for i in range(len(self._seg_len)):
            d = self._seg_dir[i]
            t = np.clip(np.dot(p - self._seg_start[i], d) / (self._seg_len[i] ** 2), 0.0, 1.0)
            q = self._seg_start[i] + t * d
            dist = float(np.linalg.norm(p - q))
            if dist < best_d:
                best_d = dist
                best_s = self._cum[i] + t * self._seg_len[i]
        if best_d > tol:
            raise ConfigurationError(f"point {p} is {best_d:.3g} m off the rail")
        return self.wrap(best_s)

    def arc_distance(self, s0: float, s1: float) -> float:
        """Shortest separation along the rail between two arc coordinates."""
        if not self.closed:
            return abs(self.wrap(s1) - self.wrap(s0))
        d = abs(self.wrap(s1) - self.wrap(s0))
        return min(d, self.length - d)


# ---------------------------------------------------------------------------
# wrench algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Wrench:
    """Reduced planar wrench: vertical force plus roll/pitch torques.

    Torques follow the right-handed convention about world x and y: an
    upward force F at (x, y) contributes tx = y*F and ty = -x*F. Horizontal
    force components vanish in the grounded cantilever setting, so three
    numbers suffice.
    """

    fz: float
    tx: float
    ty: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.fz, self.tx, self.ty])):
            raise ValueError("wrench components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.fz, self.tx, self.ty])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.fz + other.fz, self.tx + other.tx, self.ty + other.ty)

    def __mul__(self, k: float) -> "Wrench":
        return Wrench(self.fz * k, self.tx * k, self.ty * k)

    __rmul__ = __mul__


def unit_lift_wrench(position) -> Wrench:
    """Wrench of a unit upward force applied at ``position``."""
    x, y = float(position[0]), float(position[1])
    return Wrench(1.0, y, -x)


def gravity_wrench(hypothesis, gravity: float = GRAVITY) -> Wrench:
    """Weight wrench of a payload with COM (h[0], h[1]) and mass h[2]."""
    com_x, com_y, mass = (float(v) for v in hypothesis)
    if mass <= 0:
        raise ValueError("payload mass must be positive")
    return unit_lift_wrench((com_x, com_y)) * (-mass * gravity)


def robot_weight_wrench(position, robot_mass: float, gravity: float = GRAVITY) -> Wrench:
    """Weight wrench of one robot clamped at ``position``."""
    return unit_lift_wrench(position) * (-float(robot_mass) * gravity)


def thrust_wrench(position) -> Wrench:
    """Normalized (per-newton) thrust wrench at ``position``; scales linearly."""
    return unit_lift_wrench(position)


# ---------------------------------------------------------------------------
# payload model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PayloadModel:
    """Geometry and robot bookkeeping for one payload.

    All coordinates are payload-frame meters. ``candidates`` are the
    attachment slots used during estimation, ordered by rail arc length so
    that slot adjacency is meaningful.
    """

    footprint: np.ndarray          # (n, 2) polygon vertices
    rail: RailPath
    candidates: np.ndarray          # (m, 2) slot coordinates on the rail
    contacts: np.ndarray            # (k, 2) ground contact points
    robot_mass: float               # kg
    robot_max_thrust: float         # N per robot
    n_robots: int
    gravity: float = GRAVITY
    com_region: np.ndarray | None = None   # feasible-COM polygon; default footprint
    candidate_arcs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fp = np.asarray(self.footprint, dtype=float)
        if fp.ndim != 2 or fp.shape[1] != 2 or len(fp) < 3:
            raise ConfigurationError("footprint must be a polygon with >= 3 vertices")
        object.__setattr__(self, "footprint", fp)
        object.__setattr__(self, "candidates", np.asarray(self.candidates, dtype=float))
        object.__setattr__(self, "contacts", np.asarray(self.contacts, dtype=float))
        if self.robot_max_thrust <= 0:
            raise ConfigurationError("robot_max_thrust must be positive")
        if self.robot_mass < 0:
            raise ConfigurationError("robot_mass must be nonnegative")
        if self.n_robots < 2:
            raise ConfigurationError("need at least two robots")
        if len(self.candidates) < 2:
            raise ConfigurationError("need at least two attachment candidates")
        arcs = []
        for c in self.candidates:
            arcs.append(self.rail.arc_of(c, tol=_ON_RAIL_TOL * 10 + 1e-7))
        arcs = np.array(arcs)
        order_ok = np.all(np.diff(arcs) > 0)
        if not order_ok:
            raise ConfigurationError("candidates must be ordered by rail arc length")
        object.__setattr__(self, "candidate_arcs", arcs)
        for p in self.contacts:
            if not point_in_polygon(p, fp, tol=1e-9):
                raise ConfigurationError(f"contact {p} lies outside the footprint")
        if self.com_region is not None:
            object.__setattr__(self, "com_region", np.asarray(self.com_region, dtype=float))

    @property
    def feasible_com_polygon(self) -> np.ndarray:
        return self.footprint if self.com_region is None else self.com_region

    def com_feasible(self, com_x: float, com_y: float) -> bool:
        return point_in_polygon((com_x, com_y), self.feasible_com_polygon)


def evenly_spaced_candidates(rail: RailPath, count: int, start_arc: float = 0.0) -> np.ndarray:
    """``count`` slots spaced uniformly by arc length, starting at ``start_arc``."""
    if count < 2:
        raise ConfigurationError("need at least two candidate slots")
    arcs = start_arc + np.arange(count) * (rail.length / count)
    return rail.points_at(arcs)


def adjacent_pairs(candidates, closed: bool = True) -> list[tuple[int, int]]:
    """Index pairs of rail-adjacent slots; rings include the closing pair.

    The pair count depends only on the slot layout, never on the robot count.
    """
    n = len(candidates)
    if n < 2:
        raise ConfigurationError("need at least two candidates for pairing")
    pairs = [(k, k + 1) for k in range(n - 1)]
    if closed and n > 2:
        pairs.append((n - 1, 0))
    return pairs


# ---------------------------------------------------------------------------
# hypothesis grid
# ---------------------------------------------------------------------------

@dataclass
class ParameterGrid:
    """Discrete hypothesis set over (com_x, com_y, mass) with probabilities.

    ``points`` is the flat ordered hypothesis list; ``axis_indices`` maps each
    point back to its per-axis grid index so neighborhoods can be taken in
    index space even after infeasible points were dropped.
    """

    ranges: np.ndarray            # (3, 2) per-axis [min, max]
    resolutions: np.ndarray       # (3,)
    axis_values: list[np.ndarray]
    points: np.ndarray            # (n, 3)
    axis_indices: np.ndarray      # (n, 3) int
    probability: np.ndarray       # (n,)

    def normalized(self, probability: np.ndarray) -> "ParameterGrid":
        total = float(np.sum(probability))
        if total <= 0:
            raise ValueError("cannot normalize an all-zero probability vector")
        return ParameterGrid(self.ranges, self.resolutions, self.axis_values,
                             self.points, self.axis_indices, probability / total)

    def check_normalized(self, tol: float = 1e-9) -> None:
        dev = abs(float(np.sum(self.probability)) - 1.0)
        if dev > tol:
            raise ValueError(f"probability sum off by {dev:.3g}")

    @property
    def n_points(self) -> int:
        return len(self.points)


def _axis_points(lo: float, hi: float, res: float) -> np.ndarray:
    """min + k*res for k = 0..floor((hi-lo)/res); a max not hit exactly is dropped."""
    if hi < lo:
        raise ConfigurationError("axis max below min")
    if res <= 0:
        raise ConfigurationError("axis resolution must be positive")
    count = int(np.floor((hi - lo) / res + 1e-9)) + 1
    return lo + res * np.arange(count)


def build_parameter_grid(ranges, resolutions, payload: PayloadModel) -> ParameterGrid:
    """Uniform prior over all on-grid hypotheses whose COM is feasible."""
    ranges = np.asarray(ranges, dtype=float).reshape(3, 2)
    resolutions = np.asarray(resolutions, dtype=float).reshape(3)
    axis_values = [_axis_points(ranges[i, 0], ranges[i, 1], resolutions[i]) for i in range(3)]

    points, idx = [], []
    for i, x in enumerate(axis_values[0]):
        for j, y in enumerate(axis_values[1]):
            if not payload.com_feasible(x, y):
                continue
            for k, m in enumerate(axis_values[2]):
                points.append((x, y, m))
                idx.append((i, j, k))
    if not points:
        raise ConfigurationError("no feasible hypotheses after COM filtering")
    points = np.array(points)
    idx = np.array(idx, dtype=int)
    prob = np.full(len(points), 1.0 / len(points))
    return ParameterGrid(ranges, resolutions, axis_values, points, idx, prob)
