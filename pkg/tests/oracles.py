"""Independent oracles shared by the unit and acceptance tests.

The formation oracle is a dense random search, deliberately separate from the
production optimizer: it enumerates the robot-count splits over the rail
edges that can reach the balance window, samples spacing-valid placements,
repairs the balance sums by a neighbor-bounded cascade of edge slides, and
evaluates determinants with its own batched einsum path.
"""

import numpy as np


def rail_arcs_of_points(rail, pts):
    """Vectorized arc lookup for points lying on the rail polyline."""
    pts = np.asarray(pts, dtype=float)
    n_seg = len(rail._seg_len)
    best_d = np.full(len(pts), np.inf)
    best_arc = np.zeros(len(pts))
    for i in range(n_seg):
        s0 = rail._seg_start[i]
        d = rail._seg_dir[i]
        ln = rail._seg_len[i]
        t = np.clip(((pts - s0) @ d) / (ln * ln), 0.0, 1.0)
        proj = s0 + t[:, None] * d
        dist = np.linalg.norm(pts - proj, axis=1)
        better = dist < best_d
        best_d[better] = dist[better]
        best_arc[better] = rail._cum[i] + t[better] * ln
    return best_arc, best_d


def _pairwise_min_arc_gap(arcs, length):
    srt = np.sort(arcs, axis=1)
    gaps = np.diff(srt, axis=1)
    wrap = length - (srt[:, -1] - srt[:, 0])
    return np.minimum(gaps.min(axis=1), wrap)


def _edge_table(rail):
    starts = rail._seg_start
    dirs = rail._seg_dir
    lens = rail._seg_len
    cums = rail._cum[:-1]
    return starts, dirs, lens, cums


def _compositions(total, caps):
    """All count vectors summing to total with per-entry caps."""
    if len(caps) == 1:
        if total <= caps[0]:
            yield (total,)
        return
    for first in range(min(total, caps[0]) + 1):
        for rest in _compositions(total - first, caps[1:]):
            yield (first,) + rest


def sample_feasible_stratified(payload, com, n_robots, n_samples, rng,
                               min_spacing, epsilon, thrust_coeff=1.0,
                               torque_coeff=0.01, batch=20_000):
    """Random feasible formations from edge-stratified placement.

    Every split of the robots over the rail edges whose achievable balance
    range covers the tolerance window gets placement batches; robots are
    placed spacing-valid within their edges and layouts whose sums land in
    the window survive. Rail edges are axis-aligned, so the achievable sums
    decouple per axis and the reachability test is exact.
    """
    com = np.asarray(com, dtype=float)
    rail = payload.rail
    starts, dirs, lens, cums = _edge_table(rail)
    n_edges = len(lens)
    window = epsilon / max(thrust_coeff, 1e-12)
    caps = np.floor((lens + 1e-9) / min_spacing).astype(int)

    unit = dirs / lens[:, None]
    horizontal = np.abs(unit[:, 0]) > 0.9
    vertical = np.abs(unit[:, 1]) > 0.9

    def sum_range(axis):
        """Per-edge min/max contribution to the axis sum for each count."""
        lo_tab, hi_tab = [], []
        for e in range(n_edges):
            lo_e, hi_e = [0.0], [0.0]
            u = unit[e]
            base = starts[e][axis]
            for k in range(1, caps[e] + 1):
                offs_min = min_spacing * np.arange(k)
                offs_max = lens[e] - min_spacing * np.arange(k)[::-1]
                v0 = k * base + u[axis] * offs_min.sum()
                v1 = k * base + u[axis] * offs_max.sum()
                lo_e.append(min(v0, v1))
                hi_e.append(max(v0, v1))
            lo_tab.append(lo_e)
            hi_tab.append(hi_e)
        return lo_tab, hi_tab

    lo_x, hi_x = sum_range(0)
    lo_y, hi_y = sum_range(1)
    tx, ty = n_robots * com[0], n_robots * com[1]

    vectors = []
    for counts in _compositions(n_robots, list(caps)):
        sx_lo = sum(lo_x[e][counts[e]] for e in range(n_edges))
        sx_hi = sum(hi_x[e][counts[e]] for e in range(n_edges))
        sy_lo = sum(lo_y[e][counts[e]] for e in range(n_edges))
        sy_hi = sum(hi_y[e][counts[e]] for e in range(n_edges))
        if sx_lo <= tx + window and sx_hi >= tx - window \
                and sy_lo <= ty + window and sy_hi >= ty - window:
            vectors.append(counts)
    if not vectors:
        raise RuntimeError("no robot split can reach the balance window")

    dets = []
    kept = 0
    guard = 0
    pool = list(vectors)
    while kept < n_samples:
        guard += 1
        if guard > 2000:
            raise RuntimeError("stratified acceptance rate too low")
        if not pool:
            pool = list(vectors)
        pick = int(rng.integers(len(pool)))
        counts = pool[pick]
        m = batch
        arcs = np.empty((m, n_robots))
        col_edge = np.empty(n_robots, dtype=int)
        col = 0
        feasible_counts = True
        for e in range(n_edges):
            k = counts[e]
            if k == 0:
                continue
            usable = lens[e] - (k - 1) * min_spacing
            if usable < 0:
                feasible_counts = False
                break
            u = np.sort(rng.uniform(0, usable, size=(m, k)), axis=1)
            arcs[:, col:col + k] = cums[e] + u + min_spacing * np.arange(k)
            col_edge[col:col + k] = e
            col += k
        if not feasible_counts:
            pool.pop(pick)
            continue

        # cascade repair: every robot absorbs as much of its axis residual as
        # its edge room and neighbors allow. Columns are in ascending arc
        # order, and each robot's lower bound uses its left neighbor's final
        # arc while the neighbor's own bound stops it crossing back, so
        # consecutive gaps stay above the floor by construction.
        pts = rail.points_at(arcs.ravel()).reshape(m, n_robots, 2)
        residual = (pts - com[None, None, :]).sum(axis=1)
        repaired = arcs.copy()
        r_x = residual[:, 0].copy()
        r_y = residual[:, 1].copy()
        for j in range(n_robots):
            e = col_edge[j]
            lower = np.full(m, cums[e])
            upper = np.full(m, cums[e] + lens[e])
            if j > 0:
                lower = np.maximum(lower, repaired[:, j - 1] + min_spacing)
            if j < n_robots - 1:
                upper = np.minimum(upper, arcs[:, j + 1] - min_spacing)
            if horizontal[e]:
                desired = repaired[:, j] - r_x / unit[e, 0]
                new_arc = np.clip(desired, lower, np.maximum(upper, lower))
                blocked = lower > upper
                new_arc[blocked] = repaired[blocked, j]
                r_x += unit[e, 0] * (new_arc - repaired[:, j])
            elif vertical[e]:
                desired = repaired[:, j] - r_y / unit[e, 1]
                new_arc = np.clip(desired, lower, np.maximum(upper, lower))
                blocked = lower > upper
                new_arc[blocked] = repaired[blocked, j]
                r_y += unit[e, 1] * (new_arc - repaired[:, j])
            else:
                continue
            repaired[:, j] = new_arc
        ok = (np.abs(r_x) <= max(window, 1e-12)) & (np.abs(r_y) <= max(window, 1e-12))
        ok &= _pairwise_min_arc_gap(repaired, rail.length) >= min_spacing
        arcs_ok = repaired[ok]
        if len(arcs_ok) == 0:
            pool.pop(pick)          # unproductive split; spend batches elsewhere
            continue
        pts = rail.points_at(arcs_ok.ravel()).reshape(len(arcs_ok), n_robots, 2)
        rel = pts - com[None, None, :]
        sums = rel.sum(axis=1)
        good = (np.abs(sums[:, 0]) <= max(window, 1e-9)) \
            & (np.abs(sums[:, 1]) <= max(window, 1e-9))
        pts, arcs_ok = pts[good], arcs_ok[good]
        if len(pts) == 0:
            pool.pop(pick)
            continue
        order = np.argsort(arcs_ok, axis=1)
        signs = np.where(np.argsort(order, axis=1) % 2 == 0, 1.0, -1.0)
        rel = pts - com[None, None, :]
        b = np.stack([thrust_coeff * rel[:, :, 0],
                      thrust_coeff * rel[:, :, 1],
                      torque_coeff * signs], axis=1)
        dets.append(np.linalg.det(np.einsum("bij,bkj->bik", b, b)))
        kept += len(pts)
    return np.concatenate(dets)[:n_samples]
