"""Spike finding: lattice seeds, local maximization, filtering and dedup."""
import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import gammaln

from .deconv import MonteCarloOracle, draw_frequencies
from .errors import FindSpikesError, LatticeTooLargeError, ParameterError, PipelineError
from .preprocess import coverage_sample_size
from .rng import stream


def _log_k(k, C1_5):
    # log k vanishes for a single component; fall back to k = 2
    return C1_5 * math.log(max(k, 2))


def _ball_volume(d, r):
    return math.exp(0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1)) + d * math.log(r))


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Seed lattice ``spacing * Z^dbar`` restricted to balls around anchor samples.

    ``ball_radius_Q`` is the radius of the search ball Q around each seed;
    ``anchor_radius`` defaults to ``2 sqrt(dbar)``.
    """

    spacing: float
    ball_radius_Q: float
    centers: np.ndarray
    anchor_radius: float = None

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", centers)
        if self.anchor_radius is None:
            object.__setattr__(self, "anchor_radius", 2.0 * math.sqrt(centers.shape[1]))
        if not self.spacing > 0:
            raise ParameterError("spacing must be positive")
        if not self.ball_radius_Q > self.spacing:
            raise ParameterError("ball_radius_Q must exceed the spacing")

    @property
    def dbar(self):
        return self.centers.shape[1]

    @classmethod
    def for_problem(cls, dbar, delta_bar, k, C1_5, anchors, spacing_div=4.5, radius_div=2.5):
        return cls(lattice_spacing(dbar, delta_bar, k, C1_5, spacing_div),
                   q_radius(dbar, delta_bar, k, C1_5, radius_div), anchors)


def lattice_spacing(dbar, delta_bar, k, C1_5, spacing_div):
    """``(delta_bar / spacing_div) * sqrt(dbar / (C1_5 ln k))``."""
    return delta_bar / spacing_div * math.sqrt(dbar / _log_k(k, C1_5))


def q_radius(dbar, delta_bar, k, C1_5, radius_div):
    """``(delta_bar / radius_div) * dbar / sqrt(C1_5 ln k)``."""
    return delta_bar / radius_div * dbar / math.sqrt(_log_k(k, C1_5))


def _ball_index_range(center, r, h):
    lo = np.ceil((center - r) / h - 1e-12).astype(np.int64)
    hi = np.floor((center + r) / h + 1e-12).astype(np.int64)
    return lo, hi


def estimate_lattice_size(spec):
    """Upper estimate of the lattice size: the smaller of the bounding-box
    count and the sum of per-ball counts."""
    h, r = spec.spacing, spec.anchor_radius
    d = spec.dbar
    lo = np.floor((spec.centers.min(axis=0) - r) / h)
    hi = np.ceil((spec.centers.max(axis=0) + r) / h)
    box = float(np.prod(hi - lo + 1))
    per_ball = _ball_volume(d, r + h * math.sqrt(d)) / h ** d
    return min(box, per_ball * spec.centers.shape[0])


def lattice_count_bound(spec):
    """Covering bound on the lattice size: each point owns a cube of side
    ``spacing``, contained in the anchor ball grown by ``2 spacing sqrt(dbar)``."""
    d, h = spec.dbar, spec.spacing
    return spec.centers.shape[0] * _ball_volume(d, spec.anchor_radius + 2 * h * math.sqrt(d)) / h ** d


def enumerate_lattice(spec, cap=10_000_000):
    """Yield lattice points in the union of anchor balls.

    Balls are visited in anchor order, points within a ball in
    lexicographic order, and each point is emitted once.
    """
    est = estimate_lattice_size(spec)
    if est > cap:
        raise LatticeTooLargeError(est, cap)
    h, r = spec.spacing, spec.anchor_radius
    seen = set()
    for c in spec.centers:
        for idx in _ball_indices(c, r, h):
            key = tuple(idx.tolist())
            if key in seen:
                continue
            seen.add(key)
            yield idx * h


def _ball_indices(center, r, h):
    lo, hi = _ball_index_range(center, r, h)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    inside = np.sum((grid * h - center) ** 2, axis=1) <= r * r
    return grid[inside]


def lattice_points(spec, cap=10_000_000):
    """All points of :func:`enumerate_lattice` as an array, in emission order."""
    pts = list(enumerate_lattice(spec, cap))
    if not pts:
        return np.zeros((0, spec.dbar))
    return np.array(pts)


@dataclass(frozen=True)
class MaximizeResult:
    q: np.ndarray
    value: float
    evals: int
    exhausted: bool


def default_budget(dbar, eps, t_bound):
    return int(math.ceil(40 * dbar ** 2 * (1 + math.log2(max(1.0 / eps, 2.0)))
                         * (1 + math.log(max(t_bound, math.e)))))


_INVPHI = (math.sqrt(5) - 1) / 2


def maximize_in_ball(oracle, center, radius, eps, t_bound=1.0, seed=0, start=None,
                     budget=None, batch=1, xtol=None, max_sweeps=10):
    """Zeroth-order maximization of ``oracle`` over the ball (center, radius).

    Coordinate-wise golden-section search along chords of the ball,
    started from the best of ``start``, the center and 2*dbar probes at
    0.9 radius along seeded orthogonal directions. Each evaluation
    averages ``batch`` oracle calls. Stops when a full sweep moves less
    than ``xtol`` (default ``1e-3 * radius``) or gains less than
    ``eps / (2 dbar)`` in value. If neither happens within the call
    budget or ``max_sweeps`` sweeps, the best point so far is returned
    with ``exhausted=True``.
    """
    if not eps > 0:
        raise ParameterError("eps must be positive")
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    if budget is None:
        budget = default_budget(d, eps, t_bound)
    if xtol is None:
        xtol = 1e-3 * radius
    evals = 0
    best = [None, -math.inf]

    class _Out(Exception):
        pass

    def f(x):
        nonlocal evals
        if evals + batch > budget:
            raise _Out
        evals += batch
        v = sum(oracle(x) for _ in range(batch)) / batch
        if v > best[1]:
            best[0], best[1] = x.copy(), v
        return v

    rng = stream(seed, "maximize")
    rot, _ = np.linalg.qr(rng.standard_normal((d, d)))
    starts = [] if start is None else [np.asarray(start, dtype=float)]
    starts.append(center.copy())
    for i in range(d):
        starts.append(center + 0.9 * radius * rot[:, i])
        starts.append(center - 0.9 * radius * rot[:, i])
    exhausted = False
    try:
        for s in starts:
            f(s)
        x = best[0].copy()
        fx = best[1]
        r2 = radius * radius
        gain_tol = eps / (2 * d)
        for _ in range(max_sweeps):
            moved = 0.0
            f_start = fx
            for i in range(d):
                off = x - center
                half = math.sqrt(max(r2 - (off @ off - off[i] ** 2), 0.0))
                a, b = center[i] - half, center[i] + half
                xi, fxi = _golden_coordinate(f, x, i, a, b, xtol)
                if fxi > fx:
                    moved = max(moved, abs(xi - x[i]))
                    x[i], fx = xi, fxi
            if moved < xtol or fx - f_start < gain_tol:
                break
        else:
            exhausted = True
    except _Out:
        exhausted = True
    return MaximizeResult(best[0], float(best[1]), evals, exhausted)


def _golden_coordinate(f, x, i, a, b, xtol):
    """Golden-section search for the best value of coordinate i in [a, b]."""
    y = x.copy()

    def g(t):
        y[i] = t
        return f(y)

    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc, fe = g(c), g(e)
    while b - a > xtol:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - _INVPHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INVPHI * (b - a)
            fe = g(e)
    return (c, fc) if fc >= fe else (e, fe)


def pattern_search_in_ball(values, center, radius, start, step, xtol, max_iter=200):
    """Compass search over the ball (center, radius) from ``start``.

    ``values`` maps an (n, d) array to n oracle values, so each iteration
    costs one batched call on the 2d points ``x +- step e_i`` (pulled back
    onto the ball when they leave it). The step halves whenever no probe
    improves, and the search stops once it drops below ``xtol``.
    """
    center = np.asarray(center, dtype=float)
    x = np.asarray(start, dtype=float).copy()
    d = x.shape[0]
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    fx = float(values(x[None, :])[0])
    evals = 1
    for _ in range(max_iter):
        if step < xtol:
            return MaximizeResult(x, fx, evals, False)
        probes = x + step * dirs
        off = probes - center
        norm = np.linalg.norm(off, axis=1)
        out = norm > radius
        probes[out] = center + off[out] * (radius / norm[out])[:, None]
        v = values(probes)
        evals += probes.shape[0]
        j = int(np.argmax(v))
        if v[j] > fx:
            x, fx = probes[j].copy(), float(v[j])
        else:
            step /= 2
    return MaximizeResult(x, fx, evals, True)


@dataclass(frozen=True, eq=False)
class SpikeCandidate:
    """Seed ``l``, the maximizer ``q`` found in Q_l, the oracle value at q
    and whether q moved a quarter diameter or more from the seed."""

    seed: np.ndarray
    maximizer: np.ndarray
    value: float
    moved_far: bool
    budget_exhausted: bool = False

    @classmethod
    def build(cls, seed, maximizer, value, q_radius, budget_exhausted=False):
        seed = np.asarray(seed, dtype=float)
        maximizer = np.asarray(maximizer, dtype=float)
        moved = bool(np.linalg.norm(seed - maximizer) >= q_radius / 2)
        return cls(seed, maximizer, float(value), moved, budget_exhausted)


def spike_threshold(w_min, kernel):
    """``(w_min / 2) * (2 pi delta_bar^2)^(-dbar/2)``."""
    return 0.5 * w_min * kernel.gamma0


def filter_candidates(cands, w_min, kernel):
    """Keep candidates above the spike threshold that did not move far, in order."""
    thr = spike_threshold(w_min, kernel)
    out = [c for c in cands if c.value > thr and not c.moved_far]
    if not out:
        raise FindSpikesError("no candidate passed the spike filter")
    return out


def dedup_radius(dbar, delta_big, delta_bar):
    """``sqrt(dbar) * sqrt(delta_big * delta_bar) / 2``."""
    return math.sqrt(dbar) * math.sqrt(delta_big * delta_bar) / 2


def dedup_indices(points, radius):
    """Indices kept by first-come greedy selection at the given radius."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not radius > 0:
        raise ParameterError("radius must be positive")
    kept = []
    for j in range(pts.shape[0]):
        if kept:
            dist = np.linalg.norm(pts[kept] - pts[j], axis=1)
            if np.any(dist < radius):
                continue
        kept.append(j)
    return kept


def dedup(L, radius):
    """Greedy subsequence of ``L`` whose points are pairwise at least ``radius`` apart."""
    arr = np.asarray(L, dtype=float)
    return arr[dedup_indices(arr, radius)]


@dataclass(frozen=True, eq=False)
class RunOutput:
    """Centers found by one spike-finding run."""

    centers: np.ndarray
    run_id: int
    status: str = "ok"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        object.__setattr__(self, "centers", c)
        if self.status == "ok" and c.shape[0] == 0:
            raise ParameterError("a successful run must report at least one center")


@dataclass(frozen=True)
class SpikeConfig:
    """Settings of :func:`find_spikes`.

    ``k`` is the component count used in the ``ln k`` factors, ``w_min`` the
    smallest known weight and ``delta_big`` the separation used for the
    dedup radius. ``tubes`` optionally restricts the search to boxes
    around given points in the leading coordinates (used for the
    augmented subproblems).
    """

    k: int
    w_min: float
    delta_big: float
    C1_5: float = 1.4
    C4_6: float = 2.0
    count_max: int = 1
    m: int = 1500
    spacing_div: float = 4.5
    radius_div: float = 2.5
    c: float = 1.0
    eta: float = 0.1
    n_anchors: int = None
    prescreen: float = 0.5
    max_lattice: int = 4_000_000
    tubes: tuple = None
    tube_radius: float = None
    maximizer_budget: int = None
    lattice_reject: float = 0.9
    maximizer: str = "pattern"
    block: int = 32
    seed: int = 0
    key: tuple = ()


def _anchors(points, cfg):
    n0 = cfg.n_anchors
    if n0 is None:
        n0 = coverage_sample_size(cfg.k, cfg.c, cfg.eta)
    return points[:min(n0, points.shape[0])]


def _regions(spec, cfg, block):
    """Index boxes ``(lo, shape)`` covering the part of the lattice to evaluate."""
    h, r = spec.spacing, spec.anchor_radius
    anchors = spec.centers
    d = spec.dbar
    if cfg.tubes is None:
        lo = np.floor((anchors.min(axis=0) - r) / h).astype(np.int64)
        hi = np.ceil((anchors.max(axis=0) + r) / h).astype(np.int64)
        ext = hi - lo + 1
        side = np.minimum(ext, block)
        counts = -(-ext // side)
        starts = np.array(list(itertools.product(*[range(c) for c in counts])), dtype=np.int64)
        starts = lo + starts * side
        # keep tiles that meet some anchor ball
        mid = (starts + (side - 1) / 2.0) * h
        reach = r + h * np.linalg.norm((side - 1) / 2.0)
        near, _ = cKDTree(anchors).query(mid, distance_upper_bound=reach * (1 + 1e-9))
        starts = starts[np.isfinite(near)]
        return [(st, tuple(side.tolist())) for st in starts]
    tr = cfg.tube_radius
    nb = len(cfg.tubes[0])
    boxes = []
    for t in cfg.tubes:
        t = np.asarray(t, dtype=float)
        near = np.linalg.norm(anchors[:, :nb] - t, axis=1) <= tr + r
        if not near.any():
            continue
        lo_x = np.concatenate([t - tr, anchors[near, nb:].min(axis=0) - r])
        hi_x = np.concatenate([t + tr, anchors[near, nb:].max(axis=0) + r])
        lo = np.floor(lo_x / h).astype(np.int64)
        hi = np.ceil(hi_x / h).astype(np.int64)
        boxes.append((lo, hi - lo + 1))
    if not boxes:
        return []
    # one common shape so the boxes can be evaluated as a batch
    shape = tuple(np.max([b[1] for b in boxes], axis=0).tolist())
    return [(lo, shape) for lo, _ in boxes]


def _evaluate(regions, oracle, h, level, cap):
    """Lattice indices whose oracle value is at least ``level``, with the values."""
    total = sum(float(np.prod(shape)) for _, shape in regions)
    if total > cap:
        raise LatticeTooLargeError(total, cap)
    by_shape = {}
    for lo, shape in regions:
        by_shape.setdefault(shape, []).append(lo)
    idx_parts, val_parts = [], []
    for shape, los in by_shape.items():
        los = np.array(los)
        per = max(1, (1 << 22) // int(np.prod(shape)))
        for a in range(0, los.shape[0], per):
            chunk = los[a:a + per]
            vals = oracle.grid_many(chunk * h, h, shape)
            for b in range(chunk.shape[0]):
                rel = np.argwhere(vals[b] >= level)
                if rel.size:
                    idx_parts.append(rel + chunk[b])
                    val_parts.append(vals[b][tuple(rel.T)])
    if not idx_parts:
        return np.zeros((0, len(regions[0][1]) if regions else 0), dtype=np.int64), np.zeros(0), total
    idx = np.concatenate(idx_parts)
    val = np.concatenate(val_parts)
    idx, first = np.unique(idx, axis=0, return_index=True)
    return idx, val[first], total


class _Store:
    """Lookup of oracle values by lattice index; absent points read -inf.

    The index box is padded by ``pad`` on every side, so a stored index
    plus any offset of norm at most ``pad`` maps to a valid flat key.
    Small boxes are held densely, larger ones as sorted keys.
    """

    def __init__(self, idx, val, pad=1, dense_max=30_000_000):
        self.lo = idx.min(axis=0) - pad
        ext = idx.max(axis=0) + pad + 1 - self.lo
        self.hi = self.lo + ext
        self.strides = np.cumprod(np.concatenate([[1], ext[::-1][:-1]]))[::-1].astype(np.int64)
        keys = self.key(idx)
        self.dense = None
        if float(np.prod(ext.astype(float))) <= dense_max:
            self.dense = np.full(int(np.prod(ext)), -np.inf)
            self.dense[keys] = val
        else:
            order = np.argsort(keys)
            self.keys = keys[order]
            self.val = val[order]

    def key(self, idx):
        return (idx - self.lo) @ self.strides

    def at_keys(self, keys):
        if self.dense is not None:
            return self.dense[keys]
        pos = np.minimum(np.searchsorted(self.keys, keys), self.keys.size - 1)
        return np.where(self.keys[pos] == keys, self.val[pos], -np.inf)

    def lookup(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        out = np.full(idx.shape[0], -np.inf)
        ok = np.all((idx >= self.lo) & (idx < self.hi), axis=1)
        out[ok] = self.at_keys(self.key(idx[ok]))
        return out


def _canonical(spec, idx):
    """Restrict to the anchor balls and sort by (first covering anchor, lexicographic)."""
    if idx.shape[0] == 0:
        return idx
    pts = idx * spec.spacing
    r2 = (spec.anchor_radius * (1 + 1e-12)) ** 2
    anchor = np.full(idx.shape[0], -1, dtype=np.int64)
    open_ = np.arange(idx.shape[0])
    step = 64
    for a0 in range(0, spec.centers.shape[0], step):
        if open_.size == 0:
            break
        inside = cdist(spec.centers[a0:a0 + step], pts[open_], "sqeuclidean") <= r2
        hit = inside.any(axis=0)
        anchor[open_[hit]] = a0 + np.argmax(inside[:, hit], axis=0)
        open_ = open_[~hit]
    keep = anchor >= 0
    idx, anchor = idx[keep], anchor[keep]
    order = np.lexsort(tuple(idx[:, j] for j in range(idx.shape[1] - 1, -1, -1)) + (anchor,))
    return idx[order]


def _q_offsets(spec):
    h, rq = spec.spacing, spec.ball_radius_Q
    n = int(math.floor(rq / h))
    rng = np.arange(-n, n + 1)
    grid = np.array(list(itertools.product(rng, repeat=spec.dbar)), dtype=np.int64)
    return grid[np.sum((grid * h) ** 2, axis=1) <= rq * rq]


def _discrete_stage(seeds, store, offsets, chunk=1 << 21):
    """Best lattice point inside each seed's Q ball, and its value.

    Every seed must be a stored index and the store must be padded by the
    offset radius.
    """
    off_keys = offsets @ store.strides
    top = np.empty_like(seeds)
    top_val = np.empty(seeds.shape[0])
    step = max(1, chunk // offsets.shape[0])
    for lo in range(0, seeds.shape[0], step):
        sd = seeds[lo:lo + step]
        vals = store.at_keys(store.key(sd)[:, None] + off_keys[None, :])
        a = np.argmax(vals, axis=1)
        top[lo:lo + step] = sd + offsets[a]
        top_val[lo:lo + step] = vals[np.arange(a.shape[0]), a]
    return top, top_val


def _axis_neighbours(store, idx):
    """Values at ``idx -+ e_i``, shape (2, n, d)."""
    d = idx.shape[1]
    keys = store.key(idx)
    out = np.empty((2, idx.shape[0], d))
    for i in range(d):
        out[0, :, i] = store.at_keys(keys - store.strides[i])
        out[1, :, i] = store.at_keys(keys + store.strides[i])
    return out


def _near_high_maxima(store, idx, val, seeds, radius, level):
    """Positions in ``seeds`` lying within ``radius`` (index units) of a
    high lattice local maximum.

    A local maximum beats its 2d axis neighbours; it is high when the
    parabola through it reaches ``level``.
    """
    nb = _axis_neighbours(store, idx)
    is_max = np.all(val[:, None] >= nb[0], axis=1) & np.all(val[:, None] >= nb[1], axis=1)
    peaks = idx[is_max]
    _, pv = _lattice_vertex(store, peaks, val[is_max])
    peaks = peaks[pv >= level]
    if peaks.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    dist, _ = cKDTree(peaks).query(seeds, distance_upper_bound=radius)
    return np.flatnonzero(dist < radius)


def _lattice_vertex(store, top, top_val):
    """Separable parabola through each argmax and its axis neighbours.

    Returns the vertex in index units and the interpolated value. Where a
    neighbour is missing the argmax itself is returned.
    """
    fm, fp = _axis_neighbours(store, top)
    ok = np.isfinite(fm) & np.isfinite(fp)
    slope = np.zeros(top.shape)
    curv = np.zeros(top.shape)
    slope[ok] = fp[ok] - fm[ok]
    curv[ok] = fm[ok] + fp[ok] - 2 * np.broadcast_to(top_val[:, None], top.shape)[ok]
    ok &= curv < 0
    t = np.zeros(top.shape)
    t[ok] = np.clip(-0.5 * slope[ok] / curv[ok], -0.5, 0.5)
    return top + t, top_val + 0.25 * (slope * t).sum(axis=1)


def find_spikes_once(points, kernel, oracle, cfg, spec=None, run_id=0):
    """One pass of seed enumeration, maximization, filtering and dedup.

    Returns ``(M, candidates, diagnostics)`` where ``M`` holds the
    maximizers of the deduped survivors. Raises FindSpikesError when no
    candidate survives.
    """
    points = np.asarray(points, dtype=float)
    anchors = _anchors(points, cfg)
    if spec is None:
        spec = LatticeSpec.for_problem(kernel.dbar, kernel.delta_bar, cfg.k, cfg.C1_5,
                                       anchors, cfg.spacing_div, cfg.radius_div)
    h, rq = spec.spacing, spec.ball_radius_Q
    thr = spike_threshold(cfg.w_min, kernel)
    floor = 0.5 * thr
    rad = dedup_radius(kernel.dbar, cfg.delta_big, kernel.delta_bar)
    eps = max(cfg.k, 2) ** (-cfg.C4_6)

    regions = _regions(spec, cfg, cfg.block)
    idx, val, total = _evaluate(regions, oracle, h, cfg.prescreen * thr, cfg.max_lattice)
    seeds = _canonical(spec, idx)
    offsets = _q_offsets(spec)
    r_far = rq / 2 + h / 2
    ns = seeds.shape[0]
    ell_all = seeds * h
    q0_all = np.zeros((0, kernel.dbar))
    top_val = np.zeros(0)
    moved = np.zeros(0)
    look = np.arange(ns)
    if ns:
        store = _Store(idx, val, pad=int(np.abs(offsets).max()))
        if rq >= r_far + h:
            look = _near_high_maxima(store, idx, val, seeds, r_far / h, cfg.lattice_reject * thr)
        top, top_val = _discrete_stage(seeds[look], store, offsets)
        moved = np.linalg.norm((top - seeds[look]) * h, axis=1)
        vx, top_val = _lattice_vertex(store, top, top_val)
        q0_all = vx * h

    def logf(x):
        return math.log(max(oracle(x), floor))

    # A seed is dropped without continuous search when the best lattice
    # point of its Q ball lies r_far or more away, or when the parabola
    # through that point stays below lattice_reject * threshold. Seeds
    # outside ``look`` fall in one of these cases for certain and are not
    # recorded as candidates.
    # Only the remaining seeds can join the kept set, so the scan visits
    # those in order and settles the dedup skips afterwards. The outcome
    # equals a plain sequential scan.
    is_far = moved >= r_far
    is_low = ~is_far & (top_val < cfg.lattice_reject * thr)
    kept_pos, kept_q, kept_v, refined_at = [], [], [], {}
    kept = np.zeros((0, kernel.dbar))
    for i in np.flatnonzero(~is_far & ~is_low):
        j = int(look[i])
        ell = ell_all[j]
        if kept.shape[0] and np.min(np.sum((kept - ell) ** 2, axis=1)) < rad * rad:
            continue
        if cfg.maximizer == "golden":
            res = maximize_in_ball(logf, ell, rq, eps, seed=cfg.seed, start=q0_all[i],
                                   budget=cfg.maximizer_budget, xtol=1e-2 * rq)
            value = oracle(res.q)
        else:
            res = pattern_search_in_ball(oracle.values, ell, rq, q0_all[i], h / 4, 1e-2 * rq)
            value = res.value
        cand = SpikeCandidate.build(ell, res.q, value, rq, res.exhausted)
        refined_at[j] = cand
        if cand.value > thr and not cand.moved_far:
            kept = np.vstack([kept, ell])
            kept_pos.append(j)
            kept_q.append(cand.maximizer)
            kept_v.append(cand.value)
    skip = np.zeros(ns, dtype=bool)
    after = np.arange(ns)
    for pos, ell in zip(kept_pos, kept):
        skip |= (after > pos) & (np.sum((ell_all - ell) ** 2, axis=1) < rad * rad)
    cands = []
    for i in np.flatnonzero(~skip[look]):
        j = int(look[i])
        cand = refined_at.get(j)
        if cand is None:
            cand = SpikeCandidate(ell_all[j], q0_all[i], float(top_val[i]),
                                  bool(np.linalg.norm(q0_all[i] - ell_all[j]) >= rq / 2))
        cands.append(cand)
    skipped = int(skip.sum())
    low = int((is_low & ~skip[look]).sum())
    refined = len(refined_at)
    diag = {"run_id": run_id, "seeds": int(seeds.shape[0]), "skipped_by_dedup": skipped,
            "screened": int(ns - look.shape[0]), "rejected_on_lattice": low, "refined": refined,
            "maximized": len(cands), "survivors": len(kept_q),
            "lattice_points": int(total),
            "spacing": h, "ball_radius_Q": rq, "dedup_radius": rad, "threshold": thr,
            "values": kept_v}
    if not kept_q:
        raise FindSpikesError(f"run {run_id}: no candidate passed the spike filter")
    return np.array(kept_q), cands, diag


def find_spikes(samples, kernel, draw, config, oracle=None):
    """Run spike finding ``config.count_max`` times and return the per-run outputs.

    Run 0 uses ``draw`` when given; every other run draws fresh
    frequencies from its own stream. Passing ``oracle`` replaces the
    Monte-Carlo estimate altogether (e.g. an exact oracle in simulation).
    Runs without survivors are kept with status ``"error"``; if every run
    fails a PipelineError is raised.
    """
    points = samples.points if hasattr(samples, "points") else np.asarray(samples, float)
    runs = []
    for r in range(config.count_max):
        if oracle is not None:
            orc = oracle
        else:
            dr = draw if (r == 0 and draw is not None) else draw_frequencies(
                kernel, points, config.m, config.seed, key=tuple(config.key) + ("run", r))
            orc = MonteCarloOracle(dr, kernel)
        try:
            M, _, diag = find_spikes_once(points, kernel, orc, config, run_id=r)
            runs.append(RunOutput(M, r, "ok", diag))
        except FindSpikesError as exc:
            runs.append(RunOutput(np.zeros((0, kernel.dbar)), r, "error", {"error": str(exc)}))
    if all(run.status != "ok" for run in runs):
        raise PipelineError("find_spikes", FindSpikesError(
            f"all {config.count_max} runs ended without surviving candidates"))
    return runs


def write_candidates_csv(path, candidates):
    """Debug dump: one row per processed seed."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if not candidates:
            w.writerow(["value", "moved_far", "budget_exhausted"])
            return
        d = candidates[0].seed.shape[0]
        w.writerow([f"l{i}" for i in range(d)] + [f"q{i}" for i in range(d)]
                   + ["value", "moved_far", "budget_exhausted"])
        for c in candidates:
            w.writerow([repr(float(v)) for v in c.seed] + [repr(float(v)) for v in c.maximizer]
                       + [repr(c.value), int(c.moved_far), int(c.budget_exhausted)])
