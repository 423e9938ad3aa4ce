"""Consensus over runs, EM refinement and the end-to-end learner."""
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .deconv import make_kernel, theory_budgets
from .errors import (ConsensusError, DomainError, FindSpikesError, LatticeTooLargeError,
                     MixtureError, ParameterError, PatchAmbiguityError, PipelineError,
                     RetriesExhaustedError, StarvedComponentError)
from .model import ConstantsConfig, SampleSet, SeparationSpec, hausdorff, min_separation
from .preprocess import (bounding_ball, coverage_sample_size, pca_reduce, proximity_threshold,
                         split_clusters)
from .projection import patch_centers, project, random_frame
from .spikes import RunOutput, SpikeConfig, find_spikes, q_radius

REFINER = "EM-fixed-w"


def boost(runs, tol):
    """Consensus center set over several runs.

    k0 is the lower median of the run sizes. Among runs of size k0, taken
    in run_id order, the first whose Hausdorff distance to at least half
    of all runs is below ``tol`` is returned. Runs with a non-ok status
    are ignored.
    """
    ok = sorted((r for r in runs if r.status == "ok"), key=lambda r: r.run_id)
    if not ok:
        raise ConsensusError("no successful runs to aggregate")
    sizes = sorted(r.centers.shape[0] for r in ok)
    k0 = sizes[(len(sizes) - 1) // 2]
    need = len(ok) / 2
    for r in ok:
        if r.centers.shape[0] != k0:
            continue
        agree = sum(1 for other in ok if hausdorff(r.centers, other.centers) < tol)
        if agree >= need:
            return r.centers.copy()
    raise ConsensusError(f"no run of size {k0} agrees with half of {len(ok)} runs")


def mixture_nll(points, centers, weights, sigma):
    """Negative log-likelihood of ``points`` under the spherical mixture."""
    x = np.asarray(points, dtype=float)
    c = np.asarray(centers, dtype=float)
    d = x.shape[1]
    sq = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    logp = np.log(weights)[None, :] - sq / (2 * sigma ** 2)
    return float(-(logsumexp(logp, axis=1).sum() - x.shape[0] * 0.5 * d * math.log(2 * math.pi * sigma ** 2)))


def refine(samples, seeds, params_known, iters, return_history=False):
    """EM on the centers with weights and sigma held fixed.

    Parameters
    ----------
    samples : SampleSet or array
    seeds : (k, d) array of starting centers
    params_known : (weights, sigma)
    iters : int
        Number of EM rounds.
    return_history : bool
        Also return the negative log-likelihood before each round and
        after the last one.
    """
    if iters < 1:
        raise ParameterError("iters must be at least 1")
    x = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    weights, sigma = params_known
    w = np.asarray(weights, dtype=float)
    c = np.array(seeds, dtype=float)
    if c.shape[0] != w.shape[0]:
        raise ParameterError("one weight per seed is required")
    n = x.shape[0]
    floor = 10 * np.finfo(float).eps * n
    logw = np.log(w)[None, :]
    xx = (x * x).sum(1)[:, None]
    history = []
    for _ in range(iters):
        sq = xx - 2 * x @ c.T + (c * c).sum(1)[None, :]
        logp = logw - sq / (2 * sigma ** 2)
        norm = logsumexp(logp, axis=1, keepdims=True)
        if return_history:
            history.append(float(-(norm.sum() - n * 0.5 * x.shape[1] * math.log(2 * math.pi * sigma ** 2))))
        resp = np.exp(logp - norm)
        mass = resp.sum(axis=0)
        bad = np.flatnonzero(mass < floor)
        if bad.size:
            raise StarvedComponentError(int(bad[0]), float(mass[bad[0]]))
        c = resp.T @ x / mass[:, None]
    if return_history:
        history.append(mixture_nll(x, c, w, sigma))
        return c, history
    return c


@dataclass(frozen=True)
class LearnConfig:
    """Settings of :func:`learn_mixture`.

    ``weights`` and ``sigma`` are the known mixture weights and standard
    deviation; ``delta_big`` is the separation in units of sigma*sqrt(d).
    Fields left as None take mode-dependent defaults (see :meth:`resolved`).
    """

    weights: tuple
    sigma: float = 1.0
    delta_big: float = 2.0
    k: int = None
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    mode: str = "practice"
    m: int = 1500
    delta_bar_target: float = 1.0
    spacing_div: float = None
    radius_div: float = None
    runs: int = None
    boost_C: float = 0.5
    frame_retries: int = None
    refine_iters: int = 50
    refine_target: float = None
    max_lattice: int = 4_000_000
    prescreen: float = 0.5
    seed: int = 0

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        if not w or min(w) <= 0 or abs(sum(w) - 1) > 1e-9:
            raise ParameterError("weights must be positive and sum to 1")
        if self.mode not in ("practice", "theory"):
            raise ParameterError(f"mode must be 'practice' or 'theory', got {self.mode!r}")
        if not self.sigma > 0 or not self.delta_big > 0:
            raise ParameterError("sigma and delta_big must be positive")

    def resolved(self):
        """Copy with every mode-dependent default filled in."""
        k = self.k if self.k is not None else len(self.weights)
        C = self.constants
        theory = self.mode == "theory"
        runs = self.runs
        if runs is None:
            runs = (math.ceil(100 * math.log(1 / C.eta)) if theory
                    else max(1, math.ceil(C.C4_5 * k)))
        retries = self.frame_retries
        if retries is None:
            retries = max(10, math.ceil(C.C4_5 * k))
        return replace(
            self, k=k, runs=runs, frame_retries=retries,
            spacing_div=self.spacing_div or (1000.0 if theory else 4.5),
            radius_div=self.radius_div or (400.0 if theory else 2.5),
            refine_target=self.refine_target or C.delta_acc,
        )

    def to_dict(self):
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["weights"] = list(self.weights)
        out["constants"] = self.constants.to_dict()
        return out


@dataclass
class LearnResult:
    centers: np.ndarray
    report: dict

    def to_json(self):
        doc = dict(self.report)
        doc["centers"] = self.centers.tolist()
        return json.dumps(doc, sort_keys=True, default=str)


def _assign_weights(weights, heights, warnings):
    """Match known weights to found centers by rank of their spike heights."""
    w = np.asarray(weights, dtype=float)
    if len(heights) != w.size:
        warnings.append(f"found {len(heights)} centers for {w.size} known weights; refining with uniform weights")
        return np.full(len(heights), 1.0 / len(heights))
    out = np.empty(w.size)
    out[np.argsort(heights)] = np.sort(w)
    return out


class _FrameFailure(Exception):
    pass


def _solve_subspace(points, kernel, sep, cfg, w_min, key, tubes=None, tube_radius=None):
    """Spike finding plus boost in one subspace; returns (centers, heights, runs)."""
    C = cfg.constants
    scfg = SpikeConfig(
        k=cfg.k, w_min=w_min, delta_big=sep.delta_big, C1_5=C.C1_5, C4_6=C.C4_6,
        count_max=cfg.runs, m=cfg.m, spacing_div=cfg.spacing_div, radius_div=cfg.radius_div,
        c=C.c, eta=C.eta, prescreen=cfg.prescreen, max_lattice=cfg.max_lattice,
        tubes=tubes, tube_radius=tube_radius, seed=cfg.seed, key=key)
    try:
        runs = find_spikes(points, kernel, None, scfg)
    except PipelineError as exc:
        raise _FrameFailure(str(exc.cause)) from exc
    tol = sep.delta_big * math.sqrt(kernel.dbar) / cfg.k ** cfg.boost_C
    try:
        centers = boost(runs, tol)
    except ConsensusError as exc:
        raise _FrameFailure(str(exc)) from exc
    heights = None
    for r in runs:
        if r.status == "ok" and np.array_equal(r.centers, centers):
            heights = r.diagnostics.get("values")
            break
    return centers, heights, runs


def _separation(delta, dbar, cfg):
    C = cfg.constants
    if cfg.mode == "theory":
        return SeparationSpec(delta, C.C3_2)
    return SeparationSpec(delta, max(1.0, delta / cfg.delta_bar_target))


def _learn_component(Y, d, cfg, w_min, expected, comp, log):
    """Centers of one proximity component, in the coordinates of ``Y``.

    ``d`` is the ambient dimension before any PCA step; separation
    ``delta_big * sqrt(d)`` becomes ``delta_big * sqrt(d / D) * sqrt(D)`` in D dimensions.
    """
    n, D = Y.shape
    C = cfg.constants
    delta_D = cfg.delta_big * math.sqrt(d / D)
    attempts = []
    for a in range(cfg.frame_retries + 1):
        frame = random_frame(D, cfg.k, C.C1_5, cfg.seed, key=(comp, a))
        dbar = frame.dbar
        # random projection to fewer dimensions may halve the separation
        delta_fs = delta_D / 2 if dbar < D else delta_D
        sep = _separation(delta_fs, dbar, cfg)
        kernel = make_kernel(dbar, sep.delta_bar, cfg.k, C.C3_5)
        base_pts = project(Y, frame, range(dbar))
        info = {"frame": a, "dbar": dbar, "delta_big": delta_fs, "delta_bar": sep.delta_bar,
                "c32": sep.c32, "kernel_radius": kernel.radius}
        try:
            base, heights, runs = _solve_subspace(base_pts, kernel, sep, cfg, w_min, (comp, a, "base"))
            info["base_runs"] = [r.diagnostics for r in runs]
            info["base_count"] = int(base.shape[0])
            if expected is not None and base.shape[0] != expected:
                raise _FrameFailure(f"base subspace gave {base.shape[0]} centers, expected {expected}")
            if dbar == D:
                coords = base
            else:
                if base.shape[0] >= 2:
                    tol = min_separation(base) / 4
                else:
                    tol = delta_fs * math.sqrt(dbar) / 4
                augmented = {}
                for l in range(dbar, D):
                    # adding a coordinate never shrinks base distances; and a
                    # (dbar+1)-frame obeys the same projection bound as the base
                    delta_l = max(delta_fs * math.sqrt(dbar / (dbar + 1)),
                                  delta_D / 2 if dbar + 1 < D else delta_D)
                    sep_l = _separation(delta_l, dbar + 1, cfg)
                    ker_l = make_kernel(dbar + 1, sep_l.delta_bar, cfg.k, C.C3_5)
                    rq = q_radius(dbar + 1, ker_l.delta_bar, cfg.k, C.C1_5, cfg.radius_div)
                    aug_pts = project(Y, frame, list(range(dbar)) + [l])
                    aug, _, _ = _solve_subspace(aug_pts, ker_l, sep_l, cfg, w_min, (comp, a, "aug", l),
                                                tubes=tuple(map(tuple, base)),
                                                tube_radius=min(tol, rq / 2))
                    if aug.shape[0] != base.shape[0]:
                        raise _FrameFailure(f"augmented coordinate {l} gave {aug.shape[0]} centers, "
                                            f"base has {base.shape[0]}")
                    augmented[l] = aug
                try:
                    coords = patch_centers(base, augmented, tol)
                except PatchAmbiguityError as exc:
                    raise _FrameFailure(str(exc)) from exc
            info["status"] = "ok"
            attempts.append(info)
            log["frames"].extend(attempts)
            return coords @ frame.basis.T, heights
        except _FrameFailure as exc:
            info["status"] = "retry"
            info["reason"] = str(exc)
            attempts.append(info)
        except LatticeTooLargeError as exc:
            log["frames"].extend(attempts)
            raise PipelineError("find_spikes", exc) from exc
    log["frames"].extend(attempts)
    raise PipelineError("frame", RetriesExhaustedError(
        f"component {comp}: no consistent frame after {cfg.frame_retries + 1} draws "
        f"(last: {attempts[-1].get('reason')})"))


def learn_mixture(samples, config):
    """Estimate the mixture centers from ``samples``.

    Splits the samples into proximity components, and for each one
    reduces dimension, draws a random frame, finds spikes in the base
    subspace and in every augmented subspace, patches the coordinates
    together and maps back. The union of all centers is refined by EM
    with the known weights and sigma.

    Returns a :class:`LearnResult`; its ``report`` holds per-stage
    diagnostics, budgets and theory-mode budget comparisons.
    """
    cfg = config.resolved()
    x = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    n, d = x.shape
    C = cfg.constants
    k = cfg.k
    warnings = []
    timing = {}
    report = {"config": cfg.to_dict(), "refiner": REFINER, "warnings": warnings, "timing": timing,
              "n": n, "d": d, "frames": []}
    need = coverage_sample_size(k, C.c, C.eta)
    if n < need:
        warnings.append(f"n={n} is below the coverage sample size {need}")
    budgets = {"n": n, "m": cfg.m, "runs": cfg.runs, "coverage_sample_size": need}
    if k >= 2:
        m_th, n_th = theory_budgets(k, C)
        budgets["theory_m"] = str(m_th)
        budgets["theory_n"] = str(n_th)
    report["budgets"] = budgets

    z = x / cfg.sigma
    t0 = time.perf_counter()
    try:
        thr = proximity_threshold(d, n, C.C1)
        parts = split_clusters(z, thr)
    except MixtureError as exc:
        raise PipelineError("split", exc) from exc
    timing["split"] = time.perf_counter() - t0
    report["components"] = [int(p.size) for p in parts.components]
    report["bounding_radius"] = bounding_ball(k, d, n, C.C1).radius
    single = len(parts) == 1
    expected = len(cfg.weights) if single else None
    w_min = min(cfg.weights)

    t0 = time.perf_counter()
    found, heights = [], []
    for ci, idx in enumerate(parts.components):
        if idx.size < 2:
            warnings.append(f"component {ci} has a single sample; skipped")
            continue
        pc = idx.size / n
        Zc = z[idx]
        if d > k:
            basis, proj = pca_reduce(SampleSet(Zc), k)
            Y = proj.points
        else:
            basis, Y = None, Zc
        cent, h = _learn_component(Y, d, cfg, min(1.0, w_min / pc), expected, ci, report)
        if basis is not None:
            cent = cent @ basis.T
        found.append(cent)
        h = np.ones(cent.shape[0]) if h is None else np.asarray(h)
        heights.append(h * pc)
    timing["spikes"] = time.perf_counter() - t0
    if not found:
        raise PipelineError("find_spikes", FindSpikesError("no component produced centers"))
    seeds = np.vstack(found)
    report["seeds"] = (seeds * cfg.sigma).tolist()

    t0 = time.perf_counter()
    w = _assign_weights(cfg.weights, np.concatenate(heights), warnings)
    try:
        final = refine(z, seeds, (w, 1.0), cfg.refine_iters)
    except StarvedComponentError as exc:
        raise PipelineError("refine", exc) from exc
    timing["refine"] = time.perf_counter() - t0
    report["refine_weights"] = w.tolist()
    report["k_found"] = int(final.shape[0])
    return LearnResult(final * cfg.sigma, report)
