"""Desk-scale acceptance checks, one test per criterion.

Each test prints a single ``CRITERION <n> PASS|FAIL`` line with the
measured quantities, then asserts at the stated tolerance.
"""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special
from scipy.spatial.distance import cdist, pdist

from fourier_mixture import (
    ConsensusError,
    ExactOracle,
    ExperimentConfig,
    LatticeSpec,
    MixtureParams,
    SpikeConfig,
    boost,
    coverage_sample_size,
    dedup,
    draw_frequencies,
    ecf,
    exact_smoothed,
    find_spikes,
    kernel_fidelity_bound,
    make_kernel,
    oracle_values,
    proximity_threshold,
    refine,
    run_experiment,
    s_hat,
    sample_mixture,
    split_clusters,
)
from fourier_mixture.harness import generate_centers
from fourier_mixture.rng import stream
from fourier_mixture.spikes import RunOutput, lattice_points

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
        return ok
    return emit


def gamma(x, scale):
    x = np.atleast_2d(x)
    d = x.shape[1]
    return (2 * math.pi * scale ** 2) ** (-d / 2) * np.exp(-np.sum(x * x, 1) / (2 * scale ** 2))


def inverse_transform(kernel, x):
    """``s(x) = (2 pi)^(-d/2) int s_hat(w) e^{i w.x} dw`` by adaptive quadrature.

    In one dimension the integrand is even, so the transform is a cosine
    integral over [0, R]. In two it is radial: ``int_0^R s_hat(r) J0(r|x|) r dr``.
    """
    R = kernel.radius
    out = np.empty(x.shape[0])
    for i, p in enumerate(x):
        if kernel.dbar == 1:
            f = lambda w: s_hat(kernel, [w]) * math.cos(w * p[0])
            val = 2 * integrate.quad(f, 0, R, limit=400)[0] / math.sqrt(2 * math.pi)
        else:
            rho = float(np.linalg.norm(p))
            f = lambda r: s_hat(kernel, [r, 0.0]) * special.j0(r * rho) * r
            val = integrate.quad(f, 0, R, limit=400)[0]
        out[i] = val
    return out


def test_criterion_1_kernel_fidelity(report):
    t0 = time.perf_counter()
    worst, ok = [], True
    for dbar in (1, 2):
        axes = np.linspace(-4, 4, 41 if dbar == 1 else 15)
        grid = axes[:, None] if dbar == 1 else np.stack(np.meshgrid(axes, axes), -1).reshape(-1, 2)
        for db in (0.25, 0.5):
            for k in (16, 256):
                ker = make_kernel(dbar, db, k, 2.0)
                gap = np.max(np.abs(inverse_transform(ker, grid) - gamma(grid, db)))
                bound = kernel_fidelity_bound(ker, k)
                ok &= bool(gap <= bound)
                worst.append(gap / bound)
    wall = time.perf_counter() - t0
    ok &= wall < 60
    report(1, ok, f"max gap/bound {max(worst):.3g} over 8 configs, {wall:.1f}s")
    assert ok


def two_center_params(dbar, k0):
    if k0 == 1:
        return MixtureParams(dbar, np.zeros((1, dbar)), [1.0])
    y = np.zeros((2, dbar))
    y[0, 0], y[1, 0] = -2.0, 2.0
    return MixtureParams(dbar, y, [0.5, 0.5])


def probe_grid(dbar):
    if dbar == 1:
        return np.linspace(-5, 5, 100)[:, None]
    a = np.linspace(-5, 5, 10)
    return np.stack(np.meshgrid(a, a), -1).reshape(-1, 2)


def test_criterion_2_oracle_accuracy(report):
    t0 = time.perf_counter()
    db, n, m = 0.5, 20_000, 20_000
    rates, ok = [], True
    for dbar in (1, 2):
        for k0 in (1, 2):
            p = two_center_params(dbar, k0)
            ker = make_kernel(dbar, db, k0, 1.0)
            probes = probe_grid(dbar)
            exact = exact_smoothed(p, db, probes)
            good = 0
            for seed in range(100):
                s = sample_mixture(p, n, seed)
                est = oracle_values(draw_frequencies(ker, s, m, seed), probes)
                good += np.max(np.abs(est - exact)) <= 0.05 * ker.gamma0
            rates.append(f"d{dbar}k{k0}={good}")
            ok &= good >= 95
    wall = time.perf_counter() - t0
    ok &= wall < 300
    report(2, ok, f"seeds within 0.05 gamma(0): {' '.join(rates)} (need 95), {wall:.0f}s")
    assert ok


def test_criterion_2_error_scales_inverse_sqrt_m(report):
    p = two_center_params(1, 2)
    ker = make_kernel(1, 0.5, 2, 1.0)
    s = sample_mixture(p, 20_000, 0)
    probes = probe_grid(1)
    sd = {}
    for m in (500, 2000, 8000):
        vals = np.array([oracle_values(draw_frequencies(ker, s, m, r), probes) for r in range(60)])
        sd[m] = float(np.mean(vals.std(axis=0)))
    ratios = [sd[500] / sd[2000], sd[2000] / sd[8000]]
    ok = all(1.6 <= r <= 2.5 for r in ratios)
    report("2 (1/sqrt(m) scaling)", ok, f"spread ratio per 4x m: {ratios[0]:.2f}, {ratios[1]:.2f} (expect 2)")
    assert ok


def test_criterion_3_exact_oracle_spikes(report):
    t0 = time.perf_counter()
    failures, n_inst = [], 0
    cases = [(dbar, k0) for dbar in (2, 3) for k0 in (2, 4, 8)]
    for i in range(20):
        dbar, k0 = cases[i % len(cases)]
        delta = 2.0
        y = generate_centers(stream(2024, "criterion3", i), k0, dbar, delta * math.sqrt(dbar))
        p = MixtureParams(dbar, y, np.full(k0, 1.0 / k0))
        db = 1.0
        ker = make_kernel(dbar, db, k0, 1.0)
        s = sample_mixture(p, 4000, i)
        cfg = SpikeConfig(k=k0, w_min=1.0 / k0, delta_big=delta, max_lattice=50_000_000, seed=i)
        runs = find_spikes(s, ker, None, cfg, oracle=ExactOracle(p, db))
        M = runs[0].centers
        tol = 1.0 * dbar ** -2.5
        n_inst += 1
        if runs[0].status != "ok" or M.shape[0] != k0:
            failures.append((i, dbar, k0, "count", M.shape[0]))
            continue
        dist = cdist(M, y)
        nearest = dist.argmin(axis=1)
        if len(set(nearest.tolist())) != k0 or dist.min(axis=1).max() > tol:
            failures.append((i, dbar, k0, "distance", float(dist.min(axis=1).max())))
    wall = time.perf_counter() - t0
    ok = not failures and wall < 600
    report(3, ok, f"{n_inst - len(failures)}/{n_inst} instances exact, {wall:.0f}s"
           + (f", failures {failures}" if failures else ""))
    assert ok


def test_criterion_4_end_to_end(report):
    t0 = time.perf_counter()
    cells, ok = [], True
    for d in (2, 8, 16):
        for k0 in (2, 4, 8):
            cfg = ExperimentConfig.from_dict({
                "generator": {"d": d, "k0": k0, "separation": 2.0, "weights": "uniform", "sigma": 1.0},
                "constants": {"delta_acc": 0.1}, "trials": 40, "seed": 2024,
                "mode": "practice", "acceptance": True, "c0": 1.0})
            rep = run_experiment(cfg)
            rate = rep.summary["success_rate"]
            cells.append(f"d{d}k{k0}={rate:.3f}")
            ok &= rate >= 0.85
    wall = time.perf_counter() - t0
    ok &= wall < 1800
    report(4, ok, f"success rates {' '.join(cells)} (need 0.85), {wall:.0f}s")
    assert ok


def test_criterion_5_coverage(report):
    t0 = time.perf_counter()
    res, ok = [], True
    for k in (4, 16):
        for d in (2, 8):
            n = coverage_sample_size(k, 1.0, 0.1)
            good = 0
            for seed in range(100):
                y = generate_centers(stream(seed, "criterion5", k, d), k, d, 2 * math.sqrt(d))
                p = MixtureParams(d, y, np.full(k, 1.0 / k))
                s = sample_mixture(p, n, seed)
                good += bool(np.all(cdist(y, s.points).min(axis=1) <= 2 * math.sqrt(d)))
            res.append(f"k{k}d{d}={good}")
            ok &= good >= 97
    wall = time.perf_counter() - t0
    ok &= wall < 120
    report(5, ok, f"trials with every center covered: {' '.join(res)} (need 97), {wall:.0f}s")
    assert ok


def test_criterion_6_splitting(report):
    t0 = time.perf_counter()
    res, ok = [], True
    for d in (2, 8):
        n = 1000
        good = 0
        for seed in range(100):
            rng = stream(seed, "criterion6", d)
            u = rng.standard_normal(d)
            y = np.stack([np.zeros(d), 50 * math.sqrt(d) * u / np.linalg.norm(u)])
            p = MixtureParams(d, y, [0.5, 0.5])
            s = sample_mixture(p, n, seed)
            dec = split_clusters(s, proximity_threshold(d, n, 10.0))
            pure = all(np.unique(s.labels[c]).size == 1 for c in dec.components)
            good += pure
        res.append(f"d{d}={good}")
        ok &= good >= 95
    wall = time.perf_counter() - t0
    ok &= wall < 60
    report(6, ok, f"label-pure trials {' '.join(res)} (need 95), {wall:.0f}s")
    assert ok


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 200), st.integers(0, 2 ** 31),
       st.floats(0.01, 20.0))
def test_property_ecf_modulus(d, n, seed, scale):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) * scale
    w = rng.normal(size=(50, d)) * scale
    assert np.all(np.abs(ecf(x, w)) <= (2 * math.pi) ** (-d / 2) * (1 + 1e-12))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(1, 60), st.integers(0, 2 ** 31), st.floats(0.05, 3.0))
def test_property_dedup_separation(d, n, seed, radius):
    pts = np.random.default_rng(seed).uniform(-3, 3, size=(n, d))
    M = dedup(pts, radius)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[0] > 1:
        assert pdist(M).min() >= radius
    # every input point is within radius of a kept one, and the first is kept
    assert np.array_equal(M[0], pts[0])
    assert np.all(cdist(pts, M).min(axis=1) < radius + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_property_em_monotone(d, k0, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(k0, d)) * 4
    w = rng.dirichlet(np.ones(k0) * 2) * 0.9 + 0.1 / k0
    w = w / w.sum()
    s = rng.normal(size=(400, d)) + y[rng.choice(k0, 400, p=w)]
    start = rng.normal(size=(k0, d)) * 4
    try:
        _, hist = refine(s, start, (w, 1.0), 15, return_history=True)
    except Exception as exc:  # a starved component is a legitimate stop
        assert type(exc).__name__ == "StarvedComponentError"
        return
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(hist, hist[1:]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_property_boost_selection(k0, n_bad, seed):
    rng = np.random.default_rng(seed)
    truth = np.cumsum(rng.uniform(5, 10, size=(k0, 2)), axis=0)
    n_good = n_bad + 3  # a majority even after the two odd-sized runs below
    runs = []
    order = rng.permutation(n_good + n_bad)
    for rid, j in enumerate(order):
        if j < n_good:
            c = truth + rng.uniform(-1e-3, 1e-3, size=truth.shape)
        else:
            c = truth + 100 + rng.normal(size=truth.shape)
        runs.append(RunOutput(c, rid))
    out = boost(runs, 0.01)
    assert out.shape == truth.shape
    assert np.max(np.abs(out - truth)) <= 1e-3
    # median of sizes picks k0 even when other sizes are present
    extra = [RunOutput(np.zeros((k0 + 1, 2)) + np.arange(k0 + 1)[:, None] * 50, 100),
             RunOutput(np.zeros((max(k0 - 1, 1), 2)), 101)] if k0 > 1 else []
    assert boost(runs + extra, 0.01).shape[0] == k0


def test_property_boost_no_majority():
    runs = [RunOutput([[float(10 * i)]], i) for i in range(5)]
    with pytest.raises(ConsensusError):
        boost(runs, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.floats(0.2, 1.0), st.floats(0.5, 2.5),
       st.integers(0, 2 ** 31))
def test_property_lattice_count(d, n_anchor, h, r, seed):
    anchors = np.random.default_rng(seed).uniform(-2, 2, size=(n_anchor, d))
    spec = LatticeSpec(h, 2 * h, anchors, anchor_radius=r)
    pts = lattice_points(spec)
    lo = np.floor((anchors.min(0) - r) / h).astype(int) - 1
    hi = np.ceil((anchors.max(0) + r) / h).astype(int) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d) * h
    brute = int((cdist(grid, anchors, "sqeuclidean").min(axis=1) <= r * r).sum())
    assert pts.shape[0] == brute
    keys = {tuple(np.rint(p / h).astype(int).tolist()) for p in pts}
    assert len(keys) == pts.shape[0]


def test_criterion_7_summary(report):
    names = ["test_property_ecf_modulus", "test_property_dedup_separation",
             "test_property_em_monotone", "test_property_boost_selection",
             "test_property_boost_no_majority", "test_property_lattice_count"]
    failed = []
    for name in names:
        fn = globals()[name]
        try:
            fn()
        except Exception as exc:
            failed.append(f"{name}: {type(exc).__name__}")
    ok = not failed
    report(7, ok, f"{len(names) - len(failed)}/{len(names)} property checks, 0 failures allowed"
           + (f"; failed {failed}" if failed else ""))
    assert ok
