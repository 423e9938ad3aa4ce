import math

import numpy as np
import pytest

from fourier_mixture import (
    ConsensusError,
    LearnConfig,
    MixtureParams,
    ParameterError,
    boost,
    hausdorff,
    learn_mixture,
    mixture_nll,
    refine,
    sample_mixture,
)
from fourier_mixture.harness import generate_centers
from fourier_mixture.rng import stream
from fourier_mixture.spikes import RunOutput


def run(centers, rid, status="ok"):
    return RunOutput(np.asarray(centers, dtype=float), rid, status)


def test_boost_identical_runs():
    c = [[0.0, 0.0], [3.0, 1.0]]
    out = boost([run(c, i) for i in range(3)], tol=0.1)
    assert np.array_equal(out, c)


def test_boost_median_size():
    rng = np.random.default_rng(0)
    truth = np.arange(4, dtype=float)[:, None] * 10
    sizes = [3, 4, 4, 4, 5]
    runs = []
    for i, s in enumerate(sizes):
        if s == 4:
            c = truth + rng.normal(scale=1e-3, size=truth.shape)
        else:
            c = rng.uniform(0, 40, size=(s, 1))
        runs.append(run(c, i))
    out = boost(runs, tol=0.1)
    assert out.shape[0] == 4
    assert hausdorff(out, truth) < 0.01


def test_boost_majority_over_garbage():
    rng = np.random.default_rng(1)
    truth = rng.normal(size=(3, 2)) * 10
    runs = []
    good_sets = []
    for i in range(7):
        if i in (0, 3, 5):
            c = rng.normal(size=(3, 2)) * 10
        else:
            c = truth + rng.uniform(-1e-3, 1e-3, size=truth.shape) / math.sqrt(2)
            good_sets.append(c)
        runs.append(run(c, i))
    out = boost(runs, tol=0.1)
    assert any(np.array_equal(out, g) for g in good_sets)


def test_boost_ignores_failed_runs_and_reports_no_consensus():
    runs = [run(np.zeros((0, 1)), 0, "error"), run([[0.0]], 1), run([[5.0]], 2)]
    assert np.array_equal(boost(runs, 0.1), [[0.0]]) or np.array_equal(boost(runs, 0.1), [[5.0]])
    spread = [run([[float(10 * i)]], i) for i in range(4)]
    with pytest.raises(ConsensusError):
        boost(spread, 0.1)
    with pytest.raises(ConsensusError):
        boost([run(np.zeros((0, 1)), 0, "error")], 0.1)


def test_refine_single_component_is_sample_mean():
    x = np.random.default_rng(2).normal(size=(500, 3)) + 4
    for seed in ([0, 0, 0], [10, -3, 2]):
        c = refine(x, [seed], ([1.0], 1.0), iters=1)
        assert np.allclose(c[0], x.mean(axis=0), atol=1e-12)


def test_refine_rejects_mismatched_seeds():
    with pytest.raises(ParameterError):
        refine(np.zeros((5, 1)), [[0.0], [1.0]], ([1.0], 1.0), 1)
    with pytest.raises(ParameterError):
        refine(np.zeros((5, 1)), [[0.0]], ([1.0], 1.0), 0)


def test_refine_fixed_point_near_truth():
    d, n = 3, 200_000
    y = np.array([[0.0, 0, 0], [8.0, 0, 0], [0, 8.0, 0]])
    w = np.array([0.2, 0.3, 0.5])
    p = MixtureParams(d, y, w)
    s = sample_mixture(p, n, seed=3)
    c = refine(s, y, (w, 1.0), iters=5)
    for i in range(3):
        n_l = w[i] * n
        assert np.linalg.norm(c[i] - y[i]) < 4 * math.sqrt(d / n_l)


def test_refine_from_perturbed_seeds():
    d, k0 = 2, 4
    good = 0
    for seed in range(100):
        rng = stream(seed, "test", "refine")
        y = generate_centers(rng, k0, d, 2 * math.sqrt(d))
        p = MixtureParams(d, y, np.full(k0, 0.25))
        s = sample_mixture(p, 40_000, seed)
        dirs = rng.normal(size=y.shape)
        seeds = y + 0.3 * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        c = refine(s, seeds, (p.weights, 1.0), iters=50)
        good += hausdorff(c, y) < 0.05
    assert good >= 95


@pytest.mark.parametrize("seed", range(5))
def test_em_negative_log_likelihood_monotone(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(3, 2)) * 3
    p = MixtureParams(2, y, [0.2, 0.3, 0.5])
    s = sample_mixture(p, 3000, seed)
    start = rng.normal(size=(3, 2)) * 3
    _, hist = refine(s, start, (p.weights, 1.0), 30, return_history=True)
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(hist, hist[1:]))
    assert hist[-1] == pytest.approx(mixture_nll(s.points, _, p.weights, 1.0))


def test_learn_two_centers_in_plane():
    p = MixtureParams(2, [[-5.0, 0.0], [5.0, 0.0]], [0.5, 0.5])
    good = 0
    for seed in range(100):
        s = sample_mixture(p, 20_000, seed)
        try:
            res = learn_mixture(s.unlabeled(), LearnConfig(weights=(0.5, 0.5), seed=seed))
        except Exception:
            continue
        good += hausdorff(res.centers, p.centers) <= 0.1
    assert good >= 90


def test_learn_sixteen_dimensions_four_centers():
    d, k0 = 16, 4
    good = 0
    for seed in range(100):
        y = generate_centers(stream(seed, "test", "learn16"), k0, d, 2 * math.sqrt(d))
        p = MixtureParams(d, y, np.full(k0, 0.25))
        # EM alone has error about sqrt(d / n_l) per center; 0.06 needs n_l near 10^4
        s = sample_mixture(p, 40_000, seed)
        try:
            res = learn_mixture(s.unlabeled(), LearnConfig(weights=tuple(p.weights), seed=seed))
        except Exception:
            continue
        good += hausdorff(res.centers, y) <= 0.15 * math.sqrt(d) * 0.1
    assert good >= 85


def test_learn_warns_below_coverage():
    p = MixtureParams(2, [[-5.0, 0.0], [5.0, 0.0]], [0.5, 0.5])
    s = sample_mixture(p, 100, seed=0)  # coverage size for k=2 is 199
    res = learn_mixture(s.unlabeled(), LearnConfig(weights=(0.5, 0.5)))
    assert any("coverage" in w for w in res.report["warnings"])


def test_learn_config_validation():
    with pytest.raises(ParameterError):
        LearnConfig(weights=(0.5, 0.6))
    with pytest.raises(ParameterError):
        LearnConfig(weights=(1.0,), mode="fast")
