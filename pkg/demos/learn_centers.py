"""
Learning the centers end to end
===============================

Eight centers in sixteen dimensions, pairwise at least 2 sqrt(d) apart,
with known uniform weights. The target accuracy is 0.1 sqrt(d).
"""
import math
import time

import numpy as np

from fourier_mixture import LearnConfig, MixtureParams, hausdorff, learn_mixture, sample_mixture
from fourier_mixture.harness import generate_centers
from fourier_mixture.rng import stream

d, k0 = 16, 8
centers = generate_centers(stream(1, "demo"), k0, d, 2 * math.sqrt(d))
params = MixtureParams(d, centers, np.full(k0, 1 / k0))
samples = sample_mixture(params, 20_000, seed=1)

t0 = time.perf_counter()
result = learn_mixture(samples.unlabeled(), LearnConfig(weights=tuple(params.weights), seed=1))
wall = time.perf_counter() - t0

report = result.report
err = hausdorff(result.centers, params.centers)
print(f"found {report['k_found']} centers in {wall:.1f}s")
print(f"Hausdorff error {err:.3f} (target {0.1 * math.sqrt(d):.3f})")
print(f"error before EM polishing {hausdorff(np.array(report['seeds']), params.centers):.3f}")
for frame in report["frames"]:
    print({k: v for k, v in frame.items() if k in ("component", "frame", "dbar", "delta_bar", "status")})
print("budgets:", report["budgets"])
