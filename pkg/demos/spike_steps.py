"""
Spike finding step by step
==========================

Walks through what ``learn_mixture`` does for one proximity component:
PCA, a random frame, spikes in the base subspace, spikes in one augmented
subspace, and the patching that reads off a new coordinate.
"""
import math

import numpy as np

from fourier_mixture import (
    MixtureParams, SampleSet, SpikeConfig, draw_frequencies, find_spikes, make_kernel,
    pca_reduce, project, random_frame, sample_mixture,
)
from fourier_mixture.harness import generate_centers
from fourier_mixture.projection import augmented_coords, base_coords
from fourier_mixture.rng import stream

d, k0 = 8, 4
centers = generate_centers(stream(5, "demo"), k0, d, 2 * math.sqrt(d))
params = MixtureParams(d, centers, np.full(k0, 1 / k0))
samples = sample_mixture(params, 20_000, seed=5).unlabeled()

# the centers span at most k0 dimensions, so PCA loses nothing that matters
basis, reduced = pca_reduce(samples, k0)
print(f"PCA: {d} -> {k0} dimensions")

frame = random_frame(k0, k0, C1_5=1.4, seed=5)
print(f"random frame keeps dbar = {frame.dbar} base coordinates")
truth = params.centers @ basis

base_pts = project(reduced.points, frame, base_coords(frame))
ker = make_kernel(frame.dbar, 1.0, k0, 1.0)
cfg = SpikeConfig(k=k0, w_min=1 / k0, delta_big=1.0, seed=5)
draw = draw_frequencies(ker, base_pts, 1500, seed=5)
base = find_spikes(base_pts, ker, draw, cfg)[0]
print(f"base subspace: {base.centers.shape[0]} spikes "
      f"({base.diagnostics['seeds']} seeds, {base.diagnostics['refined']} refined)")
print(np.round(base.centers, 2))
print("true projections:")
print(np.round(project(truth, frame, base_coords(frame)), 2))

# one augmented subspace: search only near the base spikes
l = frame.dbar
aug_pts = project(reduced.points, frame, augmented_coords(frame, l))
ker_l = make_kernel(frame.dbar + 1, 1.0, k0, 1.0)
cfg_l = SpikeConfig(k=k0, w_min=1 / k0, delta_big=1.0, seed=6,
                    tubes=tuple(map(tuple, base.centers)), tube_radius=0.5)
aug = find_spikes(aug_pts, ker_l, draw_frequencies(ker_l, aug_pts, 1500, seed=6), cfg_l)[0]
print(f"\naugmented subspace with coordinate {l}: {aug.centers.shape[0]} spikes")
print("last column is the new coordinate; compare with the truth:")
print(np.round(aug.centers, 2))
print(np.round(project(truth, frame, augmented_coords(frame, l)), 2))
