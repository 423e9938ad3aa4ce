import math

import numpy as np
import pytest

from fourier_mixture import (
    DomainError,
    PatchAmbiguityError,
    ProjectionFrame,
    patch_centers,
    project,
    random_frame,
)
from fourier_mixture.projection import augmented_coords, base_coords


@pytest.mark.parametrize("seed", range(5))
def test_frame_is_orthonormal(seed):
    f = random_frame(3, 4, 1.4, seed)
    assert np.allclose(f.basis.T @ f.basis, np.eye(3), atol=1e-10)


def test_dbar_capped_at_d():
    assert random_frame(2, 2, 10.0, 0).dbar == 2


def test_frame_deterministic_and_json():
    a = random_frame(5, 8, 1.4, 9)
    b = random_frame(5, 8, 1.4, 9)
    assert np.array_equal(a.basis, b.basis)
    c = ProjectionFrame.from_dict(a.to_dict())
    assert np.array_equal(a.basis, c.basis) and c.dbar == a.dbar


def test_projected_distance_concentrates():
    d, k = 50, 16
    y0 = np.zeros(d)
    y1 = np.zeros(d)
    y1[0] = 10 * math.sqrt(d)
    good = 0
    for seed in range(100):
        f = random_frame(d, k, 1.4, seed)
        c = base_coords(f)
        dist = np.linalg.norm(project(y1, f, c) - project(y0, f, c))
        good += dist >= 5 * math.sqrt(f.dbar)
    assert good >= 90


def test_identity_frame_is_noop():
    f = ProjectionFrame(np.eye(4), 2)
    x = np.random.default_rng(0).normal(size=(10, 4))
    assert np.array_equal(project(x, f, range(4)), x)


def test_projection_idempotent_and_contracting():
    f = random_frame(6, 4, 1.4, 3)
    x = np.random.default_rng(1).normal(size=(1000, 6)) * 3
    coords = [0, 2, 5]
    p = project(x, f, coords)
    # lift back to the ambient space and project again
    lifted = p @ f.basis[:, coords].T
    assert np.allclose(project(lifted, f, coords), p, atol=1e-12)
    assert np.all(np.linalg.norm(p, axis=1) <= np.linalg.norm(x, axis=1) + 1e-9)


def test_project_rejects_bad_coords():
    f = random_frame(3, 2, 1.4, 0)
    with pytest.raises(DomainError):
        project(np.zeros(3), f, [])
    with pytest.raises(DomainError):
        project(np.zeros(3), f, [3])


def test_patch_single_center():
    base = np.array([[1.0, 2.0]])
    aug = {2: np.array([[1.01, 2.0, 7.0]]), 3: np.array([[1.0, 1.99, -3.0]])}
    out = patch_centers(base, aug, tol=0.5)
    assert np.array_equal(out, [[1.0, 2.0, 7.0, -3.0]])


def test_patch_reconstructs_exact_projections():
    rng = np.random.default_rng(5)
    d, dbar = 6, 3
    while True:
        Y = rng.normal(size=(4, d)) * 6
        if min(np.linalg.norm(Y[i] - Y[j]) for i in range(4) for j in range(i)) >= 5:
            break
    f = random_frame(d, 4, 1.4, 2)
    f = ProjectionFrame(f.basis, dbar)
    base = project(Y, f, base_coords(f))
    aug = {}
    for l in range(dbar, d):
        order = rng.permutation(4)
        aug[l] = project(Y, f, augmented_coords(f, l))[order]
    tol = 0.5 * min(np.linalg.norm(base[i] - base[j]) for i in range(4) for j in range(i))
    out = patch_centers(base, aug, tol, frame=f)
    assert np.max(np.abs(out - Y)) < 1e-9


def test_patch_ambiguity():
    base = np.array([[0.0], [0.05]])
    aug = {1: np.array([[0.0, 1.0], [0.05, 2.0]])}
    with pytest.raises(PatchAmbiguityError):
        patch_centers(base, aug, tol=0.2)


def test_patch_missing_match():
    base = np.array([[0.0], [5.0]])
    aug = {1: np.array([[0.0, 1.0], [9.0, 2.0]])}
    with pytest.raises(PatchAmbiguityError):
        patch_centers(base, aug, tol=0.5)
