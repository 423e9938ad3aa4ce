"""Random orthonormal frames, coordinate projections and patching."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, PatchAmbiguityError, ParameterError
from .rng import stream


@dataclass(frozen=True, eq=False)
class ProjectionFrame:
    """Orthonormal basis ``e_1..e_d`` (columns of ``basis``) and the reduced dimension."""

    basis: np.ndarray
    dbar: int
    seed: int = None

    @property
    def d(self):
        return self.basis.shape[0]

    def to_dict(self):
        return {"basis": self.basis.tolist(), "dbar": self.dbar, "seed": self.seed}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["basis"], dtype=float), int(doc["dbar"]), doc.get("seed"))


def reduced_dim(d, k, C1_5):
    """``min(d, max(1, ceil(C1_5 ln k)))``."""
    return min(d, max(1, math.ceil(C1_5 * math.log(k))))


def random_frame(d, k, C1_5, seed, key=()):
    """Haar-distributed orthonormal frame in R^d.

    QR of a Gaussian matrix, with column signs fixed by the diagonal of R
    so the result is exactly Haar distributed.
    """
    if d < 1 or k < 1:
        raise ParameterError("need d >= 1 and k >= 1")
    rng = stream(seed, "frame", *key)
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    q.setflags(write=False)
    return ProjectionFrame(q, reduced_dim(d, k, C1_5), seed)


def base_coords(frame):
    return list(range(frame.dbar))


def augmented_coords(frame, l):
    """Coordinates spanning A_l: the first dbar frame vectors plus e_l."""
    return list(range(frame.dbar)) + [l]


def project(points, frame, coords):
    """Coordinates of ``points`` along the frame vectors listed in ``coords``."""
    coords = list(coords)
    if not coords:
        raise DomainError("coords must be nonempty")
    d = frame.d
    if min(coords) < 0 or max(coords) >= d:
        raise DomainError(f"coordinate index out of range [0, {d})")
    pts = np.asarray(points, dtype=float)
    return pts @ frame.basis[:, coords]


def patch_centers(base, augmented, tol, frame=None):
    """Reassemble full centers from their base and augmented projections.

    Parameters
    ----------
    base : (k0, dbar) array
        Centers in the first dbar frame coordinates.
    augmented : dict
        Maps each remaining coordinate index l to a (k0, dbar + 1) array of
        centers in A_l (last column is the e_l coordinate).
    tol : float
        Matching radius in the shared dbar coordinates.
    frame : ProjectionFrame, optional
        If given, the result is rotated back to the standard basis;
        otherwise it is returned in frame coordinates.
    """
    base = np.asarray(base, dtype=float)
    k0, dbar = base.shape
    if not tol > 0:
        raise DomainError("tol must be positive")
    d = dbar + len(augmented)
    out = np.zeros((k0, d))
    out[:, :dbar] = base
    for l in sorted(augmented):
        aug = np.asarray(augmented[l], dtype=float)
        if aug.shape != (k0, dbar + 1):
            raise DomainError(f"augmented set for coordinate {l} has shape {aug.shape}")
        if not dbar <= l < d:
            raise DomainError(f"augmented coordinate {l} outside [{dbar}, {d})")
        dist = cdist(base, aug[:, :dbar])
        taken = {}
        for i in range(k0):
            hits = np.flatnonzero(dist[i] < tol)
            if hits.size != 1:
                raise PatchAmbiguityError(i, l, int(hits.size))
            j = int(hits[0])
            if j in taken:
                # two base centers claim the same augmented center
                raise PatchAmbiguityError(i, l, 2)
            taken[j] = i
            out[i, l] = aug[j, dbar]
    if frame is not None:
        if frame.d != d:
            raise DomainError("frame dimension does not match the assembled centers")
        return out @ frame.basis.T
    return out
