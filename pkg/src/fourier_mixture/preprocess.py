"""Cluster splitting, PCA reduction and sample-size budgets."""
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, InsufficientDataError, ParameterError
from .model import SampleSet


@dataclass(frozen=True)
class ProximityDecomposition:
    """Connected components of the proximity graph, ordered by smallest member."""

    components: tuple
    threshold: float

    def __len__(self):
        return len(self.components)

    def labels(self, n):
        out = np.empty(n, dtype=np.int64)
        for i, comp in enumerate(self.components):
            out[comp] = i
        return out

    def to_json(self):
        return json.dumps({str(i): comp.tolist() for i, comp in enumerate(self.components)})


@dataclass(frozen=True)
class BoundingBall:
    radius: float


def proximity_threshold(d, n, C1):
    """Edge radius ``2 sqrt(3 d ln(C1 d n))`` of the proximity graph."""
    if d < 1 or n < 1 or not C1 > 0:
        raise DomainError("need d, n >= 1 and C1 > 0")
    arg = C1 * d * n
    if arg <= 1:
        raise DomainError(f"C1*d*n = {arg} must exceed 1")
    return 2.0 * math.sqrt(3.0 * d * math.log(arg))


def bounding_ball(k, d, n, C1):
    """Radius ``k sqrt(d ln(C1 d n))`` of a centered ball holding every sample."""
    arg = C1 * d * n
    if arg <= 1:
        raise DomainError(f"C1*d*n = {arg} must exceed 1")
    return BoundingBall(k * math.sqrt(d * math.log(arg)))


def split_clusters(samples, threshold, block=512):
    """Connected components of the graph joining points closer than ``threshold``.

    The search sweeps a frontier of newly reached points against the
    still-unvisited ones, so each pairwise distance is computed at most
    once per component and usually far fewer times.
    """
    if not threshold > 0:
        raise DomainError("threshold must be positive")
    pts = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    n = pts.shape[0]
    thr2 = threshold * threshold
    unvisited = np.ones(n, dtype=bool)
    components = []
    for start in range(n):
        if not unvisited[start]:
            continue
        unvisited[start] = False
        members = [start]
        frontier = np.array([start])
        while frontier.size:
            rest = np.flatnonzero(unvisited)
            if rest.size == 0:
                break
            reached = np.zeros(rest.size, dtype=bool)
            for lo in range(0, frontier.size, block):
                chunk = frontier[lo:lo + block]
                todo = ~reached
                if not todo.any():
                    break
                cand = rest[todo]
                close = (cdist(pts[chunk], pts[cand], "sqeuclidean") < thr2).any(axis=0)
                reached[np.flatnonzero(todo)[close]] = True
            frontier = rest[reached]
            unvisited[frontier] = False
            members.extend(frontier.tolist())
        components.append(np.sort(np.array(members, dtype=np.int64)))
    return ProximityDecomposition(tuple(components), float(threshold))


def pca_reduce(samples, k, center=False):
    """Project onto the top-k eigenvectors of the second-moment matrix.

    Returns ``(basis, projected)`` where ``basis`` has orthonormal columns
    (shape d x k) and ``projected`` holds the coordinates in that basis.
    The matrix is uncentered unless ``center`` is set.
    """
    pts = samples.points
    n, d = pts.shape
    if not 1 <= k <= d:
        raise ParameterError(f"k must lie in [1, {d}]")
    if n < k:
        raise InsufficientDataError(f"{n} samples cannot span {k} dimensions")
    x = pts - pts.mean(axis=0) if center else pts
    moment = x.T @ x / n
    vals, vecs = np.linalg.eigh(moment)
    order = np.argsort(vals)[::-1][:k]
    basis = vecs[:, order]
    # fix the sign so the basis is reproducible
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(k)])
    basis = basis * flip
    return basis, SampleSet(pts @ basis, samples.labels, samples.seed)


def coverage_sample_size(k, c, eta):
    """Samples needed so every center has a sample within ``2 sqrt(d)``.

    ``1 + (k/c) * ceil(ln ceil(300k/eta)) * ceil(ln(ceil(300k/eta) * ceil(ln ceil(300k/eta))))``
    with natural logarithms.
    """
    if k < 1 or not 0 < c <= 1 or not 0 < eta < 1:
        raise DomainError("need k >= 1, c in (0, 1], eta in (0, 1)")
    base = math.ceil(300 * k / eta)
    inner = math.ceil(math.log(base))
    outer = math.ceil(math.log(base * inner))
    return 1 + math.ceil(k / c * inner * outer)
