"""Mixture data model, seeded sampling and point-set metrics."""
import csv
import json
import math
from dataclasses import dataclass, field, asdict, fields

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DomainError, ParameterError
from .rng import stream


def _frozen_array(values, ndim, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ParameterError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Spherical Gaussian mixture ``sum_l w_l N(y_l, sigma^2 I)``.

    Parameters
    ----------
    d : int
        Ambient dimension.
    centers : array_like, shape (k0, d)
    weights : array_like, shape (k0,)
        Must be positive and sum to one.
    sigma : float
        Common standard deviation.
    """

    d: int
    centers: np.ndarray
    weights: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        centers = _frozen_array(self.centers, 2, "centers")
        weights = _frozen_array(self.weights, 1, "weights")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError("d must be a positive integer")
        object.__setattr__(self, "d", int(self.d))
        if centers.shape[0] < 1:
            raise ParameterError("need at least one center")
        if centers.shape[1] != self.d:
            raise ParameterError(f"centers have dimension {centers.shape[1]}, expected {self.d}")
        if weights.shape[0] != centers.shape[0]:
            raise ParameterError("weights and centers differ in length")
        if not np.all(np.isfinite(centers)):
            raise ParameterError("centers must be finite")
        if np.any(weights <= 0):
            raise ParameterError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights sum to {weights.sum()!r}, not 1")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError("sigma must be positive and finite")
        if centers.shape[0] > 1 and pdist(centers).min() == 0.0:
            raise ParameterError("centers must be pairwise distinct")

    @property
    def k0(self):
        return self.centers.shape[0]

    @property
    def w_min(self):
        return float(self.weights.min())

    def to_dict(self):
        return {
            "d": self.d,
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "sigma": float(self.sigma),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(int(doc["d"]), doc["centers"], doc["weights"], float(doc.get("sigma", 1.0)))
        except KeyError as exc:
            raise ParameterError(f"missing field {exc.args[0]!r}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Points in R^d, optionally with the hidden component labels.

    Labels exist for simulation oracles only; learning code never reads them.
    """

    points: np.ndarray
    labels: np.ndarray = None
    seed: int = None

    def __post_init__(self):
        pts = _frozen_array(self.points, 2, "points")
        if pts.shape[0] < 1:
            raise ParameterError("a sample set needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("points must be finite")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ParameterError("labels must have one entry per point")
            if lab.min() < 0:
                raise ParameterError("labels must be non-negative")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def unlabeled(self):
        return SampleSet(self.points, None, self.seed)

    def subset(self, index):
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return SampleSet(self.points[index], labels, self.seed)

    def to_csv(self, path):
        d = self.d
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = [f"x{i}" for i in range(d)]
            if self.labels is not None:
                header.append("label")
            writer.writerow(header)
            for i in range(self.n):
                row = [repr(float(v)) for v in self.points[i]]
                if self.labels is not None:
                    row.append(int(self.labels[i]))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        has_label = header and header[-1] == "label"
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        if has_label:
            return cls(data[:, :-1], data[:, -1].astype(np.int64))
        return cls(data)


@dataclass(frozen=True)
class SeparationSpec:
    """Separation ``delta_big`` (units of sigma*sqrt(d)) and kernel width ratio ``c32``."""

    delta_big: float
    c32: float

    def __post_init__(self):
        if not self.delta_big > 0:
            raise ParameterError("delta_big must be positive")
        if not self.c32 >= 1:
            raise ParameterError("c32 must be at least 1")

    @property
    def delta_bar(self):
        return self.delta_big / self.c32


@dataclass(frozen=True)
class ConstantsConfig:
    """The tunable constant family of the algorithm.

    Defaults are desk-scale values; :meth:`theory` gives a conservative preset.
    ``delta_acc`` is the target accuracy in units of ``sigma * sqrt(d)``.
    """

    C1: float = 10.0
    C1_5: float = 1.4
    C3_2: float = 4.0
    C3_5: float = 1.0
    C3_6: float = 3.0
    C4_5: float = 0.5
    C4_6: float = 2.0
    C7: float = 1.0
    c: float = 1.0
    eta: float = 0.1
    delta_acc: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"{f.name} must be a positive number, got {v!r}")
        if self.c > 1:
            raise ParameterError("c must be at most 1")
        if not self.eta < 1:
            raise ParameterError("eta must lie in (0, 1)")

    @classmethod
    def theory(cls):
        return cls(C1=10.0, C1_5=10.0, C3_2=10.0, C3_5=10.0, C3_6=1000.0,
                   C4_5=10.0, C4_6=10.0, C7=10.0, c=1.0, eta=0.1, delta_acc=0.1)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ParameterError(f"unknown constants {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


def sample_mixture(params, n, seed):
    """Draw ``n`` labeled points from ``params``.

    Each point picks component l with probability w_l and adds
    ``sigma * N(0, I)`` to y_l.
    """
    if not isinstance(params, MixtureParams):
        raise ParameterError("params must be a MixtureParams")
    if int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    n = int(n)
    rng = stream(seed, "sample")
    labels = rng.choice(params.k0, size=n, p=params.weights)
    noise = rng.standard_normal((n, params.d))
    points = params.centers[labels] + params.sigma * noise
    return SampleSet(points, labels, seed)


def _as_points(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DomainError(f"{name} must be a nonempty point set")
    return arr


def hausdorff(A, B):
    """Hausdorff distance between two finite point sets.

    A 1-d array is read as a set of scalars.
    """
    a = _as_points(A, "A")
    b = _as_points(B, "B")
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    dist = cdist(a, b)
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def min_separation(centers):
    """Smallest pairwise distance among ``centers``."""
    c = np.asarray(centers, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2 or c.shape[0] < 2:
        raise DomainError("need at least two centers")
    return float(pdist(c).min())
