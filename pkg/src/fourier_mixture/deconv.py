"""Fourier deconvolution: the truncated kernel, the empirical characteristic
function and the Monte-Carlo estimate f_x of the smoothed center measure.

Fourier convention: ``f_hat(w) = (2 pi)^(-d/2) * integral f(x) exp(-i w.x) dx``.
"""
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, ParameterError
from .model import MixtureParams, SampleSet
from .rng import stream

try:
    import finufft
except ImportError:  # pragma: no cover - finufft is a declared dependency
    finufft = None

NUFFT_EPS = 1e-7  # well below the Monte-Carlo error of any oracle
_CHUNK = 1 << 22  # complex entries per block in direct sums


def _log_unit_ball_volume(d):
    return 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1))


@dataclass(frozen=True)
class DeconvKernel:
    """Truncated Gaussian kernel ``s_hat(w) = gamma(w * delta_bar) 1(|w| <= radius)``."""

    dbar: int
    delta_bar: float
    radius: float
    C3_5: float
    vol_B: float

    @property
    def gamma0(self):
        """Peak height ``(2 pi delta_bar^2)^(-dbar/2)`` of the smoothing Gaussian."""
        return (2 * math.pi * self.delta_bar ** 2) ** (-self.dbar / 2)

    @property
    def log_vol_B(self):
        return _log_unit_ball_volume(self.dbar) + self.dbar * math.log(self.radius)

    def to_dict(self):
        return {"dbar": self.dbar, "delta_bar": self.delta_bar, "radius": self.radius,
                "C3_5": self.C3_5, "vol_B": self.vol_B}


def kernel_radius(dbar, delta_bar, k, C3_5):
    """``(sqrt(C3_5 ln k) + sqrt(dbar)) / delta_bar``."""
    return (math.sqrt(C3_5 * math.log(k)) + math.sqrt(dbar)) / delta_bar


def make_kernel(dbar, delta_bar, k, C3_5, radius=None):
    if dbar < 1 or not delta_bar > 0 or k < 1 or not C3_5 > 0:
        raise ParameterError("need dbar >= 1, delta_bar > 0, k >= 1, C3_5 > 0")
    if radius is None:
        radius = kernel_radius(dbar, delta_bar, k, C3_5)
    vol = math.exp(_log_unit_ball_volume(dbar) + dbar * math.log(radius))
    return DeconvKernel(int(dbar), float(delta_bar), float(radius), float(C3_5), vol)


def gaussian(x, scale=1.0):
    """Density of N(0, scale^2 I) at the rows of ``x`` (or at a single point)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    return (2 * math.pi * scale ** 2) ** (-d / 2) * np.exp(-r2 / (2 * scale ** 2))


def s_hat(kernel, w):
    """Truncated kernel value at frequency ``w`` (a point or rows of points)."""
    w = np.asarray(w, dtype=float)
    r2 = np.sum(w * w, axis=-1)
    val = (2 * math.pi) ** (-kernel.dbar / 2) * np.exp(-0.5 * kernel.delta_bar ** 2 * r2)
    val = np.where(r2 <= kernel.radius ** 2, val, 0.0)
    return float(val) if val.ndim == 0 else val


def _points(samples):
    return samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)


def _direct_sum(x, z, coef, sign):
    """``sum_j coef_j exp(sign * i * z . x_j)`` for every row of ``z``.

    Phases are reduced to float32 before the trig calls, which is several
    times faster and costs about 1e-7 relative accuracy.
    """
    out = np.empty(z.shape[0], dtype=complex)
    c2 = np.stack([coef.real, coef.imag], axis=1).astype(np.float32)
    rows = max(1, _CHUNK // max(1, x.shape[0]))
    for lo in range(0, z.shape[0], rows):
        phase = (z[lo:lo + rows] @ x.T).astype(np.float32)
        cc = (np.cos(phase) @ c2).astype(float)
        ss = (np.sin(phase) @ c2).astype(float)
        out[lo:lo + rows] = (cc[:, 0] - sign * ss[:, 1]) + 1j * (cc[:, 1] + sign * ss[:, 0])
    return out


def _type3(x, coef, z, sign):
    dim = x.shape[1]
    xs = [np.ascontiguousarray(x[:, i]) for i in range(dim)]
    zs = [np.ascontiguousarray(z[:, i]) for i in range(dim)]
    c = np.ascontiguousarray(coef, dtype=complex)
    fn = {1: finufft.nufft1d3, 2: finufft.nufft2d3, 3: finufft.nufft3d3}[dim]
    return fn(*xs, c, *zs, isign=sign, eps=NUFFT_EPS)


def exp_sum(x, coef, z, sign):
    """``sum_j coef_j exp(sign * i * x_j . z_l)`` for each target ``z_l``.

    Uses a type-3 NUFFT in up to three dimensions when the problem is
    large enough to benefit, and blocked direct sums otherwise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if finufft is not None and x.shape[1] <= 3 and x.shape[0] * z.shape[0] > 200_000:
        return _type3(x, coef, z, sign)
    return _direct_sum(x, z, np.asarray(coef, dtype=complex), sign)


def ecf(samples, w):
    """Empirical characteristic function ``(2 pi)^(-d/2) mean_j exp(-i w.x_j)``.

    ``w`` may be one frequency or an (m, d) array of frequencies.
    """
    x = _points(samples)
    n, d = x.shape
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    wz = np.atleast_2d(w)
    if wz.shape[1] != d:
        raise DomainError(f"frequency dimension {wz.shape[1]} != sample dimension {d}")
    bound = (2 * math.pi) ** (-d / 2)
    coef = np.full(n, bound / n, dtype=complex)
    vals = exp_sum(x, coef, wz, -1)
    # the exact value never exceeds the bound; clip float32/NUFFT rounding past it
    mod = np.abs(vals)
    over = mod > bound
    vals[over] *= bound / mod[over]
    vals[~np.any(wz, axis=1)] = bound
    return complex(vals[0]) if single else vals


def uniform_ball(rng, m, dbar, radius):
    """``m`` uniform points in the centered ball: radius * U^(1/dbar) times a Gaussian direction."""
    u = rng.random(m)
    g = rng.standard_normal((m, dbar))
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0] = 1.0
    return (radius * u ** (1.0 / dbar))[:, None] * g / norms[:, None]


@dataclass(frozen=True, eq=False)
class FrequencyDraw:
    """Frequencies ``z_1..z_m`` uniform in the kernel ball, with the ECF at each.

    ``coef`` holds the per-frequency factor of f_x,
    ``(vol_B / m) gamma(z delta_bar) exp(|z|^2 / 2) mu_hat_e(z)``,
    assembled in log-magnitude form so large radii do not overflow early.
    """

    points: np.ndarray
    ecf_values: np.ndarray
    coef: np.ndarray
    seed: int = None

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def dbar(self):
        return self.points.shape[1]

    def metadata(self):
        return {"m": self.m, "seed": self.seed}


def draw_frequencies(kernel, samples, m, seed, key=()):
    """Sample ``m`` frequencies in the kernel ball and precompute the ECF there."""
    if int(m) != m or m < 1:
        raise ParameterError("m must be a positive integer")
    x = _points(samples)
    if x.shape[1] != kernel.dbar:
        raise DomainError(f"samples have dimension {x.shape[1]}, kernel expects {kernel.dbar}")
    rng = stream(seed, "freq", *key)
    z = uniform_ball(rng, int(m), kernel.dbar, kernel.radius)
    mu = ecf(x, z)
    r2 = np.sum(z * z, axis=1)
    with np.errstate(divide="ignore"):
        log_mag = (kernel.log_vol_B - math.log(m) - 0.5 * kernel.dbar * math.log(2 * math.pi)
                   + 0.5 * (1.0 - kernel.delta_bar ** 2) * r2 + np.log(np.abs(mu)))
    coef = np.exp(log_mag) * np.exp(1j * np.angle(mu))
    for arr in (z, mu, coef):
        arr.setflags(write=False)
    return FrequencyDraw(z, mu, coef, seed)


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    raw: complex
    m_used: int


def oracle_eval(draw, kernel, x):
    """Monte-Carlo estimate f_x at one point; ``value`` is its real part."""
    x = np.asarray(x, dtype=float)
    if x.shape != (kernel.dbar,):
        raise DomainError(f"x must have shape ({kernel.dbar},)")
    raw = complex(np.exp(1j * (draw.points @ x)) @ draw.coef)
    return OracleEstimate(raw.real, raw, draw.m)


def oracle_values(draw, x):
    """Real part of f_x at every row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return exp_sum(draw.points, draw.coef, x, 1).real


def oracle_grid(draw, origin, spacing, shape):
    """Real part of f_x on the box grid ``origin + spacing * j``, ``0 <= j < shape``.

    Returns an array of the given shape. Up to three dimensions this is a
    single type-1 NUFFT; in higher dimensions the exponential factorizes
    over coordinates and the sum becomes one complex matrix product.
    """
    origin = np.asarray(origin, dtype=float)
    return oracle_grid_many(draw, origin[None, :], spacing, shape)[0]


def oracle_grid_many(draw, origins, spacing, shape):
    """:func:`oracle_grid` for several equally shaped boxes at once.

    ``origins`` has one row per box; the result has shape ``(len(origins),) + shape``.
    """
    z = draw.points
    dim = z.shape[1]
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    shape = tuple(int(s) for s in shape)
    if len(shape) != dim or origins.shape[1] != dim:
        raise DomainError("origins and shape must match the draw dimension")
    nb = origins.shape[0]
    half = np.array([s // 2 for s in shape])
    if finufft is not None and dim <= 3:
        # mode index k = j - half; fold exp(i (origin + spacing*half) . z) into the weights
        c = draw.coef[None, :] * np.exp(1j * ((origins + spacing * half) @ z.T))
        pts = np.mod(spacing * z + math.pi, 2 * math.pi) - math.pi
        fn = {1: finufft.nufft1d1, 2: finufft.nufft2d1, 3: finufft.nufft3d1}[dim]
        args = [np.ascontiguousarray(pts[:, i]) for i in range(dim)]
        out = fn(*args, np.ascontiguousarray(c), shape, isign=1, eps=NUFFT_EPS)
        return out.real.reshape((nb,) + shape)
    out = np.empty((nb,) + shape)
    split = dim // 2
    # exp(i (o_i + s j) z_i) = exp(i o_i z_i) exp(i s j z_i); the second factor is shared
    steps = [np.exp(1j * spacing * np.outer(np.arange(shape[i]), z[:, i])) for i in range(dim)]
    left0 = _outer_rows(steps[:split])
    right0 = _outer_rows(steps[split:])
    for b in range(nb):
        phase = draw.coef * np.exp(1j * (z @ origins[b]))
        out[b] = ((left0 * phase) @ right0.T).real.reshape(shape)
    return out


def _outer_rows(factors):
    out = factors[0]
    for f in factors[1:]:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, f.shape[1])
    return out


def exact_smoothed(params, delta_bar, x):
    """``(gamma_{delta_bar} * nu)(x) = sum_j w_j N(x; y_j, delta_bar^2 I)``.

    Simulation-only oracle; ``x`` may be one point or rows of points.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    y = params.centers
    d = y.shape[1]
    if xs.shape[1] != d:
        raise DomainError("x has the wrong dimension")
    out = np.zeros(xs.shape[0])
    norm = (2 * math.pi * delta_bar ** 2) ** (-d / 2)
    for w, c in zip(params.weights, y):
        diff = xs - c
        out += w * norm * np.exp(-np.sum(diff * diff, axis=1) / (2 * delta_bar ** 2))
    return float(out[0]) if single else out


def log_exact_smoothed(params, delta_bar, x):
    """Logarithm of :func:`exact_smoothed`, stable far from every center."""
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    d = params.d
    sq = np.stack([np.sum((xs - c) ** 2, axis=1) for c in params.centers], axis=1)
    logs = np.log(params.weights)[None, :] - sq / (2 * delta_bar ** 2)
    out = logsumexp(logs, axis=1) - 0.5 * d * math.log(2 * math.pi * delta_bar ** 2)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


class MonteCarloOracle:
    """Pointwise and grid access to Re f_x for one frequency draw."""

    def __init__(self, draw, kernel):
        self.draw = draw
        self.kernel = kernel
        self.dbar = kernel.dbar
        self.calls = 0
        self._z = np.ascontiguousarray(draw.points)
        self._cr = np.ascontiguousarray(draw.coef.real)
        self._ci = np.ascontiguousarray(draw.coef.imag)
        self._cr32 = self._cr.astype(np.float32)
        self._ci32 = self._ci.astype(np.float32)

    def __call__(self, x):
        # Re sum_l coef_l exp(i z_l . x), without building an OracleEstimate
        self.calls += 1
        ph = self._z @ x
        return float(np.cos(ph) @ self._cr - np.sin(ph) @ self._ci)

    def values(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] > 64:
            return oracle_values(self.draw, x)
        ph = (x @ self._z.T).astype(np.float32)
        return (np.cos(ph) @ self._cr32 - np.sin(ph) @ self._ci32).astype(float)

    def grid(self, origin, spacing, shape):
        return oracle_grid(self.draw, origin, spacing, shape)

    def grid_many(self, origins, spacing, shape):
        return oracle_grid_many(self.draw, origins, spacing, shape)


class ExactOracle:
    """The same interface backed by the closed-form smoothed measure."""

    def __init__(self, params, delta_bar):
        self.params = params
        self.delta_bar = delta_bar
        self.dbar = params.d
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return exact_smoothed(self.params, self.delta_bar, x)

    def values(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        step = 1 << 18
        for lo in range(0, x.shape[0], step):
            out[lo:lo + step] = exact_smoothed(self.params, self.delta_bar, x[lo:lo + step])
        return out

    def grid(self, origin, spacing, shape):
        axes = [origin[i] + spacing * np.arange(s) for i, s in enumerate(shape)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))
        return self.values(mesh).reshape(shape)

    def grid_many(self, origins, spacing, shape):
        return np.stack([self.grid(o, spacing, shape) for o in np.atleast_2d(origins)])


def kernel_fidelity_bound(kernel, k):
    """``(2 pi delta_bar^2)^(-dbar/2) k^(-C3_5/2)``, a sup bound on |s - gamma_{delta_bar}|."""
    if k < 2:
        raise DomainError("k must be at least 2")
    return kernel.gamma0 * k ** (-kernel.C3_5 / 2)


def _big_ceil(expr_fn):
    # pick a working precision wide enough to hold every integer digit
    with mpmath.workdps(30):
        approx = expr_fn()
    digits = int(mpmath.log10(abs(approx) + 1)) + 30 if approx != 0 else 30
    with mpmath.workdps(digits):
        return int(mpmath.ceil(expr_fn()))


def theory_budgets(k, constants):
    """Frequency and sample budgets ``(m, n)`` at which the oracle guarantee holds.

    ``m = ceil(C3_6 k^C3_6 ln k)`` and
    ``n = ceil(C3_6 k^(C3_6+C3_5) ln(C3_6 k^(C3_6+C3_5) ln k))``, evaluated as
    exact Python integers. For reporting only.
    """
    if k < 2:
        raise DomainError("k must be at least 2")
    C36 = mpmath.mpf(constants.C3_6)
    C35 = mpmath.mpf(constants.C3_5)
    kk = mpmath.mpf(k)

    def m_expr():
        return C36 * kk ** C36 * mpmath.log(kk)

    def n_expr():
        a = C36 * kk ** (C36 + C35)
        return a * mpmath.log(a * mpmath.log(kk))

    return _big_ceil(m_expr), _big_ceil(n_expr)


def min_c36(constants, C0_1=10.0):
    """Smallest C3_6 allowed by the oracle guarantee for the given constants.

    ``C0_1`` is the reciprocal Hoeffding constant, which has no closed value.
    """
    C32, c = constants.C3_2, constants.c
    return (C0_1 * constants.C3_5
            + constants.C1_5 * (math.log(2 * math.pi) + 2 * math.log(2 * C32 / c))
            + constants.C3_5 * (8 + 2 * C32 ** 2 / c ** 2))


def log_concavity_bound(C3_2, c, dbar):
    """Additive log-concavity defect ``10^31 e^(1.21/20000) / (C3_2^30 c^2 dbar^15)``."""
    return 10.0 ** 31 * math.exp(1.21 / 20000) / (C3_2 ** 30 * c ** 2 * dbar ** 15)


def choose_m(kernel, samples, probes, target, seed, m0=256, m_max=1 << 16):
    """Grow m by doubling until the standard error of Re f_x at ``probes`` is below target/3.

    The standard error is estimated from the spread of per-frequency terms.
    Returns the chosen m.
    """
    m = int(m0)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    while True:
        draw = draw_frequencies(kernel, samples, m, seed, key=("choose_m", m))
        terms = (np.exp(1j * (probes @ draw.points.T)) * draw.coef).real * m
        se = terms.std(axis=1).max() / math.sqrt(m)
        if se < target / 3 or m >= m_max:
            return m
        m *= 2
