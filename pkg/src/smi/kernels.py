"""Smoothing kernels K_delta and kernel-smoothed likelihoods p_delta.

Continuous kernels (Gaussian, top-hat) act on real-valued responses; discrete
kernels (uniform on the integer neighbourhood, optionally with a half-width
growing like sqrt(y)) act on counts.  The Poisson smoothed likelihood is the
probability mass of the neighbourhood, computed from the Poisson CDF through
the regularised incomplete gamma function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._accel import jit
from .errors import QuadratureError

GAUSSIAN = 0
TOPHAT = 1
DISCRETE_UNIFORM = 2
SCALED_TOPHAT = 3

_KINDS = {
    "gaussian": GAUSSIAN,
    "tophat": TOPHAT,
    "discrete_uniform": DISCRETE_UNIFORM,
    "scaled_tophat": SCALED_TOPHAT,
}

_EPS = 1e-16
_MAXIT = 100_000
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """A normalised smoothing kernel K_delta(y, y_tilde).

    ``kind`` is one of ``gaussian``, ``tophat`` (continuous data) or
    ``discrete_uniform``, ``scaled_tophat`` (count data).  The scaled top-hat
    uses half-width ``sqrt(y) * delta`` around the observed count ``y``
    (``delta`` when ``y == 0``).
    """

    kind: str
    delta: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        d = float(self.delta)
        if math.isnan(d) or d < 0:
            raise ValueError("kernel bandwidth must be >= 0")
        if d == 0 and self.kind != "discrete_uniform":
            raise ValueError(f"{self.kind} kernel needs delta > 0")
        object.__setattr__(self, "delta", d)

    @property
    def code(self) -> int:
        return _KINDS[self.kind]

    @property
    def is_discrete(self) -> bool:
        return self.code in (DISCRETE_UNIFORM, SCALED_TOPHAT)

    def with_delta(self, delta: float) -> "KernelSpec":
        return KernelSpec(self.kind, delta)

    def half_width(self, y):
        y = np.asarray(y, dtype=float)
        if self.code == SCALED_TOPHAT:
            return np.where(y > 0, np.sqrt(np.maximum(y, 0.0)) * self.delta, self.delta)
        return np.full_like(y, self.delta)

    def neighborhood(self, y):
        """Integer bounds (lo, hi) of V(y, delta) for count data."""
        if not self.is_discrete:
            raise ValueError("neighbourhoods are defined for discrete kernels only")
        y = np.asarray(y, dtype=float)
        h = self.half_width(y)
        lo = np.maximum(0.0, np.ceil(y - h)).astype(np.int64)
        hi = np.floor(y + h).astype(np.int64)
        return lo, hi

    def logpdf(self, y, y_tilde):
        """log K_delta(y, y_tilde), elementwise; -inf outside the support."""
        y = np.asarray(y, dtype=float)
        yt = np.asarray(y_tilde, dtype=float)
        d = self.delta
        if self.code == GAUSSIAN:
            return -0.5 * ((yt - y) / d) ** 2 - math.log(d) - _LOG_SQRT_2PI
        if self.code == TOPHAT:
            inside = np.abs(yt - y) < d
            return np.where(inside, -math.log(2.0 * d), -np.inf)
        lo, hi = self.neighborhood(y)
        integral = yt == np.round(yt)
        inside = integral & (yt >= lo) & (yt <= hi)
        with np.errstate(divide="ignore"):
            return np.where(inside, -np.log((hi - lo + 1).astype(float)), -np.inf)

    def sample(self, y, rng):
        """Draw y_tilde ~ K_delta(y, .) for each element of ``y``."""
        y = np.asarray(y, dtype=float)
        if self.code == GAUSSIAN:
            return y + self.delta * rng.standard_normal(y.shape)
        if self.code == TOPHAT:
            return y + rng.uniform(-self.delta, self.delta, y.shape)
        lo, hi = self.neighborhood(y)
        return rng.integers(lo, hi + 1).astype(float)


def GaussianKernel(delta):
    return KernelSpec("gaussian", delta)


def TopHat(delta):
    return KernelSpec("tophat", delta)


def DiscreteUniform(delta):
    return KernelSpec("discrete_uniform", delta)


def ScaledTopHat(delta):
    return KernelSpec("scaled_tophat", delta)


# --- regularised incomplete gamma -----------------------------------------


@jit(cache=True)
def _log_gser(a, x):
    # series for log P(a, x), valid for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAXIT):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return math.log(total) - x + a * math.log(x) - math.lgamma(a)


@jit(cache=True)
def _log_gcf(a, x):
    # modified Lentz continued fraction for log Q(a, x), valid for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.log(h) - x + a * math.log(x) - math.lgamma(a)


@jit(cache=True)
def log_gamma_p(a, x):
    """log of the regularised lower incomplete gamma function P(a, x)."""
    if x <= 0.0:
        return -math.inf
    if x < a + 1.0:
        return _log_gser(a, x)
    q = math.exp(_log_gcf(a, x))
    return math.log1p(-q)


@jit(cache=True)
def log_gamma_q(a, x):
    """log of the regularised upper incomplete gamma function Q(a, x)."""
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        p = math.exp(_log_gser(a, x))
        return math.log1p(-p)
    return _log_gcf(a, x)


@jit(cache=True)
def poisson_logpmf(k, mu):
    if k < 0:
        return -math.inf
    if mu <= 0.0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(mu) - mu - math.lgamma(k + 1.0)


@jit(cache=True)
def poisson_logcdf(k, mu):
    """log F(k | mu) = log P(X <= k) = log Q(k + 1, mu)."""
    if k < 0:
        return -math.inf
    return log_gamma_q(k + 1.0, mu)


@jit(cache=True)
def poisson_logsf(k, mu):
    """log P(X > k) = log P(k + 1, mu)."""
    if k < 0:
        return 0.0
    return log_gamma_p(k + 1.0, mu)


@jit(cache=True)
def _log1mexp(d):
    # log(1 - exp(d)) for d <= 0
    if d > -0.6931471805599453:
        return math.log(-math.expm1(d))
    return math.log1p(-math.exp(d))


@jit(cache=True)
def log_poisson_window(lo, hi, mu):
    """log P(lo <= X <= hi) for X ~ Poisson(mu), lo >= 0.

    Computed as a difference of CDFs, using whichever tail keeps the two
    terms well separated.
    """
    if hi < lo:
        return -math.inf
    if lo == hi:
        return poisson_logpmf(lo, mu)
    if mu <= 0.0:
        return 0.0 if lo == 0 else -math.inf
    if mu <= lo:
        # window to the right of the mean: P(X >= lo) - P(X >= hi + 1)
        a = log_gamma_p(float(lo), mu) if lo > 0 else 0.0
        b = log_gamma_p(hi + 1.0, mu)
        return a + _log1mexp(b - a)
    if mu >= hi:
        # window to the left of the mean: F(hi) - F(lo - 1)
        a = log_gamma_q(hi + 1.0, mu)
        if lo == 0:
            return a
        b = log_gamma_q(float(lo), mu)
        return a + _log1mexp(b - a)
    left = math.exp(log_gamma_q(float(lo), mu)) if lo > 0 else 0.0
    right = math.exp(log_gamma_p(hi + 1.0, mu))
    return math.log1p(-(left + right))


@jit(cache=True)
def discrete_bounds(kcode, y, delta):
    """Integer neighbourhood V(y, delta) as (lo, hi)."""
    h = delta
    if kcode == SCALED_TOPHAT and y > 0:
        h = math.sqrt(y) * delta
    lo = math.ceil(y - h)
    if lo < 0:
        lo = 0
    hi = math.floor(y + h)
    return int(lo), int(hi)


@jit(cache=True)
def smoothed_poisson_scalar(y, mu, kcode, delta):
    lo, hi = discrete_bounds(kcode, y, delta)
    return log_poisson_window(lo, hi, mu) - math.log(hi - lo + 1.0)


@jit(cache=True)
def log_normal_interval(lo, hi, m, s):
    """log P(lo < X < hi) for X ~ N(m, s^2), stable in both tails."""
    a = (lo - m) / s
    b = (hi - m) / s
    r2 = math.sqrt(2.0)
    if a > 0.0:
        # both in the upper tail
        pa = 0.5 * math.erfc(a / r2)
        pb = 0.5 * math.erfc(b / r2)
        val = pa - pb
    elif b < 0.0:
        pa = 0.5 * math.erfc(-a / r2)
        pb = 0.5 * math.erfc(-b / r2)
        val = pb - pa
    else:
        val = 1.0 - 0.5 * math.erfc(-a / r2) - 0.5 * math.erfc(b / r2)
    if val <= 0.0:
        return -math.inf
    return math.log(val)


@jit(cache=True)
def kernel_logpdf(kcode, y, yt, delta):
    """Scalar log K_delta(y, yt) for compiled samplers."""
    if kcode == GAUSSIAN:
        return -0.5 * ((yt - y) / delta) ** 2 - math.log(delta) - _LOG_SQRT_2PI
    if kcode == TOPHAT:
        if abs(yt - y) < delta:
            return -math.log(2.0 * delta)
        return -math.inf
    if yt != math.floor(yt):
        return -math.inf
    lo, hi = discrete_bounds(kcode, y, delta)
    if yt < lo or yt > hi:
        return -math.inf
    return -math.log(hi - lo + 1.0)


@jit(cache=True)
def _smoothed_poisson_vec(y, mu, kcode, delta):
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        out[i] = smoothed_poisson_scalar(y[i], mu[i], kcode, delta)
    return out


def smoothed_poisson_loglik(y, mu, delta, kernel: str = "discrete_uniform"):
    """log p_delta(y | mu) for the Poisson model with a discrete uniform kernel.

    Returns ``log{[F(hi | mu) - F(lo - 1 | mu)] / |V|}`` where ``V = {lo..hi}``
    is the integer neighbourhood of ``y``.  The ``1/|V|`` factor does not
    depend on ``mu`` so it cancels from every posterior.  Scalars in, scalar
    out; arrays broadcast.
    """
    code = _KINDS[kernel]
    if code not in (DISCRETE_UNIFORM, SCALED_TOPHAT):
        raise ValueError("Poisson smoothing needs a discrete kernel")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    yb, mub = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(mu, dtype=float))
    if np.any(yb < 0) or np.any(yb != np.round(yb)):
        raise ValueError("counts must be non-negative integers")
    if np.any(mub <= 0):
        raise ValueError("Poisson mean must be positive")
    out = _smoothed_poisson_vec(yb.ravel().copy(), mub.ravel().copy(), code, float(delta))
    out = out.reshape(yb.shape)
    return float(out) if out.ndim == 0 else out


def smoothed_loglik_gaussian(y_loglik_pointwise, Y, phi, theta, delta, normal_params=None,
                             rtol=1e-10, width=12.0):
    """Sum over observations of log int p(y~ | phi, theta) N(y~; Y_i, delta^2) dy~.

    ``Y`` holds one observation per row, response in column 0.  When
    ``normal_params(phi, theta, row)`` is supplied and returns the mean and
    standard deviation of a normal observation model, the convolution is
    evaluated in closed form as N(Y_i; m, s^2 + delta^2).  Otherwise each
    term is integrated numerically over +-``width`` kernel scales.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] == 0:
        return 0.0
    if delta <= 0:
        raise ValueError("delta must be > 0")
    total = 0.0
    for row in Y:
        if normal_params is not None:
            m, s = normal_params(phi, theta, row)
            v = s * s + delta * delta
            total += -0.5 * (row[0] - m) ** 2 / v - 0.5 * math.log(2 * math.pi * v)
            continue
        work = row.copy()

        def logf(t):
            work[0] = t
            return y_loglik_pointwise(phi, theta, work) - 0.5 * ((t - row[0]) / delta) ** 2

        lo, hi = row[0] - width * delta, row[0] + width * delta
        probe = np.linspace(lo, hi, 257)
        vals = np.array([logf(t) for t in probe])
        c = np.max(vals)
        if not np.isfinite(c):
            total += -math.inf
            continue
        val, err = integrate.quad(lambda t: math.exp(logf(t) - c), lo, hi,
                                  epsabs=0.0, epsrel=rtol, limit=500, points=[row[0]])
        if val <= 0 or err > max(rtol * 100, 1e-8) * val:
            raise QuadratureError(f"quadrature did not converge for y={row[0]}",
                                  achieved=err / val if val > 0 else math.inf)
        total += c + math.log(val) - math.log(delta) - _LOG_SQRT_2PI
    return total
