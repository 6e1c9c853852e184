"""Concrete two-module models used in the examples.

Each observation is one row of a 2-D float array with the response in column
0.  Extra columns carry per-observation design information:

* biased data:  Y rows ``(y,)``,            Z rows ``(z,)``
* regression:   Y rows ``(y, x)``,          Z rows ``(z,)``
* HPV:          Y rows ``(cases, T, pop)``, Z rows ``(positives, N, pop)``

The log-density kernels below are compiled by numba when available and are
shared by the Python-level :class:`~smi.core.TwoModuleModel` wrappers and the
MCMC engine.
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np

from ._accel import jit
from .kernels import (
    DISCRETE_UNIFORM,
    GAUSSIAN,
    SCALED_TOPHAT,
    TOPHAT,
    log_normal_interval,
    poisson_logpmf,
    smoothed_poisson_scalar,
)

ModelKernels = namedtuple(
    "ModelKernels",
    ["log_prior_phi", "log_prior_theta", "z_loglik", "y_loglik_vec", "y_smoothed_vec"],
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def as_rows(data, ncols=1):
    """Coerce data to a 2-D float array with one observation per row."""
    a = np.asarray(data, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if ncols == 1 else a.reshape(-1, ncols)
    return np.ascontiguousarray(a)


@jit(cache=True)
def _normal_logpdf_vec(x, m, s):
    return -0.5 * ((x - m) / s) ** 2 - math.log(s) - _HALF_LOG_2PI


@jit(cache=True)
def _tophat_smoothed_vec(y, m, s, delta):
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        out[i] = log_normal_interval(y[i] - delta, y[i] + delta, m[i], s) - math.log(2.0 * delta)
    return out


# --- biased data: Y_i ~ N(phi + theta, sy^2), Z_j ~ N(phi, sz^2) ---------
# consts: [sigma_y, sigma_z, sigma_theta]


@jit(cache=True)
def _biased_log_prior_phi(phi, c):
    return 0.0


@jit(cache=True)
def _biased_log_prior_theta(theta, phi, c):
    return np.sum(_normal_logpdf_vec(theta, 0.0, c[2]))


@jit(cache=True)
def _biased_z_loglik(phi, Z, c):
    return np.sum(_normal_logpdf_vec(Z[:, 0], phi[0], c[1]))


@jit(cache=True)
def _biased_y_loglik_vec(phi, theta, Y, c):
    return _normal_logpdf_vec(Y[:, 0], phi[0] + theta[0], c[0])


@jit(cache=True)
def _biased_y_smoothed_vec(phi, theta, Y, c, kcode, delta):
    m = np.full(Y.shape[0], phi[0] + theta[0])
    if kcode == GAUSSIAN:
        return _normal_logpdf_vec(Y[:, 0], m, math.sqrt(c[0] ** 2 + delta ** 2))
    return _tophat_smoothed_vec(Y[:, 0], m, c[0], delta)


BIASED_KERNELS = ModelKernels(
    _biased_log_prior_phi,
    _biased_log_prior_theta,
    _biased_z_loglik,
    _biased_y_loglik_vec,
    _biased_y_smoothed_vec,
)


# --- regression: Y_i ~ N(phi + theta x_i, sy^2), Z_j ~ N(phi, sz^2) -------
# consts: [sigma_y, sigma_z]; flat priors on both parameters


@jit(cache=True)
def _flat_log_prior_phi(phi, c):
    return 0.0


@jit(cache=True)
def _flat_log_prior_theta(theta, phi, c):
    return 0.0


@jit(cache=True)
def _reg_y_loglik_vec(phi, theta, Y, c):
    return _normal_logpdf_vec(Y[:, 0], phi[0] + theta[0] * Y[:, 1], c[0])


@jit(cache=True)
def _reg_y_smoothed_vec(phi, theta, Y, c, kcode, delta):
    m = phi[0] + theta[0] * Y[:, 1]
    if kcode == GAUSSIAN:
        return _normal_logpdf_vec(Y[:, 0], m, math.sqrt(c[0] ** 2 + delta ** 2))
    return _tophat_smoothed_vec(Y[:, 0], m, c[0], delta)


REGRESSION_KERNELS = ModelKernels(
    _flat_log_prior_phi,
    _flat_log_prior_theta,
    _biased_z_loglik,
    _reg_y_loglik_vec,
    _reg_y_smoothed_vec,
)


# --- HPV: Y_i ~ Poisson(T_i exp(theta1 + theta2 phi_i)), Z_i ~ Bin(N_i, phi_i)
# consts: [prior sd of theta]; phi_i ~ U(0, 1)


@jit(cache=True)
def _hpv_log_prior_phi(phi, c):
    for v in phi:
        if not (0.0 < v < 1.0):
            return -math.inf
    return 0.0


@jit(cache=True)
def _hpv_log_prior_theta(theta, phi, c):
    return np.sum(_normal_logpdf_vec(theta, 0.0, c[0]))


@jit(cache=True)
def _hpv_z_loglik(phi, Z, c):
    total = 0.0
    for r in range(Z.shape[0]):
        k = Z[r, 0]
        n = Z[r, 1]
        p = phi[int(Z[r, 2])]
        if not (0.0 < p < 1.0):
            return -math.inf
        total += (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
                  + k * math.log(p) + (n - k) * math.log1p(-p))
    return total


@jit(cache=True)
def _hpv_mu(phi, theta, Y):
    mu = np.empty(Y.shape[0])
    for r in range(Y.shape[0]):
        mu[r] = Y[r, 1] * math.exp(theta[0] + theta[1] * phi[int(Y[r, 2])])
    return mu


@jit(cache=True)
def _hpv_y_loglik_vec(phi, theta, Y, c):
    mu = _hpv_mu(phi, theta, Y)
    out = np.empty(Y.shape[0])
    for r in range(Y.shape[0]):
        out[r] = poisson_logpmf(Y[r, 0], mu[r])
    return out


@jit(cache=True)
def _hpv_y_smoothed_vec(phi, theta, Y, c, kcode, delta):
    mu = _hpv_mu(phi, theta, Y)
    out = np.empty(Y.shape[0])
    for r in range(Y.shape[0]):
        out[r] = smoothed_poisson_scalar(Y[r, 0], mu[r], kcode, delta)
    return out


HPV_KERNELS = ModelKernels(
    _hpv_log_prior_phi,
    _hpv_log_prior_theta,
    _hpv_z_loglik,
    _hpv_y_loglik_vec,
    _hpv_y_smoothed_vec,
)


# --- closed-form prior predictive log p(Y | phi) ----------------------------


def biased_log_marginal(phi, Y, sigma_y, sigma_theta):
    """log p(Y | phi) with theta ~ N(0, sigma_theta^2) integrated out.

    Y is jointly N(phi 1, sigma_y^2 I + sigma_theta^2 11'), evaluated with the
    Sherman-Morrison identities.
    """
    y = as_rows(Y)[:, 0]
    n = y.size
    if n == 0:
        return 0.0
    r = y - float(np.ravel(phi)[0])
    sy2, st2 = sigma_y**2, sigma_theta**2
    logdet = n * math.log(sy2) + math.log1p(n * st2 / sy2)
    quad = (np.dot(r, r) - st2 * r.sum() ** 2 / (sy2 + n * st2)) / sy2
    return -0.5 * (n * math.log(2 * math.pi) + logdet + quad)


def regression_log_marginal(phi, Y, sigma_y):
    """log int prod_i N(y_i; phi + theta x_i, sigma_y^2) d theta (flat prior on theta)."""
    Y = as_rows(Y, 2)
    n = Y.shape[0]
    if n == 0:
        return 0.0
    y, x = Y[:, 0], Y[:, 1]
    r = y - float(np.ravel(phi)[0])
    sxx = np.dot(x, x)
    if sxx <= 0:
        from .errors import DegenerateDataError

        raise DegenerateDataError("all covariates are zero")
    sxr = np.dot(x, r)
    rss = np.dot(r, r) - sxr**2 / sxx
    s2 = sigma_y**2
    return (-0.5 * n * math.log(2 * math.pi * s2) - 0.5 * rss / s2
            + 0.5 * math.log(2 * math.pi * s2 / sxx))


SUPPORTED_KERNELS = {
    "biased": frozenset({GAUSSIAN, TOPHAT}),
    "regression": frozenset({GAUSSIAN, TOPHAT}),
    "hpv": frozenset({DISCRETE_UNIFORM, SCALED_TOPHAT}),
}
