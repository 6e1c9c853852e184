"""Conjugate posteriors, pseudo-true values and exact ELPD for the two
Gaussian examples (biased data, misspecified regression).

The bandwidth ``delta`` may be ``math.inf``; every formula then takes its
analytic Cut limit instead of evaluating with a huge float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import InfluenceSetting
from .errors import DegenerateDataError, InternalInvariantError
from .models import as_rows

_LOG_2PI = math.log(2.0 * math.pi)


def _delta(d) -> float:
    if isinstance(d, InfluenceSetting):
        if d.kind == "delta" and d.kernel.kind != "gaussian":
            raise ValueError("closed forms are for the Gaussian kernel")
        return d.meta("delta")
    d = float(d)
    if math.isnan(d) or d < 0:
        raise ValueError("delta must be >= 0")
    return d


@dataclass(frozen=True)
class GaussianPosterior:
    """phi ~ N(mean, var) and theta | phi ~ N(theta_intercept + theta_slope * phi, theta_var).

    ``lam`` is the weight on the Z-module mean (biased data example) and
    ``rho`` the shrinkage/ratio parameter of the respective example.
    """

    mean: float
    var: float
    theta_intercept: float
    theta_slope: float
    theta_var: float
    lam: Optional[float] = None
    rho: Optional[float] = None

    def theta_given_phi(self, phi):
        return self.theta_intercept + self.theta_slope * phi, self.theta_var

    @property
    def joint_mean(self):
        return np.array([self.mean, self.theta_intercept + self.theta_slope * self.mean])

    @property
    def joint_cov(self):
        b = self.theta_slope
        return np.array([[self.var, b * self.var],
                         [b * self.var, self.theta_var + b * b * self.var]])


# --- biased data example ----------------------------------------------------


@dataclass(frozen=True)
class BiasedDataConfig:
    n: int
    m: int
    sigma_y: float
    sigma_z: float
    sigma_theta: float
    ybar: float
    zbar: float
    phi_star: float = 0.0
    theta_star: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be >= 1")
        if min(self.sigma_y, self.sigma_z, self.sigma_theta) <= 0:
            raise ValueError("scales must be positive")

    @classmethod
    def from_data(cls, Y, Z, sigma_y=1.0, sigma_z=2.0, sigma_theta=0.33, phi_star=0.0,
                  theta_star=1.0):
        y, z = as_rows(Y)[:, 0], as_rows(Z)[:, 0]
        return cls(y.size, z.size, sigma_y, sigma_z, sigma_theta, float(y.mean()),
                   float(z.mean()), phi_star, theta_star)


def _biased_rho(cfg: BiasedDataConfig) -> float:
    st2 = cfg.sigma_theta**2
    return st2 / (st2 + cfg.sigma_y**2 / cfg.n)


def _biased_post(cfg, lam):
    rho = _biased_rho(cfg)
    return GaussianPosterior(
        mean=lam * cfg.zbar + (1.0 - lam) * cfg.ybar,
        var=lam * cfg.sigma_z**2 / cfg.m,
        theta_intercept=rho * cfg.ybar,
        theta_slope=-rho,
        theta_var=(1.0 - rho) * cfg.sigma_theta**2,
        lam=lam,
        rho=rho,
    )


def _lam_from_y_var(cfg, y_var):
    # y_var: variance of Ybar about phi contributed by the Y module (inf = no information)
    a = cfg.m / cfg.sigma_z**2
    if math.isinf(y_var):
        return 1.0
    return a / (a + 1.0 / y_var)


def biased_phi_posterior(cfg: BiasedDataConfig, delta) -> GaussianPosterior:
    """delta-SMI posterior for the biased data example (Gaussian kernel)."""
    d = _delta(delta)
    if math.isinf(d):
        return _biased_post(cfg, 1.0)
    y_var = (cfg.sigma_y**2 + d * d + cfg.n * cfg.sigma_theta**2) / cfg.n
    return _biased_post(cfg, _lam_from_y_var(cfg, y_var))


def biased_eta_posterior(cfg: BiasedDataConfig, eta: float) -> GaussianPosterior:
    """eta-SMI posterior: the Y-module likelihood inside p(Y|phi) raised to power eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if eta == 0.0:
        return _biased_post(cfg, 1.0)
    y_var = cfg.sigma_y**2 / (cfg.n * eta) + cfg.sigma_theta**2
    return _biased_post(cfg, _lam_from_y_var(cfg, y_var))


def biased_gamma_posterior(cfg: BiasedDataConfig, gamma: float) -> GaussianPosterior:
    """gamma-SMI posterior: the prior predictive p(Y|phi) raised to power gamma."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0.0:
        return _biased_post(cfg, 1.0)
    y_var = (cfg.sigma_y**2 / cfg.n + cfg.sigma_theta**2) / gamma
    return _biased_post(cfg, _lam_from_y_var(cfg, y_var))


def biased_bayes_posterior(cfg):
    return biased_phi_posterior(cfg, 0.0)


def biased_cut_posterior(cfg):
    return biased_phi_posterior(cfg, math.inf)


def biased_theta_given_phi(cfg: BiasedDataConfig, phi):
    """Mean and variance of theta | Y, phi: (rho (Ybar - phi), (1 - rho) sigma_theta^2)."""
    rho = _biased_rho(cfg)
    return rho * (cfg.ybar - phi), (1.0 - rho) * cfg.sigma_theta**2


def eta_delta_equivalence(sigma_y: float, delta) -> float:
    """eta giving the same biased-data posterior as Gaussian-kernel delta-SMI."""
    d = _delta(delta)
    if math.isinf(d):
        return 0.0
    return sigma_y**2 / (sigma_y**2 + d * d)


def delta_from_eta(sigma_y: float, eta: float) -> float:
    """Inverse of :func:`eta_delta_equivalence`."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if eta == 0.0:
        return math.inf
    return sigma_y * math.sqrt((1.0 - eta) / eta)


def gamma_delta_equivalence(sigma_y: float, sigma_theta: float, n: int, delta) -> float:
    """gamma giving the same biased-data phi-posterior as Gaussian-kernel delta-SMI."""
    d = _delta(delta)
    if math.isinf(d):
        return 0.0
    s = sigma_y**2 + n * sigma_theta**2
    return s / (s + d * d)


def biased_predictive(cfg: BiasedDataConfig, delta, post: Optional[GaussianPosterior] = None,
                      printed_var_y=False):
    """Mean and covariance of the posterior predictive of a new (y, z) pair.

    ``post`` overrides the delta-SMI posterior (e.g. an eta- or gamma-SMI one).
    y = phi + theta + noise with phi + theta = (1 - rho) phi + rho Ybar + (theta
    residual), so Var(y) carries (1 - rho)^2 var(phi).  ``printed_var_y=True``
    uses (1 - rho) var(phi) instead, as the formula is sometimes written; it
    then disagrees with the joint-posterior predictive.
    """
    if post is None:
        post = biased_phi_posterior(cfg, delta)
    rho = post.rho
    s2 = post.var
    mu = np.array([(1.0 - rho) * post.mean + rho * cfg.ybar, post.mean])
    shrink = (1.0 - rho) if printed_var_y else (1.0 - rho) ** 2
    var_y = shrink * s2 + post.theta_var + cfg.sigma_y**2
    cov = (1.0 - rho) * s2
    var_z = s2 + cfg.sigma_z**2
    return mu, np.array([[var_y, cov], [cov, var_z]])


def gaussian_elpd(mu, cov, mu_true, cov_true) -> float:
    """E_{x ~ N(mu_true, cov_true)} log N(x; mu, cov)."""
    mu = np.asarray(mu, float)
    cov = np.asarray(cov, float)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise InternalInvariantError("predictive covariance is not positive definite") from exc
    d = mu.size
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    inv = np.linalg.inv(cov)
    r = np.asarray(mu_true, float) - mu
    return float(-0.5 * d * _LOG_2PI - 0.5 * logdet
                 - 0.5 * (np.trace(inv @ np.asarray(cov_true, float)) + r @ inv @ r))


def _biased_truth(cfg):
    mu_true = np.array([cfg.theta_star + cfg.phi_star, cfg.phi_star])
    return mu_true, np.diag([cfg.sigma_y**2, cfg.sigma_z**2])


def exact_elpd_biased(cfg: BiasedDataConfig, delta, printed_var_y=False) -> float:
    """Exact ELPD of the delta-SMI predictive for a new (y, z) under the true model."""
    mu, cov = biased_predictive(cfg, delta, printed_var_y=printed_var_y)
    return gaussian_elpd(mu, cov, *_biased_truth(cfg))


def exact_elpd_biased_eta(cfg: BiasedDataConfig, eta: float) -> float:
    """Exact ELPD of the eta-SMI predictive."""
    mu, cov = biased_predictive(cfg, None, biased_eta_posterior(cfg, eta))
    return gaussian_elpd(mu, cov, *_biased_truth(cfg))


def biased_endpoint_elpd(cfg: BiasedDataConfig, which: str) -> float:
    """ELPD of the plain Bayes or Cut predictive, built from the joint (phi, theta) posterior.

    Bayes uses the normal equations of the full conjugate model; Cut stacks
    pi(phi | Z) with pi(theta | Y, phi).  No SMI formula is involved.
    """
    sy2, sz2, st2 = cfg.sigma_y**2, cfg.sigma_z**2, cfg.sigma_theta**2
    if which == "bayes":
        prec = np.array([[cfg.m / sz2 + cfg.n / sy2, cfg.n / sy2],
                         [cfg.n / sy2, cfg.n / sy2 + 1.0 / st2]])
        rhs = np.array([cfg.m * cfg.zbar / sz2 + cfg.n * cfg.ybar / sy2, cfg.n * cfg.ybar / sy2])
        cov = np.linalg.inv(prec)
        mean = cov @ rhs
    elif which == "cut":
        vphi = sz2 / cfg.m
        # theta | Y, phi from its own normal equations
        tprec = cfg.n / sy2 + 1.0 / st2
        slope = -(cfg.n / sy2) / tprec
        mean = np.array([cfg.zbar, (cfg.n / sy2) * cfg.ybar / tprec + slope * cfg.zbar])
        cov = np.array([[vphi, slope * vphi], [slope * vphi, 1.0 / tprec + slope**2 * vphi]])
    else:
        raise ValueError("which must be 'bayes' or 'cut'")
    A = np.array([[1.0, 1.0], [1.0, 0.0]])
    pred_cov = A @ cov @ A.T + np.diag([sy2, sz2])
    return gaussian_elpd(A @ mean, pred_cov, *_biased_truth(cfg))


def biased_pmse(post: GaussianPosterior, phi_star: float, theta_star: float):
    """Exact posterior mean squared errors (phi, theta) of a Gaussian posterior."""
    m = post.joint_mean
    c = post.joint_cov
    return (c[0, 0] + (m[0] - phi_star) ** 2, c[1, 1] + (m[1] - theta_star) ** 2)


# --- regression example ---------------------------------------------------


def uniform_moments(a=0.0, b=2.0) -> Callable[[float], float]:
    """Raw moments E[X^r] of X ~ U(a, b)."""

    def M(r):
        return (b ** (r + 1) - a ** (r + 1)) / ((r + 1) * (b - a))

    return M


@dataclass(frozen=True)
class RegressionConfig:
    """Regression example settings with the sample statistics of one data set.

    ``moments(r)`` returns the population moment E[X^r] of the covariate.
    """

    n: int
    m: int
    sigma_y: float
    sigma_z: float
    k: float = 1.0
    phi_star: float = 0.0
    theta_star: float = 1.0
    xbar: float = float("nan")
    x2bar: float = float("nan")
    xybar: float = float("nan")
    ybar: float = float("nan")
    zbar: float = float("nan")
    moments: Callable = uniform_moments()

    @property
    def alpha(self) -> float:
        return self.m / self.n

    @classmethod
    def from_data(cls, Y, Z, sigma_y=0.25, sigma_z=3.0, k=1.0, phi_star=0.0, theta_star=1.0,
                  moments=None):
        Y = as_rows(Y, 2)
        z = as_rows(Z)[:, 0]
        y, x = Y[:, 0], Y[:, 1]
        return cls(y.size, z.size, sigma_y, sigma_z, k, phi_star, theta_star,
                   float(x.mean()), float(np.mean(x * x)), float(np.mean(x * y)),
                   float(y.mean()), float(z.mean()), moments or uniform_moments())


def regression_smi_posterior(cfg: RegressionConfig, delta) -> GaussianPosterior:
    """delta-SMI phi-marginal and theta | phi conditional for the regression example."""
    d = _delta(delta)
    if not cfg.x2bar > 0:
        raise DegenerateDataError("mean of x^2 is zero; theta is not identified")
    intercept = cfg.xybar / cfg.x2bar
    slope = -cfg.xbar / cfg.x2bar
    tvar = cfg.sigma_y**2 / (cfg.n * cfg.x2bar)
    if math.isinf(d):
        return GaussianPosterior(cfg.zbar, cfg.sigma_z**2 / cfg.m, intercept, slope, tvar,
                                 rho=math.inf)
    rho = (cfg.sigma_y**2 + d * d) / cfg.sigma_z**2 * cfg.m / cfg.n
    denom = rho + 1.0 - cfg.xbar**2 / cfg.x2bar
    mean = (rho * cfg.zbar + cfg.ybar - cfg.xbar * cfg.xybar / cfg.x2bar) / denom
    var = (rho * cfg.sigma_z**2 / cfg.m) / denom
    return GaussianPosterior(mean, var, intercept, slope, tvar, rho=rho)


def regression_weighted_fit(Y, Z, sigma_y, sigma_z, delta):
    """Joint maximiser of log p(Z|phi) + log p_delta(Y|phi,theta) by least squares.

    With flat priors this is the mode (and mean) of the delta-SMI posterior.
    ``delta = inf`` fixes phi at its Z-only estimate and fits theta given phi.
    """
    d = _delta(delta)
    Y = as_rows(Y, 2)
    z = as_rows(Z)[:, 0]
    y, x = Y[:, 0], Y[:, 1]
    if math.isinf(d):
        phi = float(z.mean())
        theta = float(np.linalg.lstsq(x[:, None], y - phi, rcond=None)[0][0])
        return phi, theta
    wy = 1.0 / math.sqrt(sigma_y**2 + d * d)
    wz = 1.0 / sigma_z
    A = np.vstack([np.column_stack([np.full_like(x, wy), wy * x]),
                   np.column_stack([np.full_like(z, wz), np.zeros_like(z)])])
    b = np.concatenate([wy * y, wz * z])
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    return float(sol[0]), float(sol[1])


def pseudo_true_values(cfg: RegressionConfig, delta, alpha: Optional[float] = None):
    """Large-sample limits (phi*_delta, theta*_delta) of the delta-SMI posterior."""
    d = _delta(delta)
    a = cfg.alpha if alpha is None else alpha
    M = cfg.moments
    k = cfg.k
    m1, m2, mk, mk1 = M(1), M(2), M(k), M(k + 1)
    if math.isinf(d):
        phi_d = cfg.phi_star
    else:
        var_x = m2 - m1 * m1
        num = m2 * mk - m1 * mk1
        den = var_x + a * m2 * (cfg.sigma_y**2 + d * d) / cfg.sigma_z**2
        phi_d = cfg.phi_star + cfg.theta_star * num / den
    theta_d = (cfg.theta_star * mk1 + m1 * cfg.phi_star - m1 * phi_d) / m2
    return phi_d, theta_d


def elpd_z_exact(post: GaussianPosterior, phi_star: float, sigma_z: float) -> float:
    """Exact expected log predictive density for a new Z ~ N(phi*, sigma_z^2)."""
    s2 = post.var + sigma_z**2
    return -0.5 * math.log(2 * math.pi * s2) - (sigma_z**2 + (phi_star - post.mean) ** 2) / (2 * s2)


def simulate_regression(rng, n, m, k=1.0, sigma_y=0.25, sigma_z=3.0, phi_star=0.0, theta_star=1.0,
                        x_low=0.0, x_high=2.0):
    """Draw (Y, Z) with Y rows (y, x): y = phi* + theta* x^k + noise, x ~ U(x_low, x_high)."""
    x = rng.uniform(x_low, x_high, n)
    y = phi_star + theta_star * x**k + sigma_y * rng.standard_normal(n)
    z = phi_star + sigma_z * rng.standard_normal(m)
    return np.column_stack([y, x]), z.reshape(-1, 1)


def simulate_biased(rng, n=50, m=25, sigma_y=1.0, sigma_z=2.0, phi_star=0.0, theta_star=1.0):
    """Draw Y ~ N(phi* + theta*, sigma_y^2) (n values) and Z ~ N(phi*, sigma_z^2) (m values)."""
    y = phi_star + theta_star + sigma_y * rng.standard_normal(n)
    z = phi_star + sigma_z * rng.standard_normal(m)
    return y.reshape(-1, 1), z.reshape(-1, 1)
