"""Two-module models, influence settings and the loss functions whose Gibbs
posteriors are the Bayes, Cut and semi-modular belief updates.

Module 1 has data Z and parameter phi; module 2 has data Y and parameters
(phi, theta).  All densities are handled on the log scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate

from . import models as _m
from .errors import ImproperPriorError, MarginalNotAvailable, QuadratureError
from .kernels import GAUSSIAN, KernelSpec, smoothed_loglik_gaussian


class Dims(NamedTuple):
    p_phi: int
    p_theta: int
    d_y: int
    d_z: int


@dataclass(frozen=True)
class TwoModuleModel:
    """Joint specification p(Z | phi), p(Y | phi, theta), pi(phi, theta).

    Data sets are 2-D arrays with one observation per row (see
    :mod:`smi.models`).  ``log_marginal_y``, when registered, evaluates
    log p(Y | phi) in closed form.  ``kernels`` holds the compiled log-density
    kernels used by the samplers.
    """

    name: str
    z_loglik: Callable
    y_loglik: Callable
    y_loglik_pointwise: Callable
    log_prior: Callable
    log_prior_theta_given_phi: Callable
    dims: Dims
    improper_prior: bool = False
    improper_theta_prior: bool = False
    log_marginal_y: Optional[Callable] = None
    kernels: Optional[_m.ModelKernels] = None
    consts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    smoothing_codes: frozenset = frozenset()
    normal_params: Optional[Callable] = None
    init_phi: Optional[np.ndarray] = None
    init_theta: Optional[np.ndarray] = None
    outer_blocks: tuple = ()
    simulate: Optional[Callable] = None
    y_discrete: bool = False

    def y_rows(self, Y):
        return _m.as_rows(Y, self.dims.d_y)

    def z_rows(self, Z):
        return _m.as_rows(Z, self.dims.d_z)

    def smoothed_y_loglik(self, phi, theta, Y, kernel: KernelSpec, pointwise=False):
        """log p_delta(Y | phi, theta) for a kernel with a registered closed form."""
        if self.kernels is None or kernel.code not in self.smoothing_codes:
            if kernel.code == GAUSSIAN and not pointwise:
                return smoothed_loglik_gaussian(self.y_loglik_pointwise, self.y_rows(Y),
                                                phi, theta, kernel.delta, self.normal_params)
            raise MarginalNotAvailable(
                f"model {self.name!r} has no smoothed likelihood for kernel {kernel.kind!r}")
        vec = self.kernels.y_smoothed_vec(_vec(phi), _vec(theta), self.y_rows(Y), self.consts,
                                          kernel.code, kernel.delta)
        return vec if pointwise else float(np.sum(vec))


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class InfluenceSetting:
    """Which candidate posterior: bayes, cut, eta(value), delta(value, kernel), gamma(value).

    Build these with :func:`Bayes`, :func:`Cut`, :func:`Eta`, :func:`Delta`
    and :func:`Gamma`, which map the endpoint values onto ``bayes``/``cut``.
    """

    kind: str
    value: Optional[float] = None
    kernel: Optional[KernelSpec] = None

    def meta(self, scale="delta") -> float:
        """Scalar meta-parameter on the delta axis (bayes=0, cut=inf) or eta axis."""
        if scale == "delta":
            if self.kind == "bayes":
                return 0.0
            if self.kind == "cut":
                return math.inf
            if self.kind == "delta":
                return self.value
        else:
            if self.kind == "bayes":
                return 1.0
            if self.kind == "cut":
                return 0.0
            if self.kind in ("eta", "gamma"):
                return self.value
        raise ValueError(f"{self.kind} setting has no {scale} coordinate")

    def __str__(self):
        if self.kind in ("bayes", "cut"):
            return self.kind
        if self.kind == "delta":
            return f"delta({self.value:g},{self.kernel.kind})"
        return f"{self.kind}({self.value:g})"


def Bayes():
    return InfluenceSetting("bayes")


def Cut():
    return InfluenceSetting("cut")


def Eta(eta):
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if eta == 1.0:
        return Bayes()
    if eta == 0.0:
        return Cut()
    return InfluenceSetting("eta", eta)


def Gamma(gamma):
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 1.0:
        return Bayes()
    if gamma == 0.0:
        return Cut()
    return InfluenceSetting("gamma", gamma)


def Delta(delta, kernel="gaussian"):
    delta = float(delta)
    if math.isnan(delta) or delta < 0:
        raise ValueError("delta must be >= 0")
    if delta == 0.0:
        return Bayes()
    if math.isinf(delta):
        return Cut()
    kind = kernel.kind if isinstance(kernel, KernelSpec) else kernel
    return InfluenceSetting("delta", delta, KernelSpec(kind, delta))


class AugmentedParams(NamedTuple):
    """Parameters (phi, theta_tilde, theta) of the augmented SMI space."""

    phi: np.ndarray
    theta_tilde: np.ndarray
    theta: np.ndarray

    @classmethod
    def make(cls, model: TwoModuleModel, phi, theta_tilde, theta):
        p = cls(_vec(phi), _vec(theta_tilde), _vec(theta))
        if p.phi.size != model.dims.p_phi or p.theta.size != model.dims.p_theta \
                or p.theta_tilde.size != model.dims.p_theta:
            raise ValueError("parameter dimensions do not match the model")
        return p


# --- marginal evaluators ----------------------------------------------------


def closed_form_marginal(model: TwoModuleModel):
    """The registered closed-form evaluator for log p(Y | phi)."""
    if model.log_marginal_y is None:
        if model.improper_theta_prior:
            raise ImproperPriorError(
                f"model {model.name!r} has an improper theta prior and no closed-form p(Y|phi)")
        raise MarginalNotAvailable(f"model {model.name!r} has no closed-form p(Y|phi)")
    return model.log_marginal_y


def quadrature_marginal(model: TwoModuleModel, lo: float, hi: float, rtol=1e-10):
    """Evaluator for log p(Y | phi) by adaptive quadrature over a scalar theta."""
    if model.improper_theta_prior:
        raise ImproperPriorError("quadrature needs a proper prior pi(theta | phi)")
    if model.dims.p_theta != 1:
        raise MarginalNotAvailable("quadrature evaluator supports scalar theta only")

    def evaluator(phi, Y):
        Y = model.y_rows(Y)
        if Y.shape[0] == 0:
            return 0.0

        def logf(t):
            th = np.array([t])
            return model.y_loglik(phi, th, Y) + model.log_prior_theta_given_phi(th, phi)

        probe = np.linspace(lo, hi, 513)
        vals = np.array([logf(t) for t in probe])
        c = float(np.max(vals))
        peak = float(probe[np.argmax(vals)])
        val, err = integrate.quad(lambda t: math.exp(logf(t) - c), lo, hi, epsabs=0.0,
                                  epsrel=rtol, limit=500, points=[peak])
        if val <= 0 or err > 1e-8 * val:
            raise QuadratureError("p(Y|phi) quadrature failed", achieved=err / max(val, 1e-300))
        return c + math.log(val)

    return evaluator


def _marginal(model, marginal_y_phi):
    return marginal_y_phi if marginal_y_phi is not None else closed_form_marginal(model)


# --- losses -----------------------------------------------------------------


def bayes_loss(model: TwoModuleModel, phi, theta, Y, Z) -> float:
    """-log p(Z | phi) - log p(Y | phi, theta); +inf where a likelihood is zero."""
    Y, Z = model.y_rows(Y), model.z_rows(Z)
    lz = model.z_loglik(_vec(phi), Z) if Z.shape[0] else 0.0
    ly = model.y_loglik(_vec(phi), _vec(theta), Y) if Y.shape[0] else 0.0
    return -(lz + ly)


def cut_loss(model: TwoModuleModel, phi, theta, Y, Z, marginal_y_phi=None) -> float:
    """Bayes loss plus log p(Y | phi)."""
    Y = model.y_rows(Y)
    base = bayes_loss(model, phi, theta, Y, Z)
    if Y.shape[0] == 0:
        return base
    return base + _marginal(model, marginal_y_phi)(_vec(phi), Y)


def smi_losses(model: TwoModuleModel, setting: InfluenceSetting, phi, theta_tilde, theta, Y, Z,
               marginal_y_phi=None, smoothed_y_loglik=None) -> float:
    """Loss on the augmented space (phi, theta_tilde, theta) for ``setting``.

    * bayes: the Bayes loss (theta_tilde unused)
    * cut: Bayes loss + log p(Y | phi)
    * gamma: Bayes loss + (1 - gamma) log p(Y | phi)
    * eta: Bayes loss - eta log p(Y | phi, theta_tilde) + log p(Y | phi)
    * delta: Bayes loss - log p_delta(Y | phi, theta_tilde) + log p(Y | phi)

    ``smoothed_y_loglik(phi, theta_tilde, Y)`` overrides the model's own
    smoothed likelihood for delta settings.
    """
    Y = model.y_rows(Y)
    phi, theta_tilde, theta = _vec(phi), _vec(theta_tilde), _vec(theta)
    base = bayes_loss(model, phi, theta, Y, Z)
    if setting.kind == "bayes" or Y.shape[0] == 0:
        return base
    log_m = _marginal(model, marginal_y_phi)(phi, Y)
    if setting.kind == "cut":
        return base + log_m
    if setting.kind == "gamma":
        return base + (1.0 - setting.value) * log_m
    if setting.kind == "eta":
        return base - setting.value * model.y_loglik(phi, theta_tilde, Y) + log_m
    if setting.kind == "delta":
        if smoothed_y_loglik is not None:
            lsm = smoothed_y_loglik(phi, theta_tilde, Y)
        else:
            lsm = model.smoothed_y_loglik(phi, theta_tilde, Y, setting.kernel)
        return base - lsm + log_m
    raise ValueError(f"unknown setting {setting.kind!r}")


# --- model factories ----------------------------------------------------------


def _wrap(name, kern, consts, dims, **extra):
    c = np.asarray(consts, dtype=float)

    def z_loglik(phi, Z):
        return float(kern.z_loglik(_vec(phi), _m.as_rows(Z, dims.d_z), c))

    def y_loglik(phi, theta, Y):
        return float(np.sum(kern.y_loglik_vec(_vec(phi), _vec(theta), _m.as_rows(Y, dims.d_y), c)))

    def y_loglik_pointwise(phi, theta, Y_i):
        row = np.asarray(Y_i, dtype=float).reshape(1, dims.d_y)
        return float(kern.y_loglik_vec(_vec(phi), _vec(theta), row, c)[0])

    def log_prior_theta_given_phi(theta, phi):
        return float(kern.log_prior_theta(_vec(theta), _vec(phi), c))

    def log_prior(phi, theta):
        lp = float(kern.log_prior_phi(_vec(phi), c))
        if lp == -math.inf:
            return lp
        return lp + log_prior_theta_given_phi(theta, phi)

    return TwoModuleModel(
        name=name, z_loglik=z_loglik, y_loglik=y_loglik, y_loglik_pointwise=y_loglik_pointwise,
        log_prior=log_prior, log_prior_theta_given_phi=log_prior_theta_given_phi, dims=dims,
        kernels=kern, consts=c, **extra)


def biased_data_model(sigma_y=1.0, sigma_z=2.0, sigma_theta=0.33) -> TwoModuleModel:
    """Y_i ~ N(phi + theta, sigma_y^2), Z_j ~ N(phi, sigma_z^2); flat phi, theta ~ N(0, sigma_theta^2)."""

    def log_marginal(phi, Y):
        return _m.biased_log_marginal(phi, Y, sigma_y, sigma_theta)

    def normal_params(phi, theta, row):
        return _vec(phi)[0] + _vec(theta)[0], sigma_y

    def simulate(phi, theta, Y, Z, rng):
        Y, Z = _m.as_rows(Y), _m.as_rows(Z)
        Yn = Y.copy()
        Zn = Z.copy()
        Yn[:, 0] = rng.normal(_vec(phi)[0] + _vec(theta)[0], sigma_y, Y.shape[0])
        Zn[:, 0] = rng.normal(_vec(phi)[0], sigma_z, Z.shape[0])
        return Yn, Zn

    return _wrap("biased", _m.BIASED_KERNELS, [sigma_y, sigma_z, sigma_theta], Dims(1, 1, 1, 1),
                 improper_prior=True, log_marginal_y=log_marginal,
                 smoothing_codes=_m.SUPPORTED_KERNELS["biased"], normal_params=normal_params,
                 init_phi=np.zeros(1), init_theta=np.zeros(1), outer_blocks=((0, 1),),
                 simulate=simulate)


def regression_model(sigma_y=0.25, sigma_z=3.0) -> TwoModuleModel:
    """Y_i ~ N(phi + theta x_i, sigma_y^2), Z_j ~ N(phi, sigma_z^2); flat priors.

    Y rows are ``(y_i, x_i)``.
    """

    def log_marginal(phi, Y):
        return _m.regression_log_marginal(phi, Y, sigma_y)

    def normal_params(phi, theta, row):
        return _vec(phi)[0] + _vec(theta)[0] * row[1], sigma_y

    def simulate(phi, theta, Y, Z, rng):
        Y, Z = _m.as_rows(Y, 2), _m.as_rows(Z)
        Yn, Zn = Y.copy(), Z.copy()
        Yn[:, 0] = rng.normal(_vec(phi)[0] + _vec(theta)[0] * Y[:, 1], sigma_y)
        Zn[:, 0] = rng.normal(_vec(phi)[0], sigma_z, Z.shape[0])
        return Yn, Zn

    return _wrap("regression", _m.REGRESSION_KERNELS, [sigma_y, sigma_z], Dims(1, 1, 2, 1),
                 improper_prior=True, improper_theta_prior=True, log_marginal_y=log_marginal,
                 smoothing_codes=_m.SUPPORTED_KERNELS["regression"], normal_params=normal_params,
                 init_phi=np.zeros(1), init_theta=np.zeros(1), outer_blocks=((0, 1),),
                 simulate=simulate)


def hpv_model(n_pop: int, theta_prior_sd=math.sqrt(1000.0), init_phi=None) -> TwoModuleModel:
    """Poisson cancer incidence / binomial HPV prevalence model.

    Y rows ``(cases, T, pop)``, Z rows ``(positives, N, pop)`` with ``pop`` a
    0-based population index.  phi_i ~ U(0, 1), theta_j ~ N(0, theta_prior_sd^2).
    """
    if init_phi is None:
        init_phi = np.full(n_pop, 0.05)

    def simulate(phi, theta, Y, Z, rng):
        Y, Z = _m.as_rows(Y, 3), _m.as_rows(Z, 3)
        Yn, Zn = Y.copy(), Z.copy()
        mu = _m._hpv_mu(_vec(phi), _vec(theta), Y)
        Yn[:, 0] = rng.poisson(mu)
        Zn[:, 0] = rng.binomial(Z[:, 1].astype(np.int64), _vec(phi)[Z[:, 2].astype(np.int64)])
        return Yn, Zn

    blocks = tuple((i,) for i in range(n_pop)) + ((n_pop, n_pop + 1),)
    return _wrap("hpv", _m.HPV_KERNELS, [theta_prior_sd], Dims(n_pop, 2, 3, 3),
                 smoothing_codes=_m.SUPPORTED_KERNELS["hpv"], init_phi=np.asarray(init_phi, float),
                 init_theta=np.zeros(2), outer_blocks=blocks, simulate=simulate,
                 y_discrete=True)
