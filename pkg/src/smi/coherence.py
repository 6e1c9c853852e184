"""Exhaustive checks of additivity, prequential additivity and order-coherence
for loss/update pairs on small discrete two-module models.

Every belief is a probability table over the augmented grid (phi, theta_tilde,
theta).  Settings without theta_tilde carry it at its prior conditional
pi(theta_tilde | phi), so all updates live on one space.  Data values are
integer labels 0..K-1; the delta-SMI kernel is the discrete uniform kernel on
labels.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .core import Dims, InfluenceSetting, TwoModuleModel, Cut, Delta, Eta, Gamma, Bayes
from .errors import ZeroMassError
from .kernels import DiscreteUniform


@dataclass(frozen=True)
class DiscreteTwoModuleModel:
    """pmf tables p(z | phi) [F, Kz], p(y | phi, theta) [F, T, Ky] and prior [F, T]."""

    p_z: np.ndarray
    p_y: np.ndarray
    prior: np.ndarray
    seed: object = None

    def __post_init__(self):
        for name in ("p_z", "p_y", "prior"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        F, T = self.prior.shape
        if self.p_z.shape[0] != F or self.p_y.shape[:2] != (F, T):
            raise ValueError("table shapes disagree")
        if np.any(self.prior <= 0):
            raise ValueError("prior must be strictly positive")
        checks = [self.p_z.sum(-1) - 1, self.p_y.sum(-1) - 1, self.prior.sum() - 1]
        if max(np.max(np.abs(c)) for c in checks) > 1e-14 * 10:
            raise ValueError("tables must be normalised")

    @property
    def shape(self):
        return self.prior.shape

    @property
    def log_prior_phi(self):
        return np.log(self.prior.sum(axis=1))

    @property
    def log_prior_theta_given_phi(self):
        return np.log(self.prior) - self.log_prior_phi[:, None]

    def augmented_prior(self):
        """pi(phi, theta_tilde) pi(theta | phi) as an [F, T, T] table."""
        return self.prior[:, :, None] * np.exp(self.log_prior_theta_given_phi)[:, None, :]

    @classmethod
    def random(cls, rng, n_phi=3, n_theta=3, k_y=3, k_z=3, concentration=1.0, seed=None):
        F, T = n_phi, n_theta
        p_z = rng.dirichlet(np.full(k_z, concentration), size=F)
        p_y = rng.dirichlet(np.full(k_y, concentration), size=(F, T))
        prior = rng.dirichlet(np.full(F * T, concentration)).reshape(F, T)
        prior = np.maximum(prior, 1e-6)
        prior /= prior.sum()
        return cls(p_z, p_y, prior, seed)

    def smoothed_p_y(self, delta):
        """p_delta(y | phi, theta) for the discrete uniform kernel on labels."""
        K = self.p_y.shape[-1]
        out = np.empty_like(self.p_y)
        spec = DiscreteUniform(delta)
        for y in range(K):
            lo, hi = spec.neighborhood(y)
            top = min(int(hi), K - 1)
            out[..., y] = self.p_y[..., int(lo):top + 1].sum(-1) / (int(hi) - int(lo) + 1)
        return out

    def as_two_module_model(self) -> TwoModuleModel:
        """Adapter with phi, theta given as grid indices and p(Y|phi) by enumeration."""
        lpz, lpy = np.log(self.p_z), np.log(self.p_y)
        lpt = self.log_prior_theta_given_phi
        F, T = self.shape

        def _i(v):
            return int(np.ravel(v)[0])

        def _ok(f, t=0):
            return 0 <= f < F and 0 <= t < T

        def z_loglik(phi, Z):
            f = _i(phi)
            if not _ok(f):
                return -math.inf
            return float(sum(lpz[f, int(z)] for z in np.ravel(Z)))

        def y_loglik(phi, theta, Y):
            f, t = _i(phi), _i(theta)
            if not _ok(f, t):
                return -math.inf
            return float(sum(lpy[f, t, int(y)] for y in np.ravel(Y)))

        def y_pointwise(phi, theta, y):
            return y_loglik(phi, theta, [np.ravel(y)[0]])

        def lp_theta(theta, phi):
            f, t = _i(phi), _i(theta)
            return float(lpt[f, t]) if _ok(f, t) else -math.inf

        def log_prior(phi, theta):
            f, t = _i(phi), _i(theta)
            return float(np.log(self.prior[f, t])) if _ok(f, t) else -math.inf

        def log_marginal(phi, Y):
            f = _i(phi)
            ly = np.array([y_loglik(f, t, Y) for t in range(T)])
            return float(logsumexp(ly + lpt[f]))

        return TwoModuleModel(
            name="discrete", z_loglik=z_loglik, y_loglik=y_loglik,
            y_loglik_pointwise=y_pointwise, log_prior=log_prior,
            log_prior_theta_given_phi=lp_theta, dims=Dims(1, 1, 1, 1),
            log_marginal_y=log_marginal)


class Block(NamedTuple):
    y: tuple
    z: tuple


@dataclass(frozen=True)
class DataPartition:
    """Ordered blocks of observation indices (blocks may be empty)."""

    blocks: tuple

    def to_dict(self):
        return [{"y": list(b.y), "z": list(b.z)} for b in self.blocks]


@functools.lru_cache(maxsize=None)
def partitions(n_y, n_z, K):
    """All assignments of n_y + n_z labelled observations to K ordered blocks."""
    n = n_y + n_z
    out = []
    for labels in itertools.product(range(K), repeat=n):
        blocks = tuple(
            Block(tuple(i for i in range(n_y) if labels[i] == k),
                  tuple(j for j in range(n_z) if labels[n_y + j] == k))
            for k in range(K))
        out.append(DataPartition(blocks))
    return tuple(out)


def _lse(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


# --- per-observation log-likelihood tables ----------------------------------


class _Data:
    """Precomputed log p(z_j | phi) [F], log p(y_i | phi, theta) [F, T] and smoothed versions."""

    def __init__(self, model: DiscreteTwoModuleModel, Y, Z, delta=None):
        self.model = model
        self.Y = [int(y) for y in Y]
        self.Z = [int(z) for z in Z]
        # zero pmf entries are legitimate and map to -inf
        with np.errstate(divide="ignore"):
            lpz = np.log(model.p_z)
            lpy = np.log(model.p_y)
        self.lz = [lpz[:, z] for z in self.Z]
        self.ly = [lpy[:, :, y] for y in self.Y]
        self.lys = None
        if delta is not None:
            with np.errstate(divide="ignore"):
                lps = np.log(model.smoothed_p_y(delta))
            self.lys = [lps[:, :, y] for y in self.Y]
        self._cache = {}

    def block(self, blk: Block):
        hit = self._cache.get(blk)
        if hit is None:
            hit = self._cache[blk] = self._block(blk)
        return hit

    def _block(self, blk: Block):
        F, T = self.model.shape
        LZ = np.zeros(F)
        for j in blk.z:
            LZ = LZ + self.lz[j]
        LY = np.zeros((F, T))
        for i in blk.y:
            LY = LY + self.ly[i]
        LS = np.zeros((F, T))
        if self.lys is not None:
            for i in blk.y:
                LS = LS + self.lys[i]
        return LZ, LY, LS

    def everything(self):
        return Block(tuple(range(len(self.Y))), tuple(range(len(self.Z))))


def _log_theta_cond(q):
    """log q(theta | phi) from an [F, T~, T] table (theta_tilde marginalised)."""
    qt = q.sum(axis=1)
    with np.errstate(divide="ignore"):
        return np.log(qt) - np.log(qt.sum(axis=1, keepdims=True))


def _log_marg_y(LY, q):
    """log p_q(Y_block | phi) = log sum_theta p(Y_block | phi, theta) q(theta | phi)."""
    return _lse(LY + _log_theta_cond(q), axis=1)


# --- losses on the augmented grid, each an [F, T~, T] table ----------------


def loss_bayes(blk_tables, q, setting=None):
    LZ, LY, _ = blk_tables
    return -(LZ[:, None, None] + LY[:, None, :])


def loss_cut(blk_tables, q, setting=None):
    return loss_bayes(blk_tables, q) + _log_marg_y(blk_tables[1], q)[:, None, None]


def loss_gamma(blk_tables, q, setting):
    g = setting.value
    return loss_bayes(blk_tables, q) + (1.0 - g) * _log_marg_y(blk_tables[1], q)[:, None, None]


def loss_eta(blk_tables, q, setting):
    LY = blk_tables[1]
    return loss_cut(blk_tables, q) - setting.value * LY[:, :, None]


def loss_delta(blk_tables, q, setting):
    LS = blk_tables[2]
    return loss_cut(blk_tables, q) - LS[:, :, None]


LOSSES = {"bayes": loss_bayes, "cut": loss_cut, "gamma": loss_gamma, "eta": loss_eta,
          "delta": loss_delta}


def _normalise(logt):
    m = np.max(logt)
    if not np.isfinite(m):
        raise ZeroMassError("belief update has zero total mass")
    w = np.exp(logt - m)
    s = w.sum()
    if not s > 0:
        raise ZeroMassError("belief update has zero total mass")
    return w / s


def gibbs_update(loss, q):
    """psi(l, q) proportional to exp(-l) q."""
    with np.errstate(divide="ignore"):
        return _normalise(-loss + np.log(q))


def tempered_update(tau):
    """psi(l, q) proportional to exp(-tau l) q: down-weights every loss."""

    def update(loss, q):
        with np.errstate(divide="ignore"):
            return _normalise(-tau * loss + np.log(q))

    update.__name__ = f"tempered_update({tau})"
    return update


def prior_tempered_update(tau):
    """psi(l, q) proportional to exp(-l) q^tau: flattens the incoming belief."""

    def update(loss, q):
        with np.errstate(divide="ignore"):
            return _normalise(-loss + tau * np.log(q))

    update.__name__ = f"prior_tempered_update({tau})"
    return update


# --- direct posteriors --------------------------------------------------------


def enumerate_posterior(model: DiscreteTwoModuleModel, setting: InfluenceSetting, Y, Z):
    """Normalised [F, T~, T] table of the candidate posterior, computed directly.

    Bayes:  pi(phi, theta | Y, Z) pi(theta_tilde | phi)
    Cut:    pi(phi | Z) pi(theta | Y, phi) pi(theta_tilde | phi)
    eta:    pi(phi, theta_tilde) p(Z | phi) p(Y | phi, theta_tilde)^eta pi(theta | Y, phi)
    delta:  pi(phi, theta_tilde) p(Z | phi) p_delta(Y | phi, theta_tilde) pi(theta | Y, phi)
    gamma:  pi(phi) p(Z | phi) p(Y | phi)^gamma pi(theta | Y, phi) pi(theta_tilde | phi)
    """
    d = _Data(model, Y, Z, setting.value if setting.kind == "delta" else None)
    LZ, LY, LS = d.block(d.everything())
    lphi = model.log_prior_phi
    lcond = model.log_prior_theta_given_phi
    lprior = np.log(model.prior)
    # pi(theta | Y, phi) and p(Y | phi)
    a = LY + lcond
    log_my = logsumexp(a, axis=1)
    l_post_theta = a - log_my[:, None]
    if setting.kind == "bayes":
        t = (lphi + LZ)[:, None, None] + lcond[:, :, None] + (LY + lcond)[:, None, :]
    elif setting.kind == "cut":
        t = (lphi + LZ)[:, None, None] + lcond[:, :, None] + l_post_theta[:, None, :]
    elif setting.kind == "gamma":
        t = ((lphi + LZ + setting.value * log_my)[:, None, None] + lcond[:, :, None]
             + l_post_theta[:, None, :])
    elif setting.kind == "eta":
        t = ((lprior + LZ[:, None] + setting.value * LY)[:, :, None]
             + l_post_theta[:, None, :])
    elif setting.kind == "delta":
        t = (lprior + LZ[:, None] + LS)[:, :, None] + l_post_theta[:, None, :]
    else:
        raise ValueError(f"unknown setting {setting.kind}")
    return _normalise(t)


def gibbs_posterior(model: DiscreteTwoModuleModel, setting: InfluenceSetting, Y, Z):
    """exp(-loss) x augmented prior, normalised."""
    d = _Data(model, Y, Z, setting.value if setting.kind == "delta" else None)
    q0 = model.augmented_prior()
    loss = LOSSES[setting.kind](d.block(d.everything()), q0, setting)
    return gibbs_update(loss, q0)


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# --- checks -------------------------------------------------------------------


class CheckResult(NamedTuple):
    max_deviation: float
    witness: object


def _loss_fn(setting):
    fn = LOSSES[setting.kind]
    return lambda tables, q: fn(tables, q, setting)


def check_additivity(setting, model, Y, Z, K_values=(2, 3, 4)) -> CheckResult:
    """max over partitions and grid of |l(all; pi0) - sum_k l(block_k; pi0)|."""
    d = _Data(model, Y, Z, setting.value if setting.kind == "delta" else None)
    loss = _loss_fn(setting)
    q0 = model.augmented_prior()
    total = loss(d.block(d.everything()), q0)
    worst, witness = -1.0, None
    for K in K_values:
        for part in partitions(len(d.Y), len(d.Z), K):
            s = sum(loss(d.block(b), q0) for b in part.blocks)
            dev = float(np.max(np.abs(total - s)))
            if dev > worst:
                worst, witness = dev, part
    return CheckResult(worst, witness)


def check_prequential_additivity(setting, update, model, Y, Z, K_values=(2, 3, 4)) -> CheckResult:
    """max |l(all; pi0) - sum_k l(block_k; q_{k-1})| with q_k = update(l(block_k; q_{k-1}), q_{k-1})."""
    d = _Data(model, Y, Z, setting.value if setting.kind == "delta" else None)
    loss = _loss_fn(setting)
    q0 = model.augmented_prior()
    total = loss(d.block(d.everything()), q0)
    worst, witness = -1.0, None
    for K in K_values:
        for part in partitions(len(d.Y), len(d.Z), K):
            q = q0
            acc = np.zeros_like(total)
            for b in part.blocks:
                if not b.y and not b.z:
                    # zero loss; every update used here maps it to the identity
                    continue
                lb = loss(d.block(b), q)
                acc = acc + lb
                q = update(lb, q)
                if abs(q.sum() - 1.0) > 1e-12:
                    raise ZeroMassError("update did not return a normalised table")
            dev = float(np.max(np.abs(total - acc)))
            if dev > worst:
                worst, witness = dev, part
    return CheckResult(worst, witness)


def check_order_coherence(setting, update, model, Y, Z) -> CheckResult:
    """max TV between the one-shot update and the two-stage update over all 2-way partitions."""
    d = _Data(model, Y, Z, setting.value if setting.kind == "delta" else None)
    loss = _loss_fn(setting)
    q0 = model.augmented_prior()
    one_shot = update(loss(d.block(d.everything()), q0), q0)
    worst, witness = -1.0, None
    for part in partitions(len(d.Y), len(d.Z), 2):
        b1, b2 = part.blocks
        q1 = update(loss(d.block(b1), q0), q0)
        q2 = update(loss(d.block(b2), q1), q1)
        tv = total_variation(one_shot, q2)
        if tv > worst:
            worst, witness = tv, part
    return CheckResult(worst, witness)


# --- suite ----------------------------------------------------------------------


def canned_model():
    """Asymmetric model in which theta strongly shifts y (Cut loss visibly non-additive)."""
    p_z = np.array([[0.7, 0.2, 0.1], [0.2, 0.5, 0.3], [0.1, 0.3, 0.6]])
    base = np.array([[0.8, 0.15, 0.05], [0.3, 0.4, 0.3], [0.05, 0.15, 0.8]])
    p_y = np.stack([np.roll(base, s, axis=1) for s in range(3)])  # [phi, theta, y]
    prior = np.array([[0.2, 0.1, 0.05], [0.1, 0.15, 0.1], [0.05, 0.1, 0.15]])
    return DiscreteTwoModuleModel(p_z, p_y, prior / prior.sum(), seed="canned")


CANNED_DATA = ((0, 2), (1,))


def random_case(seed: int, index: int):
    """Random model (|Phi|, |Theta| <= 4) and data (<= 4 observations, >= 1 of each kind)."""
    rng = np.random.default_rng([seed, index])
    F, T = rng.integers(2, 5, size=2)
    ky, kz = rng.integers(2, 5, size=2)
    n_y = int(rng.integers(1, 4))
    n_z = int(rng.integers(1, 5 - n_y))
    model = DiscreteTwoModuleModel.random(rng, int(F), int(T), int(ky), int(kz),
                                          seed=[seed, index])
    Y = tuple(int(v) for v in rng.integers(0, ky, size=n_y))
    Z = tuple(int(v) for v in rng.integers(0, kz, size=n_z))
    return model, Y, Z


def sanctioned_settings(eta=0.5, delta=1.5, gamma=0.5):
    return [Cut(), Eta(eta), Delta(delta, "discrete_uniform"), Gamma(gamma)]


def run_suite(n_models=50, seed=0, eta=0.5, delta=1.5, gamma=0.5, tol=1e-10, witness_tol=1e-2,
              inject_mismatch=False):
    """Run every check; returns a JSON-ready report with an overall ``passed`` flag.

    Sanctioned pairs (Cut, eta, delta, gamma losses with the Gibbs update, and
    the Bayes loss) must stay below ``tol``.  Counterexamples (Cut loss
    additivity against a fixed prior, Cut loss with a tempered update, a
    prior-tempered update) must exceed ``witness_tol``.  ``inject_mismatch``
    moves the tempered-update pair into the sanctioned list, which must then
    fail.
    """
    cases = [random_case(seed, i) for i in range(n_models)]
    pairs = [(s, gibbs_update, "gibbs") for s in sanctioned_settings(eta, delta, gamma)]
    bayes = Bayes()
    if inject_mismatch:
        pairs.append((Cut(), tempered_update(0.5), "tempered_update(0.5)"))
    checks = []

    def record(kind, label, res, model_seed, expect):
        ok = res.max_deviation < tol if expect == "below" else res.max_deviation > witness_tol
        checks.append({
            "check": kind,
            "pair": label,
            "max_deviation": res.max_deviation,
            "witness_partition": res.witness.to_dict() if res.witness is not None else None,
            "model_seed": model_seed,
            "expect": f"< {tol:g}" if expect == "below" else f"> {witness_tol:g}",
            "passed": bool(ok),
        })

    def worst_over_cases(fn, extra=()):
        best = None
        for model, Y, Z in list(cases) + list(extra):
            r = fn(model, Y, Z)
            if best is None or r.max_deviation > best[0].max_deviation:
                best = (r, model.seed)
        return best

    r, s = worst_over_cases(lambda m, Y, Z: check_additivity(bayes, m, Y, Z))
    record("additivity", "bayes loss", r, s, "below")
    # random cases with a single Y observation cannot expose a mismatched update,
    # so an injected pair is also run on the canned counterexample model
    canned = [(canned_model(), *CANNED_DATA)]
    for setting, upd, uname in pairs:
        label = f"{setting} loss + {uname}"
        extra = canned if uname != "gibbs" else ()
        r, s = worst_over_cases(
            lambda m, Y, Z: check_prequential_additivity(setting, upd, m, Y, Z), extra)
        record("prequential_additivity", label, r, s, "below")
        r, s = worst_over_cases(lambda m, Y, Z: check_order_coherence(setting, upd, m, Y, Z),
                                extra)
        record("order_coherence", label, r, s, "below")
    r, s = worst_over_cases(lambda m, Y, Z: check_order_coherence(bayes, gibbs_update, m, Y, Z))
    record("order_coherence", "bayes loss + gibbs", r, s, "below")

    cm = canned_model()
    Yc, Zc = CANNED_DATA
    record("additivity", "cut loss (plain, fixed prior)", check_additivity(Cut(), cm, Yc, Zc),
           cm.seed, "above")
    record("prequential_additivity", "cut loss + tempered_update(0.5)",
           check_prequential_additivity(Cut(), tempered_update(0.5), cm, Yc, Zc), cm.seed, "above")
    record("order_coherence", "bayes loss + prior_tempered_update(0.5)",
           check_order_coherence(bayes, prior_tempered_update(0.5), cm, Yc, Zc), cm.seed, "above")

    return {
        "n_models": n_models,
        "seed": seed,
        "settings": {"eta": eta, "delta": delta, "gamma": gamma},
        "tolerance": tol,
        "witness_tolerance": witness_tol,
        "inject_mismatch": inject_mismatch,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
