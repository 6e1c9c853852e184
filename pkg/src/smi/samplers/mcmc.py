"""Nested and augmented MCMC for Cut, eta-SMI and delta-SMI posteriors."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import InfluenceSetting, TwoModuleModel
from ..errors import MarginalNotAvailable, SamplerError, SequenceTooShort
from . import _engine
from .diagnostics import effective_sample_size


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings.

    ``n_iter`` outer iterations are run; the first ``burn_in`` fraction is
    discarded and used for proposal adaptation, the rest are thinned by
    ``thin``.  ``proposal_scales`` gives initial random-walk standard
    deviations for the coordinates of (phi, theta_tilde); ``inner_scale`` the
    initial scale of the inner theta chain.
    """

    n_iter: int = 5000
    burn_in: float = 0.2
    thin: int = 1
    inner_steps: int = 50
    proposal_scales: Optional[Sequence[float]] = None
    inner_scale: float = 0.1
    seed: int = 0
    chain_id: int = 0
    adapt: bool = True

    def __post_init__(self):
        if self.n_iter < 1 or self.inner_steps < 1 or self.thin < 1:
            raise ValueError("n_iter, inner_steps and thin must be >= 1")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must be a fraction in [0, 1)")
        if self.inner_scale <= 0:
            raise ValueError("inner_scale must be positive")
        if self.proposal_scales is not None:
            sc = tuple(float(s) for s in np.atleast_1d(self.proposal_scales))
            if any(not s > 0 for s in sc):
                raise ValueError("proposal scales must be positive")
            object.__setattr__(self, "proposal_scales", sc)
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def n_burn(self) -> int:
        return int(self.n_iter * self.burn_in)

    def streams(self, k):
        ss = np.random.SeedSequence([int(self.seed), int(self.chain_id)])
        return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(k)]


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws of (phi, theta_tilde, theta) from one chain."""

    phi: np.ndarray
    theta: np.ndarray
    theta_tilde: Optional[np.ndarray]
    iters: np.ndarray
    acceptance: dict
    seed: int
    chain_id: int
    setting: str
    y_tilde: Optional[np.ndarray] = None
    _ess: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("phi", "theta", "theta_tilde", "iters", "y_tilde"):
            a = getattr(self, name)
            if a is not None:
                a.setflags(write=False)

    def __len__(self):
        return self.phi.shape[0]

    @property
    def columns(self):
        cols = [f"phi{i + 1}" for i in range(self.phi.shape[1])]
        if self.theta_tilde is not None:
            cols += [f"theta_tilde{i + 1}" for i in range(self.theta_tilde.shape[1])]
        cols += [f"theta{i + 1}" for i in range(self.theta.shape[1])]
        return cols

    def matrix(self):
        parts = [self.phi] + ([self.theta_tilde] if self.theta_tilde is not None else [])
        return np.hstack(parts + [self.theta])

    @property
    def ess(self) -> dict:
        """Effective sample size per column (nan when the chain is too short)."""
        if not self._ess:
            for name, col in zip(self.columns, self.matrix().T):
                try:
                    self._ess[name] = effective_sample_size(col)
                except SequenceTooShort:
                    self._ess[name] = math.nan
        return dict(self._ess)

    def to_csv(self, path=None):
        """Write ``chain, iter, phi..., theta_tilde..., theta...``; returns the text if no path."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["chain", "iter"] + self.columns)
        for it, row in zip(self.iters, self.matrix()):
            w.writerow([self.chain_id, int(it)] + [format(float(v), ".17g") for v in row])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None


def _mode_of(model: TwoModuleModel, setting: InfluenceSetting):
    if setting.kind == "bayes":
        return _engine.ETA, 1.0, 0, 0.0
    if setting.kind == "cut":
        return _engine.CUT, 0.0, 0, 0.0
    if setting.kind == "eta":
        return _engine.ETA, setting.value, 0, 0.0
    if setting.kind == "delta":
        if setting.kernel.code not in model.smoothing_codes:
            raise MarginalNotAvailable(
                f"no smoothed likelihood for kernel {setting.kernel.kind!r} on model "
                f"{model.name!r}; use run_augmented_mcmc")
        return _engine.DELTA, 1.0, setting.kernel.code, setting.kernel.delta
    raise SamplerError(f"setting {setting} is not supported by the nested sampler")


def _blocks(model: TwoModuleModel, cut: bool):
    p_phi = model.dims.p_phi
    P = p_phi if cut else p_phi + model.dims.p_theta
    blocks = []
    for blk in model.outer_blocks:
        b = [i for i in blk if i < P]
        if b:
            blocks.append(b)
    if P > 1 and len(blocks) > 1 and all(len(b) < P for b in blocks):
        # a final joint block lets the learned covariance capture phi-theta coupling
        blocks.append(list(range(P)))
    covered = set(i for b in blocks for i in b)
    if covered != set(range(P)):
        raise SamplerError("outer blocks must cover every (phi, theta_tilde) coordinate")
    bidx = np.array([i for b in blocks for i in b], dtype=np.int64)
    bptr = np.cumsum([0] + [len(b) for b in blocks]).astype(np.int64)
    return blocks, bidx, bptr


def _init_proposals(config, blocks, P):
    sc = config.proposal_scales
    if sc is None:
        sc = (0.1,) * P
    elif len(sc) == 1:
        sc = sc * P
    elif len(sc) != P:
        raise ValueError(f"expected {P} proposal scales, got {len(sc)}")
    dmax = max(len(b) for b in blocks)
    L = np.zeros((len(blocks), dmax, dmax))
    for k, b in enumerate(blocks):
        for i, j in enumerate(b):
            L[k, i, i] = sc[j] / math.sqrt(len(b))
    targets = np.array([0.44 if len(b) == 1 else 0.234 for b in blocks])
    return L, np.zeros(len(blocks)), targets


def _check_burn_in(names, acc_burn, n_burn, scales):
    if n_burn == 0:
        return
    dead = [nm for nm, a in zip(names, acc_burn) if a == 0]
    if dead:
        raise SamplerError(
            f"no proposals accepted during burn-in for block(s) {', '.join(dead)}; "
            f"final proposal scales {scales}", scales=scales)


def _start(model, Y, Z, x0, p_phi, mode, eta, kcode, delta, outer_logpost):
    c = model.consts
    if not np.isfinite(outer_logpost(x0, p_phi, mode, eta, kcode, delta, Y, Z, c)):
        raise SamplerError("initial state has zero posterior density; supply init values")


def _inner(model, eng, hist, Y, config, rng, theta0=None):
    run_inner = eng[2]
    p = model.dims.p_theta
    n_iter = hist.shape[0]
    K = config.inner_steps
    normals = rng.standard_normal((n_iter, K, p))
    unif = rng.random((n_iter, K))
    L = np.eye(p) * config.inner_scale
    logs = np.zeros(1)
    th0 = np.array(model.init_theta if theta0 is None else theta0, dtype=float)
    if not np.isfinite(eng[0](np.concatenate([hist[0, :model.dims.p_phi], th0]),
                              model.dims.p_phi, _engine.AUG, 1.0, 0, 0.0, Y,
                              np.zeros((0, model.dims.d_z)), model.consts)):
        raise SamplerError("initial theta has zero conditional density")
    out, acc = run_inner(th0, hist, model.dims.p_phi, Y, model.consts, L, logs,
                         0.44 if p == 1 else 0.234, normals, unif, config.n_burn, config.adapt)
    return out, acc, float(np.exp(logs[0]))


def _retained(config):
    return np.arange(config.n_burn, config.n_iter, config.thin)


def _rates(names, acc_post, n_post, per=1):
    return {nm: (float(a) / (n_post * per) if n_post else math.nan)
            for nm, a in zip(names, acc_post)}


def run_nested_mcmc(model: TwoModuleModel, setting: InfluenceSetting, Y, Z,
                    config: McmcConfig = McmcConfig()) -> PosteriorDraws:
    """Two-stage sampler for Cut, eta-SMI, delta-SMI (and Bayes, run as eta = 1).

    The outer chain targets the phi-side distribution on (phi, theta_tilde)
    (phi alone for Cut).  For every outer iteration an inner chain targets
    pi(theta | Y, phi), warm-started at the previous theta, and its last
    state after ``inner_steps`` moves is kept as the theta draw.
    """
    if model.kernels is None:
        raise SamplerError("model has no compiled kernels")
    Y, Z = model.y_rows(Y), model.z_rows(Z)
    mode, eta, kcode, delta = _mode_of(model, setting)
    eng = _engine.engine(model.kernels)
    outer_logpost, run_outer = eng[0], eng[1]
    p_phi = model.dims.p_phi
    cut = mode == _engine.CUT
    blocks, bidx, bptr = _blocks(model, cut)
    P = p_phi if cut else p_phi + model.dims.p_theta
    x0 = np.array(model.init_phi, dtype=float)
    if not cut:
        x0 = np.concatenate([x0, np.asarray(model.init_theta, dtype=float)])
    _start(model, Y, Z, x0, p_phi, mode, eta, kcode, delta, outer_logpost)
    r_out, r_in = config.streams(2)
    normals = r_out.standard_normal((config.n_iter, int(bptr[-1])))
    unif = r_out.random((config.n_iter, len(blocks)))
    L, logs, targets = _init_proposals(config, blocks, P)
    hist, acc_burn, acc_post = run_outer(x0, p_phi, mode, eta, kcode, delta, Y, Z, model.consts,
                                         bidx, bptr, L, logs, targets, normals, unif,
                                         config.n_burn, config.adapt)
    names = [_block_name(b, p_phi) for b in blocks]
    _check_burn_in(names, acc_burn, config.n_burn, np.exp(logs).tolist())
    theta, iacc, iscale = _inner(model, eng, hist, Y, config, r_in)
    if iacc[0] == 0 and config.n_burn > 0:
        raise SamplerError(f"inner chain accepted nothing during burn-in (scale {iscale})",
                           scales=[iscale])
    keep = _retained(config)
    n_post = config.n_iter - config.n_burn
    acc = _rates(names, acc_post, n_post)
    acc["theta|phi"] = float(iacc[1]) / (n_post * config.inner_steps) if n_post else math.nan
    return PosteriorDraws(
        phi=hist[keep, :p_phi].copy(),
        theta=theta[keep].copy(),
        theta_tilde=None if cut else hist[keep, p_phi:].copy(),
        iters=keep,
        acceptance=acc,
        seed=config.seed,
        chain_id=config.chain_id,
        setting=str(setting),
    )


def _block_name(b, p_phi):
    parts = [f"phi{i + 1}" if i < p_phi else f"theta_tilde{i - p_phi + 1}" for i in b]
    return "+".join(parts)


def run_full_bayes(model: TwoModuleModel, Y, Z, config: McmcConfig = McmcConfig()) -> PosteriorDraws:
    """Single-chain Metropolis on the joint Bayes posterior of (phi, theta)."""
    if model.kernels is None:
        raise SamplerError("model has no compiled kernels")
    Y, Z = model.y_rows(Y), model.z_rows(Z)
    eng = _engine.engine(model.kernels)
    p_phi = model.dims.p_phi
    blocks, bidx, bptr = _blocks(model, False)
    P = p_phi + model.dims.p_theta
    x0 = np.concatenate([np.asarray(model.init_phi, float), np.asarray(model.init_theta, float)])
    _start(model, Y, Z, x0, p_phi, _engine.ETA, 1.0, 0, 0.0, eng[0])
    (rng,) = config.streams(1)
    normals = rng.standard_normal((config.n_iter, int(bptr[-1])))
    unif = rng.random((config.n_iter, len(blocks)))
    L, logs, targets = _init_proposals(config, blocks, P)
    hist, acc_burn, acc_post = eng[1](x0, p_phi, _engine.ETA, 1.0, 0, 0.0, Y, Z, model.consts,
                                      bidx, bptr, L, logs, targets, normals, unif,
                                      config.n_burn, config.adapt)
    names = [_block_name(b, p_phi).replace("theta_tilde", "theta") for b in blocks]
    _check_burn_in(names, acc_burn, config.n_burn, np.exp(logs).tolist())
    keep = _retained(config)
    return PosteriorDraws(
        phi=hist[keep, :p_phi].copy(), theta=hist[keep, p_phi:].copy(), theta_tilde=None,
        iters=keep, acceptance=_rates(names, acc_post, config.n_iter - config.n_burn),
        seed=config.seed, chain_id=config.chain_id, setting="bayes-joint")


def run_augmented_mcmc(model: TwoModuleModel, setting: InfluenceSetting, Y, Z,
                       config: McmcConfig = McmcConfig(), keep_y_tilde=False) -> PosteriorDraws:
    """delta-SMI by data augmentation: the outer chain targets
    pi(phi, theta_tilde) p(Z | phi) K_delta(Y, Y_tilde) p(Y_tilde | phi, theta_tilde)
    and needs no smoothed likelihood, only kernel evaluation.
    """
    if setting.kind != "delta":
        raise SamplerError("augmented sampling needs a Delta(delta, kernel) setting")
    if model.kernels is None:
        raise SamplerError("model has no compiled kernels")
    kern = setting.kernel
    if kern.is_discrete != model.y_discrete:
        raise SamplerError(f"kernel {kern.kind!r} does not match the model's response type")
    Y, Z = model.y_rows(Y), model.z_rows(Z)
    eng = _engine.engine(model.kernels)
    p_phi = model.dims.p_phi
    blocks, bidx, bptr = _blocks(model, False)
    P = p_phi + model.dims.p_theta
    x0 = np.concatenate([np.asarray(model.init_phi, float), np.asarray(model.init_theta, float)])
    _start(model, Y, Z, x0, p_phi, _engine.AUG, 1.0, kern.code, kern.delta, eng[0])
    r_out, r_y, r_in = config.streams(3)
    n = Y.shape[0]
    normals = r_out.standard_normal((config.n_iter, int(bptr[-1])))
    unif = r_out.random((config.n_iter, len(blocks)))
    y_norm = r_y.standard_normal((config.n_iter, n))
    y_unif = r_y.random((config.n_iter, n, 3))
    L, logs, targets = _init_proposals(config, blocks, P)
    log_w = np.array([math.log(max(kern.delta, 1.0) if kern.is_discrete else kern.delta)])
    hist, yhist, acc_burn, acc_post = eng[3](
        x0, Y.copy(), p_phi, kern.code, kern.delta, Y, Z, model.consts, bidx, bptr, L, logs,
        targets, normals, unif, y_norm, y_unif, log_w, config.n_burn, config.adapt)
    names = [_block_name(b, p_phi) for b in blocks] + ["y_tilde"]
    scales = np.exp(logs).tolist() + [float(np.exp(log_w[0]))]
    if kern.is_discrete and kern.neighborhood(Y[:, 0])[0].tolist() == \
            kern.neighborhood(Y[:, 0])[1].tolist():
        # singleton neighbourhoods: Y_tilde cannot move, nothing to accept
        names, acc_burn = names[:-1], acc_burn[:-1]
    _check_burn_in(names, acc_burn, config.n_burn, scales)
    theta, iacc, _ = _inner(model, eng, hist, Y, config, r_in)
    keep = _retained(config)
    n_post = config.n_iter - config.n_burn
    acc = _rates([_block_name(b, p_phi) for b in blocks] + ["y_tilde"], acc_post, n_post)
    acc["y_tilde"] = acc["y_tilde"] / max(n, 1)
    acc["theta|phi"] = float(iacc[1]) / (n_post * config.inner_steps) if n_post else math.nan
    return PosteriorDraws(
        phi=hist[keep, :p_phi].copy(), theta=theta[keep].copy(),
        theta_tilde=hist[keep, p_phi:].copy(), iters=keep, acceptance=acc, seed=config.seed,
        chain_id=config.chain_id, setting=str(setting) + "+aug",
        y_tilde=yhist[keep].copy() if keep_y_tilde else None)


def sample_theta_given_phi(model: TwoModuleModel, phi, Y, config: McmcConfig = McmcConfig()):
    """Draws from pi(theta | Y, phi) at a fixed phi: one retained state per
    ``inner_steps`` moves of the inner chain."""
    if model.kernels is None:
        raise SamplerError("model has no compiled kernels")
    Y = model.y_rows(Y)
    eng = _engine.engine(model.kernels)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    hist = np.tile(phi, (config.n_iter, 1))
    (rng,) = config.streams(1)
    theta, iacc, iscale = _inner(model, eng, hist, Y, config, rng)
    if iacc[0] == 0 and config.n_burn > 0:
        raise SamplerError(f"inner chain accepted nothing during burn-in (scale {iscale})",
                           scales=[iscale])
    return theta[_retained(config)].copy()
