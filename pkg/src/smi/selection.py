"""Predictive utilities over influence-parameter grids and selection of delta*/eta*."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import closed_form as cf
from .core import Cut, Delta, Eta, InfluenceSetting, TwoModuleModel
from .errors import RangeMismatchError, SequenceTooShort
from .experiments.io import write_csv, write_json


class Estimate(NamedTuple):
    value: float
    se: float
    pointwise: np.ndarray


def _as_setting(g, scale):
    if isinstance(g, InfluenceSetting):
        return g
    return Delta(g) if scale == "delta" else Eta(g)


@dataclass(frozen=True)
class UtilityCurve:
    """Utility estimates on an ordered grid of influence settings.

    ``maximize`` is False for losses such as PMSE; :attr:`best` then points
    at the minimum.
    """

    grid: tuple
    values: np.ndarray
    std_errors: np.ndarray
    scale: str = "delta"
    name: str = "elpd"
    maximize: bool = True

    def __post_init__(self):
        grid = tuple(_as_setting(g, self.scale) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        vals = np.asarray(self.values, dtype=float)
        se = np.asarray(self.std_errors, dtype=float)
        if vals.shape != (len(grid),) or se.shape != vals.shape:
            raise ValueError("values and std_errors must have one entry per grid point")
        if len(grid) == 0:
            raise ValueError("empty grid")
        meta = self.meta_values
        if np.any(np.diff(meta) <= 0):
            raise ValueError("grid must be strictly increasing in the meta-parameter")
        vals.setflags(write=False)
        se.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "std_errors", se)

    @property
    def meta_values(self) -> np.ndarray:
        return np.array([g.meta(self.scale) for g in self.grid])

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))

    @property
    def best(self) -> int:
        return self.argmax if self.maximize else int(np.argmin(self.values))

    @property
    def best_setting(self) -> InfluenceSetting:
        return self.grid[self.best]

    @property
    def best_meta(self) -> float:
        return float(self.meta_values[self.best])

    def bracket(self):
        """Neighbouring grid values around the optimum (the grid resolution of the choice)."""
        meta = self.meta_values
        i = self.best
        return float(meta[max(i - 1, 0)]), float(meta[min(i + 1, len(meta) - 1)])

    def rows(self):
        return [(m, v, s) for m, v, s in zip(self.meta_values, self.values, self.std_errors)]

    def to_csv(self, path):
        write_csv(path, ["meta_param", "utility", "se"], self.rows())

    def to_dict(self):
        return {
            "name": self.name,
            "scale": self.scale,
            "maximize": self.maximize,
            "meta_param": self.meta_values.tolist(),
            "utility": self.values.tolist(),
            "se": self.std_errors.tolist(),
            "best_index": self.best,
            "best_meta_param": self.best_meta,
            "bracket": list(self.bracket()),
        }

    def to_json(self, path):
        write_json(path, self.to_dict())


def default_delta_grid(lo=-3.0, hi=3.0, num=61, include_endpoints=True):
    """Log-spaced delta grid (powers of e from lo to hi) with 0 and inf added."""
    g = list(np.exp(np.linspace(lo, hi, num)))
    return ([0.0] + g + [math.inf]) if include_endpoints else g


def exact_elpd_curve(cfg: cf.BiasedDataConfig, delta_grid: Sequence[float]) -> UtilityCurve:
    """Exact ELPD of the biased-data delta-SMI predictive at each grid point."""
    grid = sorted(set(float(d) for d in delta_grid))
    vals = [cf.exact_elpd_biased(cfg, d) for d in grid]
    return UtilityCurve(tuple(Delta(d) for d in grid), np.array(vals), np.zeros(len(grid)))


def exact_elpd_curve_eta(cfg: cf.BiasedDataConfig, eta_grid: Sequence[float]) -> UtilityCurve:
    """Exact ELPD of the biased-data eta-SMI predictive at each grid point."""
    grid = sorted(set(float(e) for e in eta_grid))
    vals = [cf.exact_elpd_biased_eta(cfg, e) for e in grid]
    return UtilityCurve(tuple(Eta(e) for e in grid), np.array(vals), np.zeros(len(grid)),
                        scale="eta")


def _gaussian_logpdf(x, m, v):
    return -0.5 * math.log(2 * math.pi * v) - 0.5 * (x - m) ** 2 / v


def _closed_form_loo(model, Y, Z, setting):
    """Leave-one-out predictive log densities from conjugate sums (no refitting)."""
    d = setting.meta("delta") if setting.kind in ("bayes", "cut", "delta") else None
    if d is None or (setting.kind == "delta" and setting.kernel.kind != "gaussian"):
        return None
    z = model.z_rows(Z)[:, 0]
    m = z.size
    if model.name == "biased":
        sy, sz, st = model.consts
        base = cf.BiasedDataConfig.from_data(Y, Z, sy, sz, st)
        post_of = cf.biased_phi_posterior
    elif model.name == "regression":
        sy, sz = model.consts
        base = cf.RegressionConfig.from_data(Y, Z, sy, sz)
        post_of = cf.regression_smi_posterior
    else:
        return None
    total = z.sum()
    out = np.empty(m)
    for j in range(m):
        cfg = dataclasses.replace(base, m=m - 1, zbar=(total - z[j]) / (m - 1))
        post = post_of(cfg, d)
        out[j] = _gaussian_logpdf(z[j], post.mean, post.var + sz**2)
    return out


def loocv_elpd_z(model: TwoModuleModel, Y, Z, setting: InfluenceSetting,
                 refit: Optional[Callable] = None) -> Estimate:
    """Leave-one-out estimate of the per-observation ELPD for Z.

    Conjugate Gaussian models use the closed-form leave-one-out posterior.
    Otherwise ``refit(Y, Z_minus_j)`` must return posterior draws (with a
    ``phi`` attribute) of the same setting; the predictive density of Z_j is
    then averaged over those draws.
    """
    Zr = model.z_rows(Z)
    m = Zr.shape[0]
    if m < 2:
        raise SequenceTooShort("LOOCV needs at least two Z observations")
    pointwise = _closed_form_loo(model, Y, Zr, setting)
    if pointwise is None:
        if refit is None:
            raise ValueError("no closed form for this model/setting; pass refit=")
        pointwise = np.empty(m)
        for j in range(m):
            draws = refit(Y, np.delete(Zr, j, axis=0))
            ll = np.array([model.z_loglik(phi, Zr[j:j + 1]) for phi in draws.phi])
            pointwise[j] = logsumexp(ll) - math.log(ll.size)
    return Estimate(float(pointwise.mean()), float(pointwise.std(ddof=1) / math.sqrt(m)), pointwise)


def waic_elpd(loglik) -> Estimate:
    """WAIC estimate of the total ELPD from a (draws x observations) log-likelihood matrix.

    Sum over observations of log mean_s exp(ll_si) minus the variance of ll_si
    over draws; the standard error uses the spread of the pointwise terms.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim == 1:
        ll = ll[:, None]
    S, n = ll.shape
    if S < 2:
        raise SequenceTooShort("WAIC needs at least two posterior draws")
    lppd = logsumexp(ll, axis=0) - math.log(S)
    pen = ll.var(axis=0, ddof=1)
    pointwise = lppd - pen
    se = math.sqrt(n * pointwise.var(ddof=1)) if n > 1 else 0.0
    return Estimate(float(pointwise.sum()), se, pointwise)


def pointwise_loglik(fn, draws_params, data_rows):
    """Matrix ll[s, i] = fn(params_s, row_i)."""
    return np.array([[fn(p, row) for row in data_rows] for p in draws_params])


def pmse(draws, true_value):
    """Posterior mean squared error of draws around the true value (per coordinate)."""
    d = np.asarray(draws, dtype=float)
    if d.ndim == 1:
        return float(np.mean((d - float(true_value)) ** 2))
    out = np.mean((d - np.asarray(true_value, dtype=float)) ** 2, axis=0)
    return float(out[0]) if out.size == 1 else out


@dataclass(frozen=True)
class EtaDeltaAlignment:
    """Monotone map from the eta grid to delta values with matching utility."""

    eta: np.ndarray
    delta: np.ndarray
    eta_utility: np.ndarray
    matched_utility: np.ndarray

    @property
    def residuals(self):
        return self.eta_utility - self.matched_utility

    def delta_at(self, eta: float) -> float:
        i = int(np.argmin(np.abs(self.eta - eta)))
        return float(self.delta[i])

    def rows(self):
        return list(zip(self.eta, self.delta, self.eta_utility, self.matched_utility,
                        self.residuals))


def _fine_delta_curve(curve: UtilityCurve, per_interval: int):
    """Piecewise-linear refinement of a delta curve, interpolating delta on log1p scale.

    An infinite last node is kept as a single point.
    """
    meta = curve.meta_values
    vals = curve.values
    finite = np.isfinite(meta)
    mf, vf = meta[finite], vals[finite]
    if mf.size == 1:
        d, v = mf.copy(), vf.copy()
    else:
        t = np.linspace(0.0, mf.size - 1.0, (mf.size - 1) * per_interval + 1)
        idx = np.arange(mf.size)
        d = np.expm1(np.interp(t, idx, np.log1p(mf)))
        v = np.interp(t, idx, vf)
    if not finite[-1]:
        d = np.append(d, math.inf)
        v = np.append(v, vals[-1])
    return d, v


def eta_to_delta_matching(elpd_curve_delta: UtilityCurve, elpd_curve_eta: UtilityCurve,
                          decreasing: bool = True, per_interval: int = 50) -> EtaDeltaAlignment:
    """Least-squares monotone alignment of an eta utility curve to a delta utility curve.

    Each eta grid point is assigned a point of the (refined) delta curve so
    that the sum of squared utility differences is minimal subject to the
    assigned delta being non-increasing in eta (``decreasing=True``: eta=1 is
    Bayes, delta=0 is Bayes).  Solved exactly by dynamic programming.
    """
    if elpd_curve_delta.scale != "delta" or elpd_curve_eta.scale != "eta":
        raise ValueError("expected a delta curve and an eta curve")
    d, v = _fine_delta_curve(elpd_curve_delta, per_interval)
    u = elpd_curve_eta.values
    eta = elpd_curve_eta.meta_values
    if u.max() < v.min() or u.min() > v.max():
        raise RangeMismatchError(
            f"eta utilities [{u.min():.6g}, {u.max():.6g}] and delta utilities "
            f"[{v.min():.6g}, {v.max():.6g}] do not overlap")
    M = d.size
    if decreasing:
        # process eta in decreasing order so delta indices are non-decreasing
        order = np.argsort(-eta, kind="stable")
    else:
        order = np.argsort(eta, kind="stable")
    cost = np.zeros(M)
    back = []
    for k, i in enumerate(order):
        c = (u[i] - v) ** 2
        if k == 0:
            cost = c
            back.append(None)
            continue
        # best predecessor with index <= j
        prefix_arg = np.zeros(M, dtype=np.int64)
        best = 0
        for j in range(M):
            if cost[j] < cost[best]:
                best = j
            prefix_arg[j] = best
        cost = c + cost[prefix_arg]
        back.append(prefix_arg)
    j = int(np.argmin(cost))
    assign = np.empty(len(order), dtype=np.int64)
    for k in range(len(order) - 1, -1, -1):
        assign[k] = j
        if back[k] is not None:
            j = int(back[k][j])
    delta_out = np.empty(eta.size)
    matched = np.empty(eta.size)
    for k, i in enumerate(order):
        delta_out[i] = d[assign[k]]
        matched[i] = v[assign[k]]
    return EtaDeltaAlignment(eta.copy(), delta_out, u.copy(), matched)
