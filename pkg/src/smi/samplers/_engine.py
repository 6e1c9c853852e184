"""Compiled Metropolis kernels shared by the nested and augmented samplers.

All randomness is passed in as pre-generated arrays, so a run is a pure
function of its inputs and gives the same draws with or without numba (up to
floating-point rounding in transcendental functions).

Outer state is the vector x = (phi, theta_tilde) (phi only for Cut), updated
in possibly overlapping blocks by random-walk Metropolis with proposal
exp(s_b) L_b eps.  L_b is a Cholesky factor learned from the burn-in history
and s_b is tuned by Robbins-Monro towards the block's target acceptance rate.
Both are frozen after burn-in.  Each block draws its own noise slots, so
overlapping blocks never reuse a random number.
"""
from __future__ import annotations

import math

import numpy as np

from .._accel import jit
from ..kernels import DISCRETE_UNIFORM, SCALED_TOPHAT, kernel_logpdf

CUT = 0
ETA = 1
DELTA = 2
AUG = 3

ADAPT_START = 200
ADAPT_EVERY = 100
RM_EXPONENT = 0.6

_cache = {}


@jit(cache=True)
def _rm_gain(t):
    return (t + 1.0) ** (-RM_EXPONENT)


@jit(cache=True)
def _chol_of_cov(hist, lo, hi, idx):
    """Cholesky factor of the sample covariance of hist[lo:hi, idx], or empty on failure."""
    d = idx.shape[0]
    n = hi - lo
    mean = np.zeros(d)
    for t in range(lo, hi):
        for a in range(d):
            mean[a] += hist[t, idx[a]]
    mean /= n
    cov = np.zeros((d, d))
    for t in range(lo, hi):
        for a in range(d):
            da = hist[t, idx[a]] - mean[a]
            for b in range(d):
                cov[a, b] += da * (hist[t, idx[b]] - mean[b])
    cov /= n - 1.0
    return _safe_chol(cov)


@jit(cache=True)
def _safe_chol(cov):
    d = cov.shape[0]
    tr = 0.0
    for a in range(d):
        if not cov[a, a] > 0.0:
            return np.zeros((0, 0))
        tr += cov[a, a]
    jitter = 1e-10 * tr / d
    for a in range(d):
        cov[a, a] += jitter
    # plain Cholesky-Banachiewicz so that the fallback and compiled paths agree
    L = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1):
            s = cov[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 0.0:
                    return np.zeros((0, 0))
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L


def _build(kern):
    """Compile the sampler kernels for one model's log-density functions."""
    lp_phi, lp_theta, z_ll, y_ll, y_sm = kern

    @jit
    def outer_logpost(x, p_phi, mode, eta, kcode, delta, Y, Z, c):
        phi = x[:p_phi]
        lp = lp_phi(phi, c)
        if lp == -math.inf:
            return lp
        lp += z_ll(phi, Z, c)
        if mode == CUT:
            return lp
        tt = x[p_phi:]
        lp += lp_theta(tt, phi, c)
        if lp == -math.inf:
            return lp
        if mode == ETA:
            lp += eta * np.sum(y_ll(phi, tt, Y, c))
        elif mode == DELTA:
            lp += np.sum(y_sm(phi, tt, Y, c, kcode, delta))
        else:
            lp += np.sum(y_ll(phi, tt, Y, c))
        if math.isnan(lp):
            return -math.inf
        return lp

    @jit
    def sweep(x, lp, t, p_phi, mode, eta, kcode, delta, Y, Z, c, bidx, bptr, L, logs, targets,
              normals, unif, adapt, acc):
        nb = bptr.shape[0] - 1
        for b in range(nb):
            lo = bptr[b]
            d = bptr[b + 1] - lo
            prop = x.copy()
            sc = math.exp(logs[b])
            for i in range(d):
                s = 0.0
                for j in range(i + 1):
                    s += L[b, i, j] * normals[t, lo + j]
                prop[bidx[lo + i]] += sc * s
            lpn = outer_logpost(prop, p_phi, mode, eta, kcode, delta, Y, Z, c)
            ratio = lpn - lp
            if lpn == -math.inf:
                a_prob = 0.0
            elif ratio >= 0.0:
                a_prob = 1.0
            else:
                a_prob = math.exp(ratio)
            if math.log(unif[t, b]) < ratio:
                for i in range(d):
                    x[bidx[lo + i]] = prop[bidx[lo + i]]
                lp = lpn
                acc[b] += 1
            if adapt:
                logs[b] += _rm_gain(t) * (a_prob - targets[b])
        return lp

    @jit
    def learn_cov(hist, t, bidx, bptr, L, logs, learned):
        nb = bptr.shape[0] - 1
        for b in range(nb):
            lo = bptr[b]
            d = bptr[b + 1] - lo
            Lb = _chol_of_cov(hist, (t + 1) // 2, t + 1, bidx[lo:lo + d])
            if Lb.shape[0] == 0:
                continue
            for i in range(d):
                for j in range(d):
                    L[b, i, j] = Lb[i, j]
            if not learned[b]:
                logs[b] = math.log(2.38 / math.sqrt(d))
                learned[b] = True

    @jit
    def run_outer(x0, p_phi, mode, eta, kcode, delta, Y, Z, c, bidx, bptr, L, logs, targets,
                  normals, unif, n_burn, adapt):
        n_iter = normals.shape[0]
        nb = bptr.shape[0] - 1
        hist = np.empty((n_iter, x0.shape[0]))
        acc_burn = np.zeros(nb, dtype=np.int64)
        acc_post = np.zeros(nb, dtype=np.int64)
        learned = np.zeros(nb, dtype=np.bool_)
        x = x0.copy()
        lp = outer_logpost(x, p_phi, mode, eta, kcode, delta, Y, Z, c)
        for t in range(n_iter):
            in_burn = t < n_burn
            acc = acc_burn if in_burn else acc_post
            lp = sweep(x, lp, t, p_phi, mode, eta, kcode, delta, Y, Z, c, bidx, bptr, L, logs,
                       targets, normals, unif, adapt and in_burn, acc)
            hist[t] = x
            if adapt and in_burn and t + 1 >= ADAPT_START and (t + 1) % ADAPT_EVERY == 0:
                learn_cov(hist, t, bidx, bptr, L, logs, learned)
        return hist, acc_burn, acc_post

    @jit
    def inner_logpost(theta, phi, Y, c):
        lp = lp_theta(theta, phi, c)
        if lp == -math.inf:
            return lp
        lp += np.sum(y_ll(phi, theta, Y, c))
        if math.isnan(lp):
            return -math.inf
        return lp

    @jit
    def run_inner(theta0, phis, p_phi, Y, c, L, logs, target, normals, unif, n_burn, adapt):
        """Warm-started chains on pi(theta | Y, phi_t); returns the last state for each t."""
        n_iter = normals.shape[0]
        K = normals.shape[1]
        p = theta0.shape[0]
        out = np.empty((n_iter, p))
        acc = np.zeros(2, dtype=np.int64)
        theta = theta0.copy()
        # pooled within-run scatter for the conditional covariance
        scat = np.zeros((p, p))
        nscat = 0
        learned = False
        run = np.empty((K, p))
        step = 0
        for t in range(n_iter):
            phi = phis[t, :p_phi]
            lp = inner_logpost(theta, phi, Y, c)
            in_burn = t < n_burn
            sc = math.exp(logs[0])
            for k in range(K):
                prop = theta.copy()
                for i in range(p):
                    s = 0.0
                    for j in range(i + 1):
                        s += L[i, j] * normals[t, k, j]
                    prop[i] += sc * s
                lpn = inner_logpost(prop, phi, Y, c)
                ratio = lpn - lp
                if math.log(unif[t, k]) < ratio:
                    theta = prop
                    lp = lpn
                    acc[0 if in_burn else 1] += 1
                if adapt and in_burn:
                    if lpn == -math.inf:
                        a_prob = 0.0
                    elif ratio >= 0.0:
                        a_prob = 1.0
                    else:
                        a_prob = math.exp(ratio)
                    logs[0] += _rm_gain(step) * (a_prob - target)
                    sc = math.exp(logs[0])
                    step += 1
                run[k] = theta
            out[t] = theta
            if adapt and in_burn and K > 1:
                mean = np.zeros(p)
                for k in range(K):
                    mean += run[k]
                mean /= K
                for k in range(K):
                    for a in range(p):
                        for b in range(p):
                            scat[a, b] += (run[k, a] - mean[a]) * (run[k, b] - mean[b])
                nscat += K - 1
                if t + 1 >= ADAPT_START and (t + 1) % ADAPT_EVERY == 0 and nscat > p:
                    Lb = _safe_chol(scat / nscat)
                    if Lb.shape[0] > 0:
                        for a in range(p):
                            for b in range(p):
                                L[a, b] = Lb[a, b]
                        if not learned:
                            logs[0] = math.log(2.38 / math.sqrt(p))
                            learned = True
        return out, acc

    @jit
    def run_augmented(x0, yt0, p_phi, kcode, delta, Y, Z, c, bidx, bptr, L, logs, targets,
                      normals, unif, y_norm, y_unif, log_w, n_burn, adapt):
        """Blocks on (phi, theta_tilde) given Y_tilde, then coordinate-wise Y_tilde updates."""
        n_iter = normals.shape[0]
        nb = bptr.shape[0] - 1
        n = Y.shape[0]
        discrete = kcode == DISCRETE_UNIFORM or kcode == SCALED_TOPHAT
        hist = np.empty((n_iter, x0.shape[0]))
        yhist = np.empty((n_iter, n))
        acc_burn = np.zeros(nb + 1, dtype=np.int64)
        acc_post = np.zeros(nb + 1, dtype=np.int64)
        learned = np.zeros(nb, dtype=np.bool_)
        x = x0.copy()
        Yt = yt0.copy()
        lk = np.empty(n)
        for i in range(n):
            lk[i] = kernel_logpdf(kcode, Y[i, 0], Yt[i, 0], delta)
        for t in range(n_iter):
            in_burn = t < n_burn
            acc = acc_burn if in_burn else acc_post
            lp = outer_logpost(x, p_phi, AUG, 1.0, kcode, delta, Yt, Z, c)
            lp = sweep(x, lp, t, p_phi, AUG, 1.0, kcode, delta, Yt, Z, c, bidx, bptr, L, logs,
                       targets, normals, unif, adapt and in_burn, acc)
            hist[t] = x
            if adapt and in_burn and t + 1 >= ADAPT_START and (t + 1) % ADAPT_EVERY == 0:
                learn_cov(hist, t, bidx, bptr, L, logs, learned)
            # Y_tilde given (phi, theta_tilde): independent coordinates, one proposal each
            phi = x[:p_phi]
            tt = x[p_phi:]
            prop = Yt.copy()
            w = math.exp(log_w[0])
            for i in range(n):
                if discrete:
                    W = max(1, int(math.floor(w)))
                    k = 1 + int(math.floor(y_unif[t, i, 0] * W))
                    if y_unif[t, i, 1] < 0.5:
                        k = -k
                    prop[i, 0] = Yt[i, 0] + k
                else:
                    prop[i, 0] = Yt[i, 0] + w * y_norm[t, i]
            ll_old = y_ll(phi, tt, Yt, c)
            ll_new = y_ll(phi, tt, prop, c)
            mean_a = 0.0
            for i in range(n):
                lk_new = kernel_logpdf(kcode, Y[i, 0], prop[i, 0], delta)
                ratio = ll_new[i] + lk_new - ll_old[i] - lk[i]
                if lk_new == -math.inf or math.isnan(ratio):
                    a_prob = 0.0
                    ratio = -math.inf
                elif ratio >= 0.0:
                    a_prob = 1.0
                else:
                    a_prob = math.exp(ratio)
                mean_a += a_prob
                if math.log(y_unif[t, i, 2]) < ratio:
                    Yt[i, 0] = prop[i, 0]
                    lk[i] = lk_new
                    acc[nb] += 1
            if adapt and in_burn and n > 0:
                log_w[0] += _rm_gain(t) * (mean_a / n - 0.44)
            yhist[t] = Yt[:, 0]
        return hist, yhist, acc_burn, acc_post

    return outer_logpost, run_outer, run_inner, run_augmented


def engine(kern):
    """Compiled sampler functions for a :class:`~smi.models.ModelKernels` bundle."""
    key = id(kern)
    hit = _cache.get(key)
    if hit is None or hit[0] is not kern:
        hit = (kern, _build(kern))
        _cache[key] = hit
    return hit[1]
