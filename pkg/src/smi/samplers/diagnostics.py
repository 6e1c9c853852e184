"""Convergence diagnostics for MCMC output."""
from __future__ import annotations

import math
import warnings

import numpy as np

from ..errors import SequenceTooShort


def autocorrelation(x):
    """Sample autocorrelation at all lags, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.full(n, np.nan)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """ESS by Geyer's initial positive sequence estimator, capped at len(x).

    Sums of adjacent autocorrelation pairs are accumulated while positive and
    forced to be non-increasing.  A constant sequence carries no information
    about mixing: a warning is issued and 1.0 returned.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise SequenceTooShort(f"need at least 10 draws for ESS, got {n}")
    if np.all(x == x[0]):
        warnings.warn("constant sequence; ESS is not informative", RuntimeWarning, stacklevel=2)
        return 1.0
    rho = autocorrelation(x)
    npairs = n // 2
    gam = rho[0 : 2 * npairs : 2] + rho[1 : 2 * npairs : 2]
    total = 0.0
    prev = math.inf
    for g in gam:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = -1.0 + 2.0 * total
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


def mcse(x) -> float:
    """Monte Carlo standard error of the mean of a chain."""
    x = np.asarray(x, dtype=float).ravel()
    return float(np.std(x, ddof=1) / math.sqrt(effective_sample_size(x)))
