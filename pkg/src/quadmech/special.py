"""Special functions evaluated with stable recurrences.

Bessel functions of the first kind use Miller's downward recurrence.
Laguerre polynomials and Hermite functions run their three-term
recurrences with a running log-scale so that orders up to several hundred
stay representable in double precision (factorials overflow near 170).
"""

from __future__ import annotations

import math

import numpy as np

_BIG = 1e150
_LOG_BIG = math.log(_BIG)


def bessel_j_table(order_max: int, x) -> np.ndarray:
    """Return ``J_k(x)`` for ``k = 0..order_max``.

    Parameters
    ----------
    order_max : int
        Highest non-negative order required.
    x : array_like
        Real arguments.

    Returns
    -------
    numpy.ndarray
        Array of shape ``(order_max + 1,) + x.shape``.

    Notes
    -----
    Miller's algorithm: recur downwards from an even starting order well
    above ``max(order_max, |x|)`` and normalise with the identity
    ``J_0 + 2 * sum_k J_2k = 1``.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = np.abs(x.ravel())
    out = np.zeros((order_max + 1, xf.size))
    if xf.size == 0:
        return out.reshape((order_max + 1,) + shape)

    zero = xf == 0.0
    xs = np.where(zero, 1.0, xf)
    top = max(order_max, int(np.ceil(xf.max())))
    start = top + 20 + int(np.sqrt(40.0 * (top + 1)))
    start += start % 2

    vals = np.zeros((start + 2, xf.size))
    vals[start] = 1e-300
    for k in range(start, 0, -1):
        vals[k - 1] = (2.0 * k / xs) * vals[k] - vals[k + 1]
        big = np.abs(vals[k - 1]) > _BIG
        if big.any():
            vals[:, big] /= _BIG
    norm = vals[0] + 2.0 * vals[2:start + 1:2].sum(axis=0)
    table = vals[: order_max + 1] / norm
    table[:, zero] = 0.0
    table[0, zero] = 1.0

    # J_k(-x) = (-1)^k J_k(x)
    neg = x.ravel() < 0
    if neg.any():
        odd = np.arange(order_max + 1) % 2 == 1
        table[np.ix_(odd, neg)] *= -1.0
    out[:] = table
    return out.reshape((order_max + 1,) + shape)


def bessel_j(order, x) -> np.ndarray:
    """``J_order(x)`` for integer orders of either sign (broadcasting)."""
    order = np.asarray(order, dtype=int)
    x = np.asarray(x, dtype=float)
    order, x = np.broadcast_arrays(order, x)
    kmax = int(np.abs(order).max()) if order.size else 0
    table = bessel_j_table(kmax, x)
    k = np.abs(order)
    flat_idx = np.arange(x.size).reshape(x.shape)
    vals = table.reshape(kmax + 1, -1)[k.ravel(), flat_idx.ravel()].reshape(x.shape)
    sign = np.where((order < 0) & (k % 2 == 1), -1.0, 1.0)
    return sign * vals


def _laguerre_sweep(jmax: int, k, x):
    """Yield ``(j, value, logscale)`` for ``L_j^(k)(x)``, ``j = 0..jmax``.

    ``L_j^(k)(x) = value * exp(logscale)``; ``k`` and ``x`` broadcast.
    """
    k, x = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(x, dtype=float))
    prev = np.zeros(k.shape)
    cur = np.ones(k.shape)
    logscale = np.zeros(k.shape)
    yield 0, cur, logscale
    if jmax == 0:
        return
    prev, cur = cur, 1.0 + k - x
    yield 1, cur, logscale
    for j in range(1, jmax):
        nxt = ((2 * j + 1 + k - x) * cur - (j + k) * prev) / (j + 1)
        prev, cur = cur, nxt
        mag = np.maximum(np.abs(prev), np.abs(cur))
        hi = mag > _BIG
        lo = (mag < 1.0 / _BIG) & (mag > 0)
        if hi.any() or lo.any():
            scale = np.where(hi, 1.0 / _BIG, np.where(lo, _BIG, 1.0))
            prev = prev * scale
            cur = cur * scale
            logscale = logscale - np.log(scale)
        yield j + 1, cur, logscale


def log_laguerre_table(jmax: int, k, x):
    """Log-magnitudes and signs of ``L_j^(k)(x)`` for every ``j <= jmax``.

    Returns
    -------
    logabs, sign : numpy.ndarray
        Both of shape ``(jmax + 1,) + broadcast(k, x).shape``.
        ``logabs`` is ``-inf`` where the polynomial vanishes exactly.
    """
    k, x = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(x, dtype=float))
    logabs = np.empty((jmax + 1,) + k.shape)
    sign = np.empty((jmax + 1,) + k.shape)
    with np.errstate(divide="ignore"):
        for j, val, ls in _laguerre_sweep(jmax, k, x):
            logabs[j] = np.log(np.abs(val)) + ls
            sign[j] = np.sign(val)
    return logabs, sign


def log_laguerre(n, k, x):
    """Elementwise ``(log|L_n^(k)(x)|, sign)``."""
    n, k, x = np.broadcast_arrays(
        np.asarray(n, dtype=int), np.asarray(k, dtype=float), np.asarray(x, dtype=float)
    )
    logabs = np.full(n.shape, -np.inf)
    sign = np.zeros(n.shape)
    jmax = int(n.max()) if n.size else 0
    with np.errstate(divide="ignore"):
        for j, val, ls in _laguerre_sweep(jmax, k, x):
            hit = n == j
            if hit.any():
                logabs[hit] = np.log(np.abs(val[hit])) + ls[hit]
                sign[hit] = np.sign(val[hit])
    return logabs, sign


def laguerre(n, k, x) -> np.ndarray:
    """Generalised Laguerre polynomial ``L_n^(k)(x)`` (may overflow to inf)."""
    logabs, sign = log_laguerre(n, k, x)
    with np.errstate(over="ignore"):
        return sign * np.exp(logabs)


def hermite_functions(nmax: int, y) -> np.ndarray:
    """Orthonormal Hermite functions ``h_n(y)`` for ``n = 0..nmax``.

    ``h_n(y) = (2^n n! sqrt(pi))^(-1/2) H_n(y) exp(-y^2 / 2)``. The
    Gaussian factor is carried as a log-scale through the recurrence, so
    large ``|y|`` underflows only at the very end.

    Returns
    -------
    numpy.ndarray
        Shape ``(nmax + 1,) + y.shape``.
    """
    logabs, sign = log_hermite_functions(nmax, y)
    return sign * np.exp(logabs)


def log_hermite_functions(nmax: int, y):
    """``(log|h_n(y)|, sign)`` for ``n = 0..nmax``; see :func:`hermite_functions`."""
    y = np.asarray(y, dtype=float)
    logabs = np.empty((nmax + 1,) + y.shape)
    sign = np.empty((nmax + 1,) + y.shape)
    logscale = -0.5 * y**2 - 0.25 * math.log(math.pi)
    prev = np.zeros(y.shape)
    cur = np.ones(y.shape)
    with np.errstate(divide="ignore"):
        logabs[0] = logscale
        sign[0] = 1.0
        for n in range(nmax):
            nxt = math.sqrt(2.0 / (n + 1)) * y * cur - math.sqrt(n / (n + 1)) * prev
            prev, cur = cur, nxt
            mag = np.maximum(np.abs(prev), np.abs(cur))
            hi = mag > _BIG
            if hi.any():
                prev = np.where(hi, prev / _BIG, prev)
                cur = np.where(hi, cur / _BIG, cur)
                logscale = np.where(hi, logscale + _LOG_BIG, logscale)
            logabs[n + 1] = np.log(np.abs(cur)) + logscale
            sign[n + 1] = np.sign(cur)
    return logabs, sign
