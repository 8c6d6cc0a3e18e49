"""Truncated Fock-space linear algebra.

Squeeze and displacement matrix elements, oscillator wavefunctions with a
qubit-dependent width, standard phonon-number distributions and the Wigner
function of a diagonal state.

Conventions
-----------
``a`` is the annihilation operator with ``a|n> = sqrt(n)|n-1>``. Quadratures
are ``x = (a + a^dag)/sqrt(2)`` and ``p = (a - a^dag)/(i sqrt(2))``, so the
vacuum has ``<x^2> = 1/2`` and the phase-space integral of ``W`` is 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln, roots_hermite

from .errors import AccuracyError, TruncationError, ValidityError
from .special import log_hermite_functions, log_laguerre_table

log = logging.getLogger(__name__)

DEFAULT_NMAX = 200
UNITARITY_TOL = 1e-6


# --------------------------------------------------------------------------
# Data types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhononDistribution:
    """Probability vector ``P(n)`` over ``n = 0..n_max``.

    The constructor validates but does not renormalise; use
    :meth:`from_weights` for unnormalised input.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValidityError("a phonon distribution needs n_max >= 1")
        if not np.all(np.isfinite(p)):
            raise ValidityError("phonon distribution contains non-finite entries")
        if p.min() < 0:
            raise ValidityError(f"negative probability {p.min():.3g}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidityError(f"probabilities sum to {p.sum():.12f}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, weights) -> "PhononDistribution":
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = w.sum()
        if total <= 0:
            raise ValidityError("weights have no positive mass")
        return cls(w / total)

    @classmethod
    def fock(cls, n: int, n_max: int) -> "PhononDistribution":
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def resized(self, n_max: int) -> "PhononDistribution":
        """Zero-pad or truncate (then renormalise) to a new ``n_max``."""
        p = np.zeros(n_max + 1)
        k = min(n_max, self.n_max) + 1
        p[:k] = self.probs[:k]
        return PhononDistribution.from_weights(p)

    def __len__(self):
        return self.probs.size


@dataclass(frozen=True)
class FockOperatorMatrix:
    """Dense operator matrix ``<m|O|n>`` on ``n = 0..n_max``.

    ``guard`` is the number of top Fock levels excluded from the interior
    unitarity guarantee: columns ``0..n_max - guard`` have unit norm within
    :data:`UNITARITY_TOL`.
    """

    entries: np.ndarray
    kind: str
    guard: int = 0

    def __post_init__(self):
        if self.kind not in ("squeeze", "displacement", "composite"):
            raise ValidityError(f"unknown operator kind {self.kind!r}")

    @property
    def n_max(self) -> int:
        return self.entries.shape[0] - 1

    def __getitem__(self, idx):
        return self.entries[idx]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class WignerGrid:
    """Wigner function ``values[i, j] = W(x_axis[j], p_axis[i])``."""

    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray
    integral: float = field(default=float("nan"))

    def at(self, x: float, p: float) -> float:
        """Value at the grid node nearest to ``(x, p)``."""
        j = int(np.argmin(np.abs(self.x_axis - x)))
        i = int(np.argmin(np.abs(self.p_axis - p)))
        return float(self.values[i, j])


# --------------------------------------------------------------------------
# Operator matrices
# --------------------------------------------------------------------------


def _annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, dim)), k=1)


def squeeze_buffer(z: float, n_max: int) -> int:
    """Extra Fock levels used when exponentiating the squeeze generator."""
    return max(16, math.ceil(8.0 * abs(z) * n_max))


def squeeze_guard(z: float, n_max: int) -> int:
    """Top levels excluded from the interior unitarity check.

    ``4 |z| n_max`` covers the linear spread of a column; the constant 24
    covers the factorially decaying tail ``(|z| n / 2)^k / k!`` when
    ``|z| n`` is of order one.
    """
    if z == 0:
        return 0
    return math.ceil(4.0 * abs(z) * n_max) + 24


def _check_interior(mat: np.ndarray, guard: int, what: str) -> None:
    n_max = mat.shape[0] - 1
    n_int = n_max + 1 - guard
    if n_int <= 0:
        return
    norms = np.sum(np.abs(mat[:, :n_int]) ** 2, axis=0)
    bad = np.abs(norms - 1.0) > UNITARITY_TOL
    if bad.any():
        col = int(np.argmax(bad))
        raise TruncationError(
            f"{what}: column {col} has squared norm {norms[col]:.9f};"
            f" increase n_max above {n_max}"
        )


def _squeeze_big(z: float, dim: int) -> np.ndarray:
    a = _annihilation(dim)
    a2 = a @ a
    return expm(0.5 * z * (a2 - a2.T))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=64)
def _squeeze_cached(z: float, n_max: int) -> np.ndarray:
    buffer = squeeze_buffer(z, n_max)
    kept = _squeeze_big(z, n_max + buffer + 1)[: n_max + 1, : n_max + 1]
    # refinement check: 16 more levels must not move the kept block
    finer = _squeeze_big(z, n_max + buffer + 17)[: n_max + 1, : n_max + 1]
    err = float(np.abs(kept - finer).max())
    if err > 1e-10:
        raise TruncationError(f"squeeze buffer of {buffer} levels is too small (refinement changes entries by {err:.2e})")
    return _readonly(np.ascontiguousarray(finer))


def squeeze_matrix(z: float, n_max: int = DEFAULT_NMAX) -> FockOperatorMatrix:
    """Matrix elements ``<m| exp[(z/2)(a^2 - a^dag^2)] |n>``.

    The generator is exponentiated (scaling and squaring) on a space enlarged
    by :func:`squeeze_buffer` levels and then cropped, so the kept block is
    free of truncation artefacts from the generator.

    Parameters
    ----------
    z : float
        Real squeeze argument, ``|z| <= 1``.
    n_max : int
        Highest Fock level kept, at least 8.

    Raises
    ------
    TruncationError
        If interior columns (see :func:`squeeze_guard`) are not unit norm.
    """
    z = float(z)
    if abs(z) > 1:
        raise ValidityError(f"|z| must be <= 1, got {z}")
    if n_max < 8:
        raise ValidityError("n_max must be at least 8")
    if z == 0:
        return FockOperatorMatrix(_readonly(np.eye(n_max + 1)), "squeeze", 0)
    mat = _squeeze_cached(z, int(n_max))
    guard = squeeze_guard(z, n_max)
    _check_interior(mat, guard, "squeeze_matrix")
    return FockOperatorMatrix(mat, "squeeze", guard)


def _displacement_dense(beta: float, n_max: int) -> np.ndarray:
    """Closed-form Laguerre expression for ``<m|D(beta)|n>``, real beta."""
    dim = n_max + 1
    x = beta * beta
    k = np.arange(dim)
    # table[j, k] = L_j^(k)(x)
    lt, st = log_laguerre_table(n_max, k, x)
    m_idx, n_idx = np.meshgrid(k, k, indexing="ij")
    lo = np.minimum(m_idx, n_idx)
    dk = np.abs(m_idx - n_idx)
    valid = lo + dk <= n_max
    lo_v = np.where(valid, lo, 0)
    dk_v = np.where(valid, dk, 0)
    logmag = (
        0.5 * (gammaln(lo_v + 1.0) - gammaln(lo_v + dk_v + 1.0))
        + dk_v * math.log(abs(beta))
        - 0.5 * x
        + lt[lo_v, dk_v]
    )
    sign = st[lo_v, dk_v]
    # beta^(m-n) for m >= n and (-beta)^(n-m) for m < n
    base_sign = np.where(m_idx >= n_idx, np.sign(beta), -np.sign(beta))
    sign = sign * np.where(dk_v % 2 == 1, base_sign, 1.0)
    out = np.where(valid, sign * np.exp(logmag), 0.0)
    return out


@lru_cache(maxsize=64)
def _displacement_cached(beta: float, n_max: int) -> np.ndarray:
    return _readonly(_displacement_dense(beta, n_max))


def displacement_guard(beta: float, n_max: int) -> int:
    """Top levels whose columns may leak past ``n_max`` by more than 1e-6."""
    if beta == 0:
        return 0
    return math.ceil(8.0 * abs(beta) * math.sqrt(n_max) + 8.0 * beta * beta + 8)


def displacement_matrix(beta: float, n_max: int = DEFAULT_NMAX) -> FockOperatorMatrix:
    """Matrix elements ``<m| exp(beta a^dag - beta a) |n>`` for real ``beta``.

    Evaluated from the closed form
    ``sqrt(n!/m!) beta^(m-n) exp(-beta^2/2) L_n^(m-n)(beta^2)`` (``m >= n``)
    and its mirror image, in the log domain. Entries are exact for the
    infinite space; cropping only removes rows.
    """
    beta = float(beta)
    if n_max < 8:
        raise ValidityError("n_max must be at least 8")
    if abs(beta) > math.sqrt(n_max) / 4.0:
        raise TruncationError(
            f"|beta| = {abs(beta):.3g} exceeds sqrt(n_max)/4 = {math.sqrt(n_max) / 4:.3g}"
        )
    if beta == 0:
        return FockOperatorMatrix(_readonly(np.eye(n_max + 1)), "displacement", 0)
    mat = _displacement_cached(beta, int(n_max))
    guard = displacement_guard(beta, n_max)
    _check_interior(mat, guard, "displacement_matrix")
    return FockOperatorMatrix(mat, "displacement", guard)


@lru_cache(maxsize=64)
def _residual_cached(r: float, beta: float, n_max: int) -> np.ndarray:
    pad = squeeze_buffer(2 * r, n_max) + displacement_guard(beta, n_max) + 16
    big = n_max + pad
    d = _displacement_dense(-beta, big)
    s = _squeeze_big(-2.0 * r, big + squeeze_buffer(2 * r, big) + 1)[: big + 1, : big + 1]
    return _readonly(np.ascontiguousarray((d @ s @ d)[: n_max + 1, : n_max + 1]))


def residual_overlap_matrix(r: float, beta: float, n_max: int = DEFAULT_NMAX) -> FockOperatorMatrix:
    """Overlaps ``<m| D^dag(beta) S(-2r) D(-beta) |n>``.

    With ``D^dag(beta) = D(-beta)`` this is ``D(-beta) S(-2r) D(-beta)``;
    the product is taken on an enlarged space and cropped. With ``beta = 0``
    it is exactly :func:`squeeze_matrix` at ``-2r``.
    """
    r = float(r)
    beta = float(beta)
    if beta == 0:
        s = squeeze_matrix(-2.0 * r, n_max)
        return FockOperatorMatrix(s.entries, "composite", s.guard)
    if abs(beta) > math.sqrt(n_max) / 4.0:
        raise TruncationError(f"|beta| = {abs(beta):.3g} exceeds sqrt(n_max)/4")
    if abs(2 * r) > 1:
        raise ValidityError("|2r| must be <= 1")
    mat = _residual_cached(r, beta, int(n_max))
    guard = squeeze_guard(2 * r, n_max) + 2 * displacement_guard(beta, n_max)
    _check_interior(mat, guard, "residual_overlap_matrix")
    return FockOperatorMatrix(mat, "composite", guard)


# --------------------------------------------------------------------------
# Wavefunctions and Franck-Condon overlaps
# --------------------------------------------------------------------------


def wavefunction(x, n: int, impedance_scale: float = 1.0):
    """Oscillator eigenfunction with a rescaled spatial width.

    ``psi(x) = s^(1/4) h_n(sqrt(s) x)`` where ``h_n`` is the orthonormal
    Hermite function and ``s`` the ratio of the qubit-dependent impedance to
    the bare one; ``x`` is in units of the bare zero-point length
    ``sqrt(hbar / Z_m)``. Evaluated in the log domain, so ``n`` up to 200 is
    safe.
    """
    if n < 0 or n > 200:
        raise ValidityError("wavefunction supports 0 <= n <= 200")
    s = float(impedance_scale)
    if s <= 0:
        raise ValidityError("impedance_scale must be positive")
    x = np.asarray(x, dtype=float)
    logabs, sign = log_hermite_functions(n, math.sqrt(s) * x)
    return sign[n] * np.exp(logabs[n] + 0.25 * math.log(s))


def _fc_quadrature(m, n, scale_g, scale_e, nodes):
    c = 0.5 * (scale_g + scale_e)
    y, w = roots_hermite(nodes)
    x = y / math.sqrt(c)
    le, se = log_hermite_functions(m, math.sqrt(scale_e) * x)
    lg, sg = log_hermite_functions(n, math.sqrt(scale_g) * x)
    # psi_m psi_n = f(y) exp(-y^2); Gauss-Hermite wants f(y)
    logf = le[m] + lg[n] + y * y + 0.25 * math.log(scale_e * scale_g)
    vals = se[m] * sg[n] * np.exp(logf)
    return float(np.dot(w, vals) / math.sqrt(c))


def fc_overlap_numeric(m: int, n: int, scale_g: float, scale_e: float) -> float:
    """Franck-Condon overlap ``int psi(x, m, scale_e) psi(x, n, scale_g) dx``.

    Gauss-Hermite quadrature after rescaling ``x`` so that the joint
    Gaussian factor becomes ``exp(-y^2)``; the remaining integrand is a
    polynomial of degree ``m + n``, integrated exactly by
    ``(m + n)//2 + 8`` nodes.

    For the qubit-flip overlap ``<m|S(-2r)|n>`` use ``scale_e = exp(2r)``
    and ``scale_g = exp(-2r)``.

    Raises
    ------
    AccuracyError
        If a 16-node refinement changes the result by more than 1e-12.
    """
    if m < 0 or n < 0 or m > 100 or n > 100:
        raise ValidityError("fc_overlap_numeric supports 0 <= m, n <= 100")
    if scale_g <= 0 or scale_e <= 0:
        raise ValidityError("scales must be positive")
    nodes = (m + n) // 2 + 8
    v1 = _fc_quadrature(m, n, scale_g, scale_e, nodes)
    v2 = _fc_quadrature(m, n, scale_g, scale_e, nodes + 16)
    if abs(v1 - v2) > 1e-12:
        raise AccuracyError(f"Franck-Condon quadrature unconverged: {v1!r} vs {v2!r}")
    return v2


# --------------------------------------------------------------------------
# Distributions
# --------------------------------------------------------------------------

MASS_FLOOR = 0.999


def _check_mass(mass: float, what: str, n_max: int) -> None:
    if mass < MASS_FLOOR:
        raise TruncationError(
            f"{what}: only {mass:.5f} of the probability lies below n_max={n_max}"
        )


def thermal_distribution(n_th: float, n_max: int = DEFAULT_NMAX) -> PhononDistribution:
    """Bose-Einstein law ``n_th^n / (1 + n_th)^(n+1)``, renormalised."""
    if n_th < 0:
        raise ValidityError("n_th must be non-negative")
    if n_th == 0:
        return PhononDistribution.fock(0, n_max)
    q = n_th / (1.0 + n_th)
    n = np.arange(n_max + 1)
    p = (1.0 - q) * np.exp(n * math.log(q))
    _check_mass(p.sum(), "thermal_distribution", n_max)
    return PhononDistribution(p / p.sum())


DISPLACED_REL_TOL = 1e-12
DISPLACED_ABS_FLOOR = 1e-30


def _displaced_thermal_weights(n_th, x, n_max, m_max):
    """``P(n) = sum_m th(m) |<n|D|m>|^2`` for ``m <= m_max``, ``|alpha|^2 = x``."""
    kmax = max(n_max, m_max)
    lt, _ = log_laguerre_table(min(n_max, m_max), np.arange(kmax + 1), x)
    n = np.arange(n_max + 1)[:, None]
    m = np.arange(m_max + 1)[None, :]
    lo = np.minimum(n, m)
    dk = np.abs(n - m)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_x = math.log(x) if x > 0 else -np.inf
        powpart = np.where(dk == 0, 0.0, dk * log_x)
        logd2 = gammaln(lo + 1.0) - gammaln(lo + dk + 1.0) + powpart - x + 2.0 * lt[lo, dk]
    if n_th == 0:
        logth = np.where(m == 0, 0.0, -np.inf)
    else:
        q = n_th / (1.0 + n_th)
        logth = math.log1p(-q) + m * math.log(q)
    return np.exp(logd2 + logth).sum(axis=1)


def displaced_thermal_distribution(n_th: float, n_disp: float, n_max: int = DEFAULT_NMAX) -> PhononDistribution:
    """Number statistics of a thermal state displaced by ``n_disp`` quanta.

    ``P(n) = sum_m th(m) |<n|D(alpha)|m>|^2`` with ``|alpha|^2 = n_disp``
    and the displacement elements in associated-Laguerre form. The sum over
    ``m`` stops at the first ``M`` whose geometric tail bound
    ``q^(M+1)`` (``q = n_th/(1+n_th)``, valid since ``|D|^2 <= 1``) is below
    ``1e-12`` of every accumulated ``P(n)``, or below ``1e-30`` absolutely.
    """
    if n_th < 0 or n_disp < 0:
        raise ValidityError("n_th and n_disp must be non-negative")
    if n_th == 0:
        m_max = 0
    else:
        q = n_th / (1.0 + n_th)
        m_max = max(n_max, math.ceil(math.log(DISPLACED_ABS_FLOOR) / math.log(q)))
    while True:
        p = _displaced_thermal_weights(n_th, float(n_disp), n_max, m_max)
        if n_th == 0:
            break
        tail = q ** (m_max + 1)
        if np.all(tail < np.maximum(DISPLACED_REL_TOL * p, DISPLACED_ABS_FLOOR)):
            break
        m_max *= 2
    _check_mass(p.sum(), "displaced_thermal_distribution", n_max)
    return PhononDistribution(p / p.sum())


def poisson_distribution(mean: float, n_max: int = DEFAULT_NMAX) -> PhononDistribution:
    """Coherent-state number law; equals ``displaced_thermal(0, mean)``."""
    if mean <= 0:
        return PhononDistribution.fock(0, n_max)
    n = np.arange(n_max + 1)
    p = np.exp(n * math.log(mean) - mean - gammaln(n + 1.0))
    _check_mass(p.sum(), "poisson_distribution", n_max)
    return PhononDistribution(p / p.sum())


def gaussian_number_distribution(mean: float, fano: float, n_max: int = DEFAULT_NMAX) -> PhononDistribution:
    """Discretised Gaussian over ``n >= 0`` with variance ``fano * mean``.

    When the standard deviation is below 1e-3 phonons the result collapses
    to the single Fock bin ``round(mean)``.
    """
    if mean <= 0 or fano <= 0:
        raise ValidityError("mean and fano must be positive")
    sigma = math.sqrt(fano * mean)
    if sigma < 1e-3:
        return PhononDistribution.fock(int(round(mean)), n_max)
    n = np.arange(n_max + 1)
    w = np.exp(-0.5 * ((n - mean) / sigma) ** 2)
    total_mass = 0.5 * math.erfc(-(n_max + 0.5 - mean) / (sigma * math.sqrt(2)))
    _check_mass(total_mass, "gaussian_number_distribution", n_max)
    return PhononDistribution.from_weights(w)


def moments(dist) -> tuple[float, float, float]:
    """Return ``(mean, variance, fano)`` of a distribution.

    Accepts a :class:`PhononDistribution` or a plain probability vector.
    """
    p = dist.probs if isinstance(dist, PhononDistribution) else np.asarray(dist, dtype=float)
    n = np.arange(p.size)
    mean = float(np.dot(n, p))
    var = float(np.dot((n - mean) ** 2, p))
    if mean <= 0:
        raise ValidityError("Fano factor undefined for zero mean")
    return mean, var, var / mean


# --------------------------------------------------------------------------
# Wigner function
# --------------------------------------------------------------------------


def _radial_wigner(probs: np.ndarray, rho2: np.ndarray) -> np.ndarray:
    n_top = int(np.nonzero(probs)[0].max())
    lt, st = log_laguerre_table(n_top, 0.0, 2.0 * rho2)
    parity = np.where(np.arange(n_top + 1) % 2 == 0, 1.0, -1.0)
    terms = (probs[: n_top + 1] * parity)[:, None] * st * np.exp(lt - rho2[None, :])
    return terms.sum(axis=0) / math.pi


def wigner_from_diagonal(dist: PhononDistribution, x_axis=None, p_axis=None, *, check: bool = True) -> WignerGrid:
    """Wigner function of ``sum_n P(n) |n><n|``.

    ``W(x, p) = sum_n P(n) (-1)^n / pi * exp(-rho^2) L_n(2 rho^2)`` with
    ``rho^2 = x^2 + p^2``. Since ``W`` is radially symmetric it is evaluated
    once per distinct radius. Default axes span the support with a step that
    resolves the outermost fringes.

    Raises
    ------
    ValidityError
        If more than 1e-6 of the mass sits within 10 levels of ``n_max``.
    AccuracyError
        If ``check`` and the trapezoidal integral deviates from 1 by > 1e-3.
    """
    probs = np.asarray(dist.probs, dtype=float)
    n_max = probs.size - 1
    if probs[max(0, n_max - 10):].sum() > 1e-6:
        raise ValidityError("distribution must be supported below n_max - 10")
    if x_axis is None or p_axis is None:
        cdf = np.cumsum(probs)
        n_hi = int(np.searchsorted(cdf, 1.0 - 1e-12))
        extent = math.sqrt(2.0 * n_hi + 1.0) + 6.0
        step = min(0.1, 0.5 / math.sqrt(2.0 * n_hi + 1.0))
        npts = 2 * math.ceil(extent / step) + 1
        axis = np.linspace(-extent, extent, npts)
        x_axis = axis if x_axis is None else x_axis
        p_axis = axis if p_axis is None else p_axis
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    rho2 = p_axis[:, None] ** 2 + x_axis[None, :] ** 2
    uniq, inv = np.unique(rho2.ravel(), return_inverse=True)
    vals = _radial_wigner(probs, uniq)[inv].reshape(rho2.shape)
    integral = float(np.trapezoid(np.trapezoid(vals, x_axis, axis=1), p_axis))
    if check and abs(integral - 1.0) > 1e-3:
        raise AccuracyError(f"Wigner normalisation {integral:.6f} deviates from 1; refine or widen the grid")
    return WignerGrid(x_axis, p_axis, vals, integral)
