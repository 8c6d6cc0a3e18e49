"""Analytic frequency shifts and transition rates.

All inputs and outputs are ordinary frequencies in MHz (see
:mod:`quadmech.params`). Functions accept scalars or arrays for the phonon
index wherever that is natural.
"""

from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np

from . import fockspace
from .errors import ValidityError
from .params import DitherDriveParams, SystemParams
from .special import bessel_j, bessel_j_table

JACOBI_ANGER_CUTOFF = 40


# --------------------------------------------------------------------------
# Qubit dispersion and dispersive coupling
# --------------------------------------------------------------------------


def qubit_frequency(params: SystemParams, n_g):
    """Cooper-pair-box transition ``sqrt(E_J^2 + (4 E_c)^2 (1 - 2 n_g)^2)``."""
    n_g = np.asarray(n_g, dtype=float)
    return np.sqrt(params.E_J**2 + (4.0 * params.E_c) ** 2 * (1.0 - 2.0 * n_g) ** 2)


def bare_frequency_at_offset(params: SystemParams, delta_ng):
    """Bare qubit frequency at gate-charge offset ``delta_ng`` from degeneracy."""
    delta_ng = np.asarray(delta_ng, dtype=float)
    return np.sqrt(params.E_J**2 + (8.0 * params.E_c * delta_ng) ** 2)


def derive_chi(params: SystemParams) -> float:
    """Quadratic dispersive shift including the Bloch-Siegert term.

    ``chi_m = g_m^2 (1/(w_q - w_m) + 1/(w_q + w_m))`` with ``w_q`` the bare
    qubit frequency at degeneracy.
    """
    wq, wm = params.omega_q_bare, params.omega_m
    if wq <= wm:
        raise ValidityError("derive_chi requires omega_q_bare > omega_m")
    return params.g_m**2 * (1.0 / (wq - wm) + 1.0 / (wq + wm))


def stark_shifted_qubit_frequency(params: SystemParams, n):
    """Qubit line with ``n`` phonons: ``(w_q^b + chi) + 2 chi n`` (absolute MHz)."""
    n = np.asarray(n, dtype=float)
    chi = params.chi
    return params.omega_q_bare + chi + 2.0 * chi * n


def phonon_resolution(params: SystemParams) -> float:
    """Phonon-number sensitivity ``Gamma_2* / (2 chi)`` in phonons."""
    return params.Gamma_2_star / (2.0 * params.chi)


# --------------------------------------------------------------------------
# Quantum sideband amplitudes
# --------------------------------------------------------------------------


def residual_beta_from_offset(params: SystemParams, delta_ng):
    """Displacement ``beta = -g_m^z / w_m`` produced by a charge offset.

    The residual longitudinal coupling is ``g_m^z = g_m tan(theta_0)`` with
    ``tan(theta_0) = 8 E_c delta_ng / E_J`` (mixing angle measured from
    degeneracy).
    """
    g_z = params.g_m * 8.0 * params.E_c * np.asarray(delta_ng, dtype=float) / params.E_J
    return -g_z / params.omega_m


def _overlap_nmax(n_hi: int) -> int:
    return max(16, int(n_hi) + 40)


def quantum_sideband_amplitude(params: SystemParams, n, l: int, *, beta=None, n_max=None):
    """``|<n+l| D^dag(beta) S(-2r) D(-beta) |n>|`` with ``r = chi / (2 w_m)``.

    The Rabi rate of ``|g, n> <-> |e, n+l>`` is ``Omega_R`` times this value.
    ``beta`` defaults to ``params.beta``. Entries with ``n + l < 0`` are 0.
    """
    n = np.asarray(n, dtype=int)
    if np.any(n < 0):
        raise ValidityError("n must be non-negative")
    beta = params.beta if beta is None else float(beta)
    hi = int(np.max(n + abs(l))) if n.size else 0
    n_max = _overlap_nmax(hi) if n_max is None else n_max
    mat = fockspace.residual_overlap_matrix(params.r, beta, n_max).entries
    target = n + l
    ok = target >= 0
    out = np.zeros(n.shape)
    out[ok] = np.abs(mat[target[ok], n[ok]])
    return out if out.ndim else float(out)


def exact_sideband_ratio(n):
    """First-order (small ``r``) ratio of second red to second blue Rabi rates.

    ``sqrt(n (n - 1) / ((n + 1)(n + 2)))``.
    """
    n = np.asarray(n, dtype=float)
    return np.sqrt(n * (n - 1.0) / ((n + 1.0) * (n + 2.0)))


def charge_averaged_overlap_sq(params: SystemParams, m: int, n: int, *, nodes: int = 9, n_max=None) -> float:
    """``<|alpha^rsd_{mn}|^2>`` over Gaussian charge offsets of width ``sigma_c``.

    Each offset sets ``beta`` through :func:`residual_beta_from_offset`; the
    average uses Gauss-Hermite quadrature.
    """
    n_max = _overlap_nmax(max(m, n)) if n_max is None else n_max
    if params.sigma_c == 0:
        return float(fockspace.residual_overlap_matrix(params.r, params.beta, n_max)[m, n] ** 2)
    y, w = np.polynomial.hermite.hermgauss(nodes)
    deltas = math.sqrt(2.0) * params.sigma_c * y
    vals = [
        fockspace.residual_overlap_matrix(params.r, float(b), n_max)[m, n] ** 2
        for b in residual_beta_from_offset(params, deltas)
    ]
    return float(np.dot(w, vals) / math.sqrt(math.pi))


# --------------------------------------------------------------------------
# Classical gate-charge modulation
# --------------------------------------------------------------------------


def classical_stark_shift(params: SystemParams, delta_ng, n_x):
    """Drive-induced mean qubit shift ``(4 E_c E_J)^2 n_x^2 / w_q^b(delta_ng)^3``."""
    wb = bare_frequency_at_offset(params, delta_ng)
    return (4.0 * params.E_c * params.E_J) ** 2 * np.asarray(n_x, dtype=float) ** 2 / wb**3


def _modulation_arguments(params, delta_ng, n_x):
    wb = bare_frequency_at_offset(params, delta_ng)
    u = classical_stark_shift(params, delta_ng, n_x) / (2.0 * params.omega_m)
    v = (8.0 * params.E_c) ** 2 * np.asarray(n_x, dtype=float) * np.asarray(delta_ng, dtype=float) / (
        params.omega_m * wb
    )
    return u, v


def _signed_table(table: np.ndarray, cutoff: int) -> np.ndarray:
    """Extend ``J_k, k = 0..K`` to ``k = -K..K`` (index ``k + K``)."""
    neg = table[:0:-1] * np.where(np.arange(cutoff, 0, -1) % 2 == 1, -1.0, 1.0).reshape(
        (-1,) + (1,) * (table.ndim - 1)
    )
    return np.concatenate([neg, table], axis=0)


def classical_sideband_amplitudes(params: SystemParams, orders, delta_ng, n_x, *, cutoff: int = JACOBI_ANGER_CUTOFF):
    """Jacobi-Anger weights ``sum_{2a+b=l} J_a(u) J_b(v)`` for several orders.

    ``u = dw_x / (2 w_m)`` with ``dw_x`` the classical Stark shift and
    ``v = (8 E_c)^2 n_x delta_ng / (w_m w_q^b)``. The double sum keeps
    ``|a|, |b| <= cutoff``; for the arguments in play (well below 10) the
    neglected terms are below ``J_40(10) ~ 1e-25``.

    Returns
    -------
    numpy.ndarray
        Shape ``(len(orders),) + broadcast(delta_ng, n_x).shape``.
    """
    orders = np.atleast_1d(np.asarray(orders, dtype=int))
    if np.any(np.abs(orders) > 2 * cutoff):
        raise ValidityError(f"|l| must be <= {2 * cutoff}")
    u, v = _modulation_arguments(params, delta_ng, n_x)
    u, v = np.broadcast_arrays(u, v)
    ju = _signed_table(bessel_j_table(cutoff, u), cutoff)
    jv = _signed_table(bessel_j_table(cutoff, v), cutoff)
    out = np.zeros((orders.size,) + u.shape)
    for i, l in enumerate(orders):
        for a in range(-cutoff, cutoff + 1):
            b = l - 2 * a
            if abs(b) <= cutoff:
                out[i] += ju[a + cutoff] * jv[b + cutoff]
    return out


def classical_sideband_amplitude(params: SystemParams, l: int, delta_ng, n_x):
    """Single-order version of :func:`classical_sideband_amplitudes`."""
    out = classical_sideband_amplitudes(params, [l], delta_ng, n_x)[0]
    return out if out.ndim else float(out)


def phonon_modulation_map(params: SystemParams, n):
    """Classical modulation amplitude with the Stark shift of ``n`` phonons.

    Solves ``n + 1/2 = (4 E_c)^2 n_x^2 / (2 chi E_J)`` for ``n_x >= 0``.
    """
    n = np.asarray(n, dtype=float)
    if np.any(n < -0.5):
        raise ValidityError("n must be >= -1/2")
    out = np.sqrt(2.0 * params.chi * params.E_J * (n + 0.5)) / (4.0 * params.E_c)
    return out if out.ndim else float(out)


def phonon_modulation_inverse(params: SystemParams, n_x):
    """Inverse of :func:`phonon_modulation_map`."""
    n_x = np.asarray(n_x, dtype=float)
    out = (4.0 * params.E_c) ** 2 * n_x**2 / (2.0 * params.chi * params.E_J) - 0.5
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# ac-dither sidebands and reduced rates
# --------------------------------------------------------------------------


def dither_bessel_factor(params: SystemParams) -> float:
    """``J_1(8 E_c n_dither / E_J)``."""
    return float(bessel_j(1, 8.0 * params.E_c * params.n_dither / params.E_J))


def dither_sideband_rate(params: SystemParams, drive: DitherDriveParams) -> float:
    """Bare dither-activated sideband rate ``Omega_SB0`` (magnitude, MHz).

    ``g_m Omega_R / (2 (w_d - w_q)) J_1(8 E_c n_dither / E_J)`` with ``w_q``
    the Stark-shifted qubit line at ``drive.n_center``.

    Raises
    ------
    ValidityError
        If the drive sits within ``Gamma_2*`` of the qubit line.
    """
    wq = float(stark_shifted_qubit_frequency(params, drive.n_center))
    detuning = drive.omega_d - wq
    if abs(detuning) < params.Gamma_2_star:
        raise ValidityError(f"drive detuning {detuning:.3g} MHz is within Gamma_2* of the qubit")
    return abs(params.g_m * drive.Omega_R / (2.0 * detuning) * dither_bessel_factor(params))


def dither_rabi_for_sideband_rate(params: SystemParams, omega_sb0: float, detuning: float) -> float:
    """Invert :func:`dither_sideband_rate`: bare ``Omega_R`` giving ``omega_sb0``."""
    return abs(2.0 * detuning * omega_sb0 / (params.g_m * dither_bessel_factor(params)))


def dither_sideband_frequencies(params: SystemParams, n) -> dict:
    """First-order dither sideband lines for the ``n``-phonon qubit line.

    Returns a dict with keys ``blue_upper``, ``blue_lower``, ``red_upper``,
    ``red_lower`` (absolute MHz): ``w_q^n +/- w_m +/- w_dither``.
    """
    wq = stark_shifted_qubit_frequency(params, n)
    wm, wd = params.omega_m, params.omega_dither
    return {
        "blue_upper": wq + wm + wd,
        "blue_lower": wq + wm - wd,
        "red_upper": wq - wm + wd,
        "red_lower": wq - wm - wd,
    }


def _lorentz_phonon(params, n, center):
    g2 = params.Gamma_2_star
    if g2 <= 0:
        raise ValidityError("Gamma_2_star must be positive")
    return 1.0 / (1.0 + (4.0 * params.chi * (n - center) / g2) ** 2)


def reduced_blue_rate(params: SystemParams, n, n_B, Omega_B0):
    """Incoherent rate of ``|g,n> <-> |e,n+1>`` for a blue drive centred at ``n_B``.

    ``4 (n+1) Omega_B0^2 / Gamma_2* / (1 + (4 chi (n - n_B) / Gamma_2*)^2)``.
    """
    n = np.asarray(n, dtype=float)
    lor = _lorentz_phonon(params, n, n_B)
    return 4.0 * (n + 1.0) * Omega_B0**2 / params.Gamma_2_star * lor


def reduced_red_rate(params: SystemParams, n, n_R, Omega_R0):
    """Incoherent rate of ``|g,n> <-> |e,n-1>``; prefactor ``4 n`` instead of ``4(n+1)``."""
    n = np.asarray(n, dtype=float)
    lor = _lorentz_phonon(params, n, n_R)
    return 4.0 * n * Omega_R0**2 / params.Gamma_2_star * lor


def probe_rabi_rate(params: SystemParams, omega):
    """Cavity-filtered Rabi rate ``2 g_c eps / (w - w_c)`` at absolute frequency ``w``."""
    return 2.0 * params.g_c * params.drive_epsilon / (np.asarray(omega, dtype=float) - params.omega_c)


def reduced_order_l_rate(
    params: SystemParams,
    n,
    l: int,
    omega_d: float,
    Omega_R_of_omega: Union[float, Callable[[float], float]],
    *,
    overlaps=None,
):
    """Off-resonant rate of ``|g,n> <-> |e,n+l>`` under a drive at ``omega_d``.

    ``4 Omega_R(w_d)^2 |alpha^rsd_{n+l,n}|^2 / Gamma_2*`` times a Lorentzian
    of half-width ``Gamma_2*/2`` centred on ``w_l(n) = w_q^n + l w_m``.

    Parameters
    ----------
    Omega_R_of_omega : float or callable
        Bare Rabi rate, or a function of the drive frequency returning it.
    overlaps : array_like, optional
        Precomputed overlap matrix; defaults to the residual overlaps of
        ``params``.
    """
    n = np.asarray(n, dtype=int)
    omega_R = Omega_R_of_omega(omega_d) if callable(Omega_R_of_omega) else Omega_R_of_omega
    target = n + l
    out = np.zeros(n.shape)
    ok = target >= 0
    if overlaps is None:
        hi = int(np.max(np.where(ok, target, 0))) if n.size else 0
        hi = max(hi, int(np.max(n)) if n.size else 0)
        overlaps = fockspace.residual_overlap_matrix(params.r, params.beta, _overlap_nmax(hi)).entries
    overlaps = np.asarray(overlaps)
    alpha2 = np.abs(overlaps[target[ok], n[ok]]) ** 2
    w_l = stark_shifted_qubit_frequency(params, n[ok]) + l * params.omega_m
    g2 = params.Gamma_2_star
    out[ok] = 4.0 * omega_R**2 * alpha2 / g2 / (1.0 + ((omega_d - w_l) / (g2 / 2.0)) ** 2)
    return out if out.ndim else float(out)
