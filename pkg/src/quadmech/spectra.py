"""Forward model of qubit spectroscopy.

Frequencies of :class:`Spectrum` and :class:`PSFMap` are in MHz relative
to the bare qubit frequency ``params.omega_q_bare``. Spectral lines are
saturation Lorentzians of the intrinsic linewidth ``Gamma_2_star``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import rates
from .errors import FitError, GridError, ValidityError
from .fockspace import PhononDistribution
from .params import SystemParams

log = logging.getLogger(__name__)

SATURATION = 0.5
DEFAULT_L_MAX = 6
CHARGE_NODES = 351
CHARGE_SPAN = 7.0
CHARGE_METHOD = "trapezoid"


@dataclass(frozen=True)
class Spectrum:
    """Excitation probability ``pe`` sampled at increasing ``freqs`` (MHz)."""

    freqs: np.ndarray
    pe: np.ndarray

    def __post_init__(self):
        f = np.array(self.freqs, dtype=float)
        p = np.array(self.pe, dtype=float)
        if f.ndim != 1 or f.shape != p.shape:
            raise ValidityError("freqs and pe must be 1-d arrays of equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValidityError("freqs must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValidityError("pe contains non-finite values")
        if p.size and (p.min() < 0 or p.max() > SATURATION + 1e-9):
            raise ValidityError(
                f"pe outside [0, 0.5] (min {p.min():.3g}, max {p.max():.3g}); use Spectrum.from_measurement for noisy data"
            )
        f.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "pe", p)

    @classmethod
    def from_measurement(cls, freqs, pe) -> "Spectrum":
        """Build from noisy data, clipping into ``[0, 0.5]``."""
        raw = np.asarray(pe, dtype=float)
        clipped = np.clip(raw, 0.0, SATURATION)
        n_clip = int(np.count_nonzero(clipped != raw))
        if n_clip:
            log.info("clipped %d of %d points into [0, 0.5]", n_clip, raw.size)
        return cls(freqs, clipped)


@dataclass(frozen=True)
class PSFMap:
    """Per-Fock-state spectra: ``matrix[n]`` is ``P_e`` for ``|n>``.

    ``kind`` is ``"synthetic"``, ``"measured"`` or ``"identity"``; the
    saturation bound is enforced for the first two.
    """

    freqs: np.ndarray
    matrix: np.ndarray
    kind: str = "synthetic"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        f = np.array(self.freqs, dtype=float)
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != f.size:
            raise ValidityError(f"PSF matrix shape {m.shape} does not match {f.size} frequencies")
        if m.shape[0] < 2:
            raise ValidityError("PSF needs at least two Fock rows")
        if self.kind != "identity" and (m.min() < -1e-12 or m.max() > SATURATION + 1e-9):
            raise ValidityError("PSF entries must lie in [0, 0.5]")
        f.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "matrix", m)

    @property
    def n_max(self) -> int:
        return self.matrix.shape[0] - 1

    @classmethod
    def identity(cls, n_max: int) -> "PSFMap":
        """Identity kernel (frequency index = Fock index) for fixed-point tests."""
        return cls(np.arange(n_max + 1, dtype=float), np.eye(n_max + 1), kind="identity")

    def shifted(self, delta_mhz: float) -> "PSFMap":
        """Rigidly shift every row by ``delta_mhz`` (linear interpolation, zero fill)."""
        if delta_mhz == 0:
            return self
        src = self.freqs - delta_mhz
        rows = np.array([np.interp(src, self.freqs, row, left=0.0, right=0.0) for row in self.matrix])
        return PSFMap(self.freqs, rows, self.kind, dict(self.meta, shift_mhz=delta_mhz))

    def truncated(self, n_max: int) -> "PSFMap":
        return PSFMap(self.freqs, self.matrix[: n_max + 1], self.kind, dict(self.meta))

    def carrier_peaks(self, n_hi: Optional[int] = None) -> np.ndarray:
        """Frequency of the carrier peak of rows ``0..n_hi``.

        Row 0 uses its global maximum. Each later row uses the local maximum
        nearest to the previous row's carrier, so the track does not jump to
        a sideband that outgrows the carrier at large ``n``.
        """
        n_hi = self.n_max if n_hi is None else n_hi
        peaks = np.empty(n_hi + 1)
        idx = int(np.argmax(self.matrix[0]))
        peaks[0] = self.freqs[idx]
        for n in range(1, n_hi + 1):
            row = self.matrix[n]
            interior = (row[1:-1] >= row[:-2]) & (row[1:-1] >= row[2:])
            cand = np.nonzero(interior)[0] + 1
            if cand.size == 0:
                cand = np.array([int(np.argmax(row))])
            idx = int(cand[np.argmin(np.abs(cand - idx))])
            peaks[n] = self.freqs[idx]
        return peaks

    def peak_slope(self, n_hi: Optional[int] = None) -> float:
        """Linear-fit slope (MHz per phonon) of :meth:`carrier_peaks`."""
        peaks = self.carrier_peaks(n_hi)
        return float(np.polyfit(np.arange(peaks.size), peaks, 1)[0])


@dataclass(frozen=True)
class SkewedLorentzianParams:
    """One peak of a skewed-Lorentzian sum.

    Attributes
    ----------
    center : float
        Line centre in MHz.
    amplitude : float
        Reduced Rabi amplitude ``A`` (dimensionless).
    width : float
        Linewidth ``Gamma`` in MHz.
    skew : float
        Asymmetry ``L``; the detuning is divided by ``1 + L sgn(w - w_l)``.
    """

    center: float
    amplitude: float
    width: float
    skew: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValidityError("width must be positive")
        if abs(self.skew) >= 1:
            raise ValidityError("|skew| must be < 1")


def saturation_lorentzian(freqs, center, amplitude, width):
    """``(1/2) (A G/2)^2 / ((f - f0)^2 + (G/2)^2 (1 + A^2))``.

    The on-resonance height is ``A^2 / (2 (1 + A^2)) < 1/2``.
    """
    return _saturate(saturation_parameter(freqs, center, amplitude, width))


def saturation_parameter(freqs, center, amplitude, width):
    """Drive-to-decay ratio ``s = A^2 (G/2)^2 / ((f - f0)^2 + (G/2)^2)`` of one line.

    A single line gives ``P_e = s / (2 (1 + s))``. Several lines excite the
    qubit incoherently, so their ``s`` add before saturating; in the weak
    drive limit this is the plain sum of Lorentzians and it never exceeds
    ``1/2``.
    """
    hw2 = (0.5 * width) ** 2
    a2 = np.asarray(amplitude) ** 2
    return a2 * hw2 / ((np.asarray(freqs) - center) ** 2 + hw2)


def _saturate(s):
    return 0.5 * s / (1.0 + s)


def default_frequency_grid(params: SystemParams, mean_n: float = 0.0, n_points: int = 601) -> np.ndarray:
    """``n_points`` frequencies over ``[-3 w_m, +5 w_m]`` around the line of ``mean_n`` phonons."""
    center = params.chi * (1.0 + 2.0 * mean_n)
    return np.linspace(center - 3.0 * params.omega_m, center + 5.0 * params.omega_m, n_points)


def _probe_amplitude_scale(params: SystemParams, abs_freqs):
    g = params.Gamma_2_star
    return rates.probe_rabi_rate(params, abs_freqs) * math.sqrt(2.0 / (params.Gamma_1 * g))


def _offset_lines(params, delta_ng, n_x, orders):
    """Line centres (relative MHz) and sideband weights, broadcast over offsets."""
    delta_ng = np.asarray(delta_ng, dtype=float)
    base = rates.bare_frequency_at_offset(params, delta_ng) - params.E_J
    shift = rates.classical_stark_shift(params, delta_ng, n_x)
    weights = rates.classical_sideband_amplitudes(params, orders, delta_ng, n_x)
    centers = (base + shift)[None, ...] + orders.reshape((-1,) + (1,) * delta_ng.ndim) * params.omega_m
    return centers, weights


def _summed_lines(params, freqs, centers, weights):
    """Saturated sum of lines; ``centers``/``weights`` shaped (L, K)."""
    abs_f = params.omega_q_bare + freqs
    scale = _probe_amplitude_scale(params, abs_f)  # (F,)
    amp = weights[..., None] * scale  # (L, K, F)
    s = saturation_parameter(freqs, centers[..., None], amp, params.Gamma_2_star).sum(axis=0)
    return _saturate(s)


def _check_carrier(freqs, carrier):
    if not freqs[0] <= carrier <= freqs[-1]:
        raise GridError(f"carrier line at {carrier:.3f} MHz lies outside the grid [{freqs[0]:.3f}, {freqs[-1]:.3f}]")


def offset_spectrum(params: SystemParams, delta_ng: float, n_x: float, freqs, *, l_max: int = DEFAULT_L_MAX) -> Spectrum:
    """Spectrum at a fixed gate-charge offset under classical modulation ``n_x``.

    Sum over sideband orders ``|l| <= l_max`` of saturation Lorentzians at
    ``w_l = w_q^b(delta) + dw_x + l w_m`` with amplitudes
    ``A_l(w) = Omega_R(w) sqrt(2 / (Gamma_1 Gamma)) a_l``, where ``a_l`` are
    the Jacobi-Anger weights.

    Raises
    ------
    GridError
        If the carrier (``l = 0``) line falls outside the grid.
    """
    freqs = np.asarray(freqs, dtype=float)
    orders = np.arange(-l_max, l_max + 1)
    centers, weights = _offset_lines(params, np.array([delta_ng]), n_x, orders)
    _check_carrier(freqs, float(centers[l_max, 0]))
    pe = _summed_lines(params, freqs, centers, weights)[0]
    return Spectrum(freqs, pe)


def _charge_nodes(params, nodes, method="trapezoid"):
    """Offsets and weights for averaging over ``N(0, sigma_c^2)``.

    ``"trapezoid"`` uses ``nodes`` equally spaced offsets on
    ``[-CHARGE_SPAN, +CHARGE_SPAN]`` standard deviations; for a smooth
    Gaussian-weighted integrand this rule converges geometrically once the
    spacing resolves the sharpest feature. ``"gauss-hermite"`` uses the
    classical rule.
    """
    sigma = params.sigma_c
    if method == "gauss-hermite":
        y, w = np.polynomial.hermite.hermgauss(nodes)
        return math.sqrt(2.0) * sigma * y, w / math.sqrt(math.pi)
    if method != "trapezoid":
        raise ValidityError(f"unknown charge quadrature {method!r}")
    # the integrand is even in the offset (line centres depend on delta^2 and
    # sideband weights enter squared), so only the non-negative half is kept
    t = np.linspace(-CHARGE_SPAN, CHARGE_SPAN, nodes)
    w = np.exp(-0.5 * t * t)
    keep = t >= 0
    w = np.where(t > 0, 2.0 * w, w)[keep]
    return sigma * t[keep], w / w.sum()


def _charge_averaged_pe(params, n_x, freqs, l_max, nodes, method=CHARGE_METHOD):
    orders = np.arange(-l_max, l_max + 1)
    if params.sigma_c == 0:
        deltas, w = np.zeros(1), np.ones(1)
    else:
        deltas, w = _charge_nodes(params, nodes, method)
    centers, weights = _offset_lines(params, deltas, n_x, orders)
    per_node = _summed_lines(params, freqs, centers, weights)  # (K, F)
    return w @ per_node


def charge_averaged_spectrum(
    params: SystemParams,
    n_x: float,
    freqs,
    *,
    l_max: int = DEFAULT_L_MAX,
    nodes: int = CHARGE_NODES,
    method: str = CHARGE_METHOD,
) -> Spectrum:
    """Average of :func:`offset_spectrum` over ``delta_ng ~ N(0, sigma_c^2)``.

    The average is a trapezoid rule over ``nodes`` offsets spanning
    ``+/- 7 sigma_c`` (351 by default, converged to about 1e-10 at the
    default parameters). With ``sigma_c = 0`` the single offset
    ``delta_ng = 0`` is used.
    """
    freqs = np.asarray(freqs, dtype=float)
    _check_carrier(freqs, float(rates.classical_stark_shift(params, 0.0, n_x)))
    pe = _charge_averaged_pe(params, n_x, freqs, l_max, nodes, method)
    return Spectrum(freqs, pe)


def skewed_lorentzian_eval(params_list: Sequence[SkewedLorentzianParams], freqs) -> Spectrum:
    """Skewed saturation Lorentzians on ``freqs``, combined as in :func:`saturation_parameter`."""
    freqs = np.asarray(freqs, dtype=float)
    lines = [(p.center, p.amplitude, p.width, p.skew) for p in params_list]
    return Spectrum(freqs, _skewed_sum(freqs, lines))


def _skewed_sum(freqs, lines):
    s = np.zeros_like(freqs)
    for c, a, w, skew in lines:
        d = freqs - c
        s += saturation_parameter(d / (1.0 + skew * np.sign(d)), 0.0, a, w)
    return _saturate(s)


def _pack(init, shared_skew):
    x = []
    for p in init:
        x += [p.center, p.amplitude, math.log(p.width)]
        if not shared_skew:
            x.append(p.skew)
    if shared_skew:
        x.append(init[0].skew if init else 0.0)
    return np.array(x)


def _unpack(x, n_peaks, shared_skew):
    stride = 3 if shared_skew else 4
    out = []
    for i in range(n_peaks):
        c, a, lw = x[i * stride: i * stride + 3]
        skew = x[-1] if shared_skew else x[i * stride + 3]
        out.append((c, a, math.exp(lw), skew))
    return out


def fit_skewed_lorentzians(
    spectrum: Spectrum, init: Sequence[SkewedLorentzianParams], *, shared_skew: bool = True, max_nfev: int = 20000
) -> list[SkewedLorentzianParams]:
    """Least-squares fit of a skewed-Lorentzian sum.

    Initialisation is the caller's ``init`` list (one entry per peak); the
    width is fitted in log form to stay positive and the skew is bounded to
    ``(-0.99, 0.99)``. By default a single skew is shared by every peak.

    Raises
    ------
    FitError
        If the optimiser reports failure.
    """
    init = list(init)
    if not init:
        raise ValidityError("need at least one initial peak")
    x0 = _pack(init, shared_skew)
    lo = np.full(x0.size, -np.inf)
    hi = np.full(x0.size, np.inf)
    stride = 3 if shared_skew else 4
    skew_idx = [x0.size - 1] if shared_skew else [i * stride + 3 for i in range(len(init))]
    lo[skew_idx] = -0.99
    hi[skew_idx] = 0.99
    x0 = np.clip(x0, lo + 1e-9, hi - 1e-9)
    freqs, data = spectrum.freqs, spectrum.pe

    def model(x):
        return _skewed_sum(freqs, _unpack(x, len(init), shared_skew))

    res = least_squares(lambda x: model(x) - data, x0, bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
    rss = float(np.sum(res.fun**2))
    if not res.success:
        raise FitError(f"skewed Lorentzian fit failed: {res.message}", residual=rss)
    return [SkewedLorentzianParams(c, abs(a), w, s) for c, a, w, s in _unpack(res.x, len(init), shared_skew)]


def build_psf_map(
    params: SystemParams,
    n_max: int,
    freqs,
    *,
    l_max: int = DEFAULT_L_MAX,
    nodes: int = CHARGE_NODES,
    method: str = CHARGE_METHOD,
    threads: int = 1,
) -> PSFMap:
    """Synthetic point-spread map, one charge-averaged spectrum per Fock state.

    Row ``n`` is :func:`charge_averaged_spectrum` at the modulation amplitude
    :func:`~quadmech.rates.phonon_modulation_map` assigns to ``n`` phonons.
    Rows are independent and computed on up to ``threads`` workers.

    Raises
    ------
    GridError
        If the Stark-shifted carrier of the top row lies outside ``freqs``.
    """
    freqs = np.asarray(freqs, dtype=float)
    n_x = rates.phonon_modulation_map(params, np.arange(n_max + 1))
    _check_carrier(freqs, float(rates.classical_stark_shift(params, 0.0, n_x[0])))
    _check_carrier(freqs, float(rates.classical_stark_shift(params, 0.0, n_x[-1])))

    def row(k):
        return _charge_averaged_pe(params, float(n_x[k]), freqs, l_max, nodes, method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(n_max + 1)))
    else:
        rows = [row(k) for k in range(n_max + 1)]
    meta = {"l_max": l_max, "nodes": nodes, "method": method, "chi_mhz": params.chi}
    return PSFMap(freqs, np.array(rows), "synthetic", meta)


def dressed_spectrum(dist, psf: PSFMap) -> Spectrum:
    """``P_e(w) = sum_n P(n) P_e^{|n>}(w)``."""
    p = dist.probs if isinstance(dist, PhononDistribution) else np.asarray(dist, dtype=float)
    if p.size != psf.matrix.shape[0]:
        raise ValidityError(f"distribution has {p.size} levels but the PSF has {psf.matrix.shape[0]} rows")
    return Spectrum(psf.freqs, p @ psf.matrix)
