"""Inverse problem and statistics.

Richardson-Lucy deconvolution of a qubit spectrum against a PSF map, small
parametric fits (thermal, displaced thermal, staged protocol fits against a
simulated lookup table), a signal-dependent noise model, bootstrap
confidence intervals and the simulated-experiment Monte Carlo that bounds
the true Fano factor of a reconstructed state.

Random numbers always come from :class:`numpy.random.SeedSequence` children
keyed by task index, so results do not depend on execution order or on the
number of worker threads.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from . import dynamics, fockspace, kernels
from .errors import (
    ConvergenceWarning,
    FitError,
    GridError,
    PrecisionWarning,
    StatisticsError,
    TruncationError,
    ValidityError,
)
from .fockspace import PhononDistribution
from .params import SystemParams
from .spectra import PSFMap, Spectrum

log = logging.getLogger(__name__)

RL_ITERATIONS = 3000
RL_TOL = 1e-12
RL_FLOOR = 1e-12
FANO_BIN = 0.01
MIN_NOISE_TRACES = 30
MIN_RESAMPLES = 100

PsfSource = Union[PSFMap, Callable[[SystemParams], PSFMap]]


# --------------------------------------------------------------------------
# Result types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares fit.

    ``parameters`` maps names to values, ``units`` names to unit strings.
    """

    parameters: dict
    units: dict
    residual: float
    converged: bool
    iterations: int
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.residual >= 0:
            raise ValidityError("residual must be non-negative")

    def __getitem__(self, name):
        return self.parameters[name]

    def to_dict(self) -> dict:
        return {
            "parameters": dict(self.parameters),
            "units": dict(self.units),
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    level: float
    resamples: int

    def __post_init__(self):
        if not self.lower <= self.point <= self.upper:
            raise ValidityError("bootstrap interval must bracket the point estimate")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return dict(point=self.point, lower=self.lower, upper=self.upper, level=self.level, resamples=self.resamples)


@dataclass(frozen=True)
class NoiseModel:
    """Per-trace measurement noise ``sigma(s) = c0 + c1 s + c2 s^2``."""

    c0: float
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        lo = self.minimum()
        if not lo > 0:
            raise ValidityError(f"noise model is not positive on [0, 0.5] (minimum {lo:.3g})")

    @property
    def poly_coeffs(self) -> tuple:
        return (self.c0, self.c1, self.c2)

    def minimum(self, lo: float = 0.0, hi: float = 0.5) -> float:
        pts = [lo, hi]
        if self.c2 != 0:
            vertex = -self.c1 / (2 * self.c2)
            if lo < vertex < hi:
                pts.append(vertex)
        return float(min(self.sigma(np.array(pts))))

    def sigma(self, signal):
        s = np.asarray(signal, dtype=float)
        return self.c0 + self.c1 * s + self.c2 * s * s

    def averaged_sigma(self, signal, n_averages: int):
        """Standard deviation of the mean of ``n_averages`` traces."""
        return self.sigma(signal) / math.sqrt(n_averages)


#: Per-trace noise used when no measured traces are available: 1e-3 at
#: zero signal, rising by 0.05 per unit of excited-state probability.
DEFAULT_NOISE = NoiseModel(1e-3, 0.05, 0.0)


# --------------------------------------------------------------------------
# Richardson-Lucy
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RLReport:
    distribution: PhononDistribution
    loglik: np.ndarray
    decreases: int
    iterations: int

    @property
    def converged(self) -> bool:
        return self.iterations < self.loglik.size or self.decreases == 0


def _spectrum_data(spectrum, psf: PSFMap) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        if spectrum.freqs.shape != psf.freqs.shape or not np.allclose(spectrum.freqs, psf.freqs, rtol=0, atol=1e-9):
            raise GridError("spectrum frequencies do not match the PSF columns")
        data = spectrum.pe
    else:
        data = np.asarray(spectrum, dtype=float)
        if data.shape != psf.freqs.shape:
            raise GridError(f"data has {data.size} points but the PSF has {psf.freqs.size} columns")
    if np.any(data < 0):
        raise ValidityError("spectrum must be non-negative")
    return np.asarray(data, dtype=float)


def richardson_lucy_report(
    spectrum,
    psf: PSFMap,
    iterations: int = RL_ITERATIONS,
    *,
    tol: float = RL_TOL,
    floor: float = RL_FLOOR,
    backend=None,
) -> RLReport:
    """Richardson-Lucy deconvolution with its likelihood history.

    The kernel is the PSF matrix (rows: Fock states, columns: frequencies).
    Each update is ``P <- P * (K (d / P K)) / (K 1)``; predictions are
    floored at ``floor``. The Poisson log-likelihood ``sum d log m - m`` is
    recorded after every update, and iteration stops after ``iterations``
    updates or once its gain falls below ``tol`` relative.

    A warning is issued if the likelihood ever decreased.
    """
    data = _spectrum_data(spectrum, psf)
    if iterations < 0:
        raise ValidityError("iterations must be non-negative")
    if data.sum() <= 0:
        raise ValidityError("spectrum carries no signal to deconvolve")
    kern = kernels.backend if backend is None else backend
    p, hist, decreases = kern.richardson_lucy(psf.matrix, data, int(iterations), float(floor), float(tol))
    if decreases:
        warnings.warn(f"Richardson-Lucy likelihood decreased {decreases} times", ConvergenceWarning, stacklevel=2)
    dist = PhononDistribution.from_weights(np.maximum(p, 0.0))
    return RLReport(dist, np.asarray(hist), int(decreases), len(hist) - 1)


def richardson_lucy(spectrum, psf: PSFMap, iterations: int = RL_ITERATIONS, **kw) -> PhononDistribution:
    """Deconvolve ``spectrum`` with ``psf``; returns the normalised distribution.

    See :func:`richardson_lucy_report` for the keyword options.
    """
    return richardson_lucy_report(spectrum, psf, iterations, **kw).distribution


# --------------------------------------------------------------------------
# Parametric fits
# --------------------------------------------------------------------------


def _resolve_psf(psf_builder: PsfSource, params: SystemParams) -> PSFMap:
    return psf_builder(params) if callable(psf_builder) else psf_builder


def _shift_rows(freqs, rows, delta):
    """Rigidly shift spectra (last axis) by ``delta`` MHz, zero fill."""
    if delta == 0:
        return rows
    src = freqs - delta
    return np.interp(src, freqs, rows, left=0.0, right=0.0)


def _multistart(objective, starts, bounds, *, xatol=1e-7, fatol=1e-16, maxiter=2000):
    best, total_iter, ok = None, 0, False
    for x0 in starts:
        res = minimize(objective, np.asarray(x0, dtype=float), method="Nelder-Mead", bounds=bounds,
                       options=dict(xatol=xatol, fatol=fatol, maxiter=maxiter, maxfev=4 * maxiter))
        total_iter += int(res.nit)
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
        ok = ok or bool(res.success)
    if best is None:
        raise FitError("every optimiser start failed")
    return best, total_iter, bool(best.success)


def _max_thermal(n_max: int) -> float:
    """Largest ``n_th`` whose thermal tail beyond ``n_max`` holds < 1e-3."""
    q = 1e-3 ** (1.0 / (n_max + 1))
    return q / (1.0 - q)


def _thermal_probs(n_th, n_max):
    n_th = max(float(n_th), 0.0)
    if n_th == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    q = n_th / (n_th + 1.0)
    p = q ** np.arange(n_max + 1)
    return p / p.sum()


def fit_thermal(
    spectrum: Spectrum,
    psf_builder: PsfSource,
    params: SystemParams,
    *,
    n_th_bounds=(0.0, 40.0),
    shift_window: float = 5.0,
    fit_shift: bool = True,
) -> FitResult:
    """Least-squares thermal fit over ``(n_th, omega_q_bare)``.

    The bare qubit frequency enters as a rigid shift of the PSF by at most
    ``shift_window`` MHz; shifting the dressed spectrum is equivalent and
    much cheaper, so the PSF is built once.

    Returns parameters ``n_th``, ``shift`` (MHz) and ``omega_q_bare`` (MHz).
    """
    psf = _resolve_psf(psf_builder, params)
    data = _spectrum_data(spectrum, psf)
    hi = min(n_th_bounds[1], _max_thermal(psf.n_max))
    lo = n_th_bounds[0]
    if hi <= lo:
        raise ValidityError(f"PSF with n_max={psf.n_max} cannot represent thermal states above n_th={hi:.2f}")
    k = psf.matrix
    freqs = psf.freqs

    def objective(x):
        n_th = x[0]
        delta = x[1] if fit_shift else 0.0
        model = _shift_rows(freqs, _thermal_probs(n_th, psf.n_max) @ k, delta)
        return float(np.sum((model - data) ** 2))

    span = hi - lo
    starts = [[lo + f * span, 0.0] for f in (0.15, 0.45, 0.8)]
    bounds = [(lo, hi), (-shift_window, shift_window) if fit_shift else (0.0, 0.0)]
    best, nit, ok = _multistart(objective, starts, bounds)
    n_th, delta = float(best.x[0]), float(best.x[1]) if fit_shift else 0.0
    if not ok:
        warnings.warn("thermal fit did not meet the optimiser tolerance", ConvergenceWarning, stacklevel=2)
    return FitResult(
        {"n_th": n_th, "shift": delta, "omega_q_bare": params.omega_q_bare + delta},
        {"n_th": "phonons", "shift": "MHz", "omega_q_bare": "MHz"},
        float(best.fun), ok, nit,
    )


def fit_displaced_thermal(
    spectrum: Spectrum,
    psf_builder: PsfSource,
    params: SystemParams,
    n_th: float,
    *,
    n_disp_bounds=(0.0, 100.0),
    shift: float = 0.0,
) -> FitResult:
    """One-parameter least-squares fit of ``n_disp`` at fixed ``n_th`` and shift."""
    psf = _resolve_psf(psf_builder, params)
    data = _spectrum_data(spectrum, psf)
    k = psf.matrix
    freqs = psf.freqs
    cache = {}

    def probs(n_disp):
        key = round(float(n_disp), 12)
        if key not in cache:
            try:
                cache[key] = fockspace.displaced_thermal_distribution(n_th, max(key, 0.0), psf.n_max).probs
            except TruncationError:
                cache[key] = None
        return cache[key]

    def objective(x):
        p = probs(x[0])
        if p is None:
            return 1e6 * (1.0 + x[0])
        model = _shift_rows(freqs, p @ k, shift)
        return float(np.sum((model - data) ** 2))

    lo, hi = n_disp_bounds
    starts = [[lo + f * (hi - lo)] for f in (0.1, 0.4, 0.75)]
    best, nit, ok = _multistart(objective, starts, [(lo, hi)])
    if not ok:
        warnings.warn("displaced-thermal fit did not meet the optimiser tolerance", ConvergenceWarning, stacklevel=2)
    return FitResult(
        {"n_disp": float(best.x[0]), "n_th": float(n_th)},
        {"n_disp": "phonons", "n_th": "phonons"},
        float(best.fun), ok, nit,
    )


def linear_fit(x, y) -> tuple[float, float]:
    """Ordinary least-squares ``y = slope x + intercept``."""
    slope, intercept = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(slope), float(intercept)


def fit_through_origin(x, y) -> float:
    """Least-squares slope of ``y = slope x``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return float(np.dot(x, y) / np.dot(x, x))


# --------------------------------------------------------------------------
# Protocol fits against a simulated lookup table
# --------------------------------------------------------------------------


def _grid_hash(x):
    return tuple(np.round(np.asarray(x, dtype=float), 12).tolist())


@dataclass
class ProtocolLookup:
    """Lazily simulated phonon distributions for the staged protocol fits.

    Stage A tabulates blue-chirp runs over ``Omega_B0_grid x n_B0_grid``.
    Stage B tabulates runs with the red drive added over ``Omega_R0_grid``
    at fixed blue parameters and red centre. Each run reports the
    distributions after every chirp time in ``taus`` (ms).
    """

    params: SystemParams
    decay: dynamics.DecayChannel
    taus: Sequence[float]
    Omega_B0_grid: Sequence[float]
    n_B0_grid: Sequence[float]
    Omega_R0_grid: Sequence[float] = ()
    chirp_rate: float = 38.5
    n_th_red: Optional[float] = None
    threads: int = 1
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def duration(self) -> float:
        return float(np.max(self.taus))

    def _initial(self, n_th):
        return dynamics.MasterState.ground(fockspace.thermal_distribution(n_th, self.decay.n_max))

    def _run(self, key, Omega_B0, n_B0, Omega_R0=0.0, n_R=0.0):
        if key not in self._cache:
            proto = dynamics.chirp_protocol(Omega_B0, self.chirp_rate, n_B0, self.duration, Omega_R0=Omega_R0, n_R=n_R)
            n_th = self.params.n_th if Omega_R0 == 0 or self.n_th_red is None else self.n_th_red
            params = self.params.replace(n_th=n_th)
            decay = dynamics.DecayChannel(self.decay.Gamma_1, self.decay.gamma_m, n_th, self.decay.r, self.decay.overlaps)
            self._cache[key] = dynamics.distributions_at(params, proto, decay, self.taus, self._initial(n_th))
        return self._cache[key]

    def _map(self, fn, items):
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def blue_table(self) -> np.ndarray:
        """Shape ``(n_Omega_B0, n_n_B0, n_tau, n_max + 1)``."""
        cells = [(a, b) for a in self.Omega_B0_grid for b in self.n_B0_grid]
        rows = self._map(lambda c: self._run(("blue", c[0], c[1]), c[0], c[1]), cells)
        return np.array(rows).reshape(len(self.Omega_B0_grid), len(self.n_B0_grid), len(self.taus), -1)

    def red_table(self, Omega_B0: float, n_B0: float, n_R: float) -> np.ndarray:
        """Shape ``(n_Omega_R0, n_tau, n_max + 1)``."""
        rows = self._map(
            lambda om: self._run(("red", Omega_B0, n_B0, om, n_R), Omega_B0, n_B0, om, n_R), list(self.Omega_R0_grid)
        )
        return np.array(rows)


def _sse_table(table, spectra, psf):
    data = np.array([_spectrum_data(s, psf) for s in spectra])
    model = table @ psf.matrix
    return np.sum((model - data) ** 2, axis=(-1, -2))


def _check_interior_best(idx, shape, names):
    for i, n, name in zip(idx, shape, names):
        if n > 1 and i in (0, n - 1):
            raise GridError(f"best {name} lies on the grid boundary; widen the lookup grid")


def joint_fit_protocol(
    blue_spectra: Sequence[Spectrum],
    red_spectra: Sequence[Spectrum],
    lookup: ProtocolLookup,
    psf: PSFMap,
    *,
    detuning: Optional[float] = None,
    n_R: Optional[float] = None,
) -> tuple[FitResult, Optional[FitResult]]:
    """Staged joint fits of chirp protocols against a lookup table.

    Stage A fits ``(Omega_B0, n_B0)`` jointly over blue-only spectra, one per
    chirp time in ``lookup.taus``. Stage B keeps those fixed, takes the red
    centre from the blue-red drive ``detuning`` (MHz) via
    :func:`~quadmech.dynamics.n_R_from_detuning` (or uses ``n_R``
    directly), and fits ``Omega_R0`` over the red spectra. Pass an empty
    ``red_spectra`` to skip stage B.

    Raises
    ------
    GridError
        If a best-fit value sits on the edge of its grid.
    """
    if len(blue_spectra) != len(lookup.taus):
        raise ValidityError("need one blue spectrum per lookup time")
    sse = _sse_table(lookup.blue_table(), blue_spectra, psf)
    ia, ib = np.unravel_index(int(np.argmin(sse)), sse.shape)
    _check_interior_best((ia, ib), sse.shape, ("Omega_B0", "n_B0"))
    om_b, n_b0 = float(lookup.Omega_B0_grid[ia]), float(lookup.n_B0_grid[ib])
    stage_a = FitResult(
        {"Omega_B0": om_b, "n_B0": n_b0},
        {"Omega_B0": "MHz", "n_B0": "phonons"},
        float(sse[ia, ib]), True, int(sse.size),
        {"sse": sse},
    )
    if not red_spectra:
        return stage_a, None
    if len(red_spectra) != len(lookup.taus):
        raise ValidityError("need one red spectrum per lookup time")
    if n_R is None:
        if detuning is None:
            raise ValidityError("stage B needs the blue-red detuning or n_R")
        n_R = dynamics.n_R_from_detuning(lookup.params, n_b0, detuning)
    sse_r = _sse_table(lookup.red_table(om_b, n_b0, n_R), red_spectra, psf)
    ir = int(np.argmin(sse_r))
    _check_interior_best((ir,), sse_r.shape, ("Omega_R0",))
    stage_b = FitResult(
        {"Omega_R0": float(lookup.Omega_R0_grid[ir]), "n_R": float(n_R)},
        {"Omega_R0": "MHz", "n_R": "phonons"},
        float(sse_r[ir]), True, int(sse_r.size),
        {"sse": sse_r},
    )
    return stage_a, stage_b


# --------------------------------------------------------------------------
# Noise model and bootstrap
# --------------------------------------------------------------------------


def fit_noise_model(traces) -> NoiseModel:
    """Regress per-frequency trace scatter on the per-frequency mean signal.

    ``traces`` has one repeated spectrum per row. The standard deviation at
    each frequency (``ddof=1``) is fitted with a quadratic polynomial in the
    mean signal.

    Raises
    ------
    StatisticsError
        With fewer than 30 traces, fewer than three distinct signal levels
        (including means whose spread is within four times their sampling
        variance),
        or a fit that is not positive on ``[0, 0.5]``.
    """
    t = np.asarray(traces, dtype=float)
    if t.ndim != 2:
        raise ValidityError("traces must be a 2-d array (repetitions x frequencies)")
    if t.shape[0] < MIN_NOISE_TRACES:
        raise StatisticsError(f"need at least {MIN_NOISE_TRACES} traces, got {t.shape[0]}")
    mean = t.mean(axis=0)
    std = t.std(axis=0, ddof=1)
    # signal levels are distinct only if the means spread by more than their
    # own sampling error would make them
    se2 = np.mean(std**2) / t.shape[0]
    if np.unique(np.round(mean, 12)).size < 3 or np.var(mean, ddof=1) < 4.0 * se2:
        raise StatisticsError("degenerate regression: fewer than three distinct signal levels")
    c2, c1, c0 = np.polyfit(mean, std, 2)
    try:
        return NoiseModel(float(c0), float(c1), float(c2))
    except ValidityError as exc:
        raise StatisticsError(f"fitted noise model is unusable: {exc}") from exc


def _child_rngs(seed, n, key=()):
    root = np.random.SeedSequence(seed)
    return [np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=tuple(key) + (i,))) for i in range(n)]


def bootstrap_ci(
    traces,
    estimator: Callable[[np.ndarray], float],
    resamples: int = 1000,
    level: float = 0.9,
    seed: Optional[int] = 0,
) -> BootstrapCI:
    """Percentile bootstrap over traces resampled with replacement.

    ``estimator`` receives the averaged spectrum of each resampled trace set.
    The point estimate uses the average of all traces; the interval is the
    ``(1 - level)/2`` and ``(1 + level)/2`` percentiles of the resampled
    estimates, widened if necessary to contain the point estimate.
    """
    t = np.asarray(traces, dtype=float)
    if t.ndim != 2 or t.shape[0] < 2:
        raise ValidityError("traces must be a 2-d array with at least two rows")
    if not 0 < level < 1:
        raise ValidityError("level must lie in (0, 1)")
    if resamples < MIN_RESAMPLES:
        warnings.warn(f"{resamples} resamples give an imprecise interval", PrecisionWarning, stacklevel=2)
    n = t.shape[0]
    point = float(estimator(t.mean(axis=0)))
    est = np.empty(resamples)
    for i, rng in enumerate(_child_rngs(seed, resamples)):
        est[i] = estimator(t[rng.integers(0, n, n)].mean(axis=0))
    lo, hi = np.quantile(est, [(1 - level) / 2, (1 + level) / 2])
    return BootstrapCI(point, float(min(lo, point)), float(max(hi, point)), level, resamples)


# --------------------------------------------------------------------------
# Fano-factor bound by simulated experiments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FanoBoundResult:
    """Monte-Carlo ``F_extract`` samples for each ``F_true``."""

    f_true: np.ndarray
    f_extract: np.ndarray  # shape (n_true, n_sims)
    mean: float
    n_averages: int
    seed: int
    bin_width: float = FANO_BIN

    @property
    def bin_edges(self) -> np.ndarray:
        lo = math.floor(np.nanmin(self.f_extract) / self.bin_width) * self.bin_width
        hi = math.ceil(np.nanmax(self.f_extract) / self.bin_width + 1e-9) * self.bin_width
        n = max(1, int(round((hi - lo) / self.bin_width)))
        return lo + self.bin_width * np.arange(n + 1)

    def histograms(self) -> np.ndarray:
        """Counts per ``F_true`` (rows) and ``F_extract`` bin (columns)."""
        edges = self.bin_edges
        return np.array([np.histogram(row[np.isfinite(row)], edges)[0] for row in self.f_extract])

    def window_counts(self, window) -> np.ndarray:
        a, b = window
        return np.sum((self.f_extract >= a) & (self.f_extract <= b), axis=1)

    def conditional_cdf(self, window) -> tuple[np.ndarray, np.ndarray]:
        """CDF of ``F_true`` over the simulations whose ``F_extract`` is in ``window``.

        Every ``F_true`` was simulated equally often, so this is the
        posterior under a flat prior on the grid.

        Raises
        ------
        StatisticsError
            If no simulation falls inside the window.
        """
        counts = self.window_counts(window)
        total = counts.sum()
        if total == 0:
            raise StatisticsError(f"no simulation produced F_extract in [{window[0]}, {window[1]}]")
        return self.f_true.copy(), np.cumsum(counts) / total

    def upper_bound(self, window, level: float = 0.95) -> float:
        """Smallest grid ``F_true`` at which the conditional CDF reaches ``level``."""
        f, cdf = self.conditional_cdf(window)
        return float(f[int(np.searchsorted(cdf, level - 1e-12))])

    def bias(self) -> np.ndarray:
        """Mean ``F_extract - F_true`` per grid value."""
        return np.nanmean(self.f_extract, axis=1) - self.f_true


def fano_of(dist) -> float:
    return fockspace.moments(dist)[2]


def fano_bound_mc(
    mean: float,
    f_true_grid: Sequence[float],
    noise: Optional[NoiseModel],
    psf: PSFMap,
    n_sims: int = 300,
    n_averages: int = 916,
    rl_iterations: int = RL_ITERATIONS,
    seed: int = 0,
    *,
    rl_tol: float = RL_TOL,
    threads: int = 1,
) -> FanoBoundResult:
    """Simulated experiments bounding the true Fano factor.

    For every ``F_true``: a discretised Gaussian with the given mean and
    Fano factor is forward-convolved with ``psf``; independent Gaussian
    noise with standard deviation ``sigma(clean) / sqrt(n_averages)`` is
    added per frequency (the average of ``n_averages`` noisy traces) and the
    result clipped to ``[0, 0.5]``; the spectrum is deconvolved by
    Richardson-Lucy and its Fano factor is taken from plain moments.

    ``noise=None`` runs the noiseless pipeline. Simulation ``(g, s)`` draws
    from its own seed-sequence child, so the output is independent of
    ``threads``.
    """
    f_grid = np.asarray(f_true_grid, dtype=float)
    if f_grid.ndim != 1 or f_grid.size == 0 or np.any(f_grid <= 0):
        raise ValidityError("f_true_grid must be a non-empty list of positive values")
    if n_sims < 1 or n_averages < 1:
        raise ValidityError("n_sims and n_averages must be positive")
    clean = np.array([fockspace.gaussian_number_distribution(mean, f, psf.n_max).probs @ psf.matrix for f in f_grid])
    root = np.random.SeedSequence(seed)

    def one(task):
        g, s = task
        d = clean[g]
        if noise is not None:
            rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(g, s)))
            d = np.clip(d + rng.normal(0.0, 1.0, d.size) * noise.averaged_sigma(d, n_averages), 0.0, 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            dist = richardson_lucy(d, psf, rl_iterations, tol=rl_tol)
        return fano_of(dist)

    tasks = [(g, s) for g in range(f_grid.size) for s in range(n_sims)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, tasks))
    else:
        vals = [one(t) for t in tasks]
    return FanoBoundResult(f_grid, np.array(vals).reshape(f_grid.size, n_sims), float(mean), int(n_averages), int(seed))
