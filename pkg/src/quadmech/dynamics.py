"""Rate-equation engine for sideband-driven phonon dynamics.

The joint populations ``pg[n]``, ``pe[n]`` evolve under

* sideband exchange channels ``|g,n> <-> |e,n+k>`` whose incoherent rates
  are Lorentzian in ``n`` around a (possibly chirped) centre,
* mechanical thermalisation at ``exp(+2r) gamma_m`` in the ground manifold
  and ``exp(-2r) gamma_m`` in the excited manifold,
* qubit decay that redistributes ``|e,m>`` over ``|g,n>`` with weights
  ``|alpha_mn|^2`` from the qubit-flip overlap matrix.

Rates in :class:`~quadmech.params.SystemParams` are ordinary frequencies in
MHz; they are converted once to angular rates per millisecond when the
:class:`RateProgram` is assembled, and time is in ms throughout.

Every channel is a pairwise exchange, so the generator conserves
probability exactly; the thermal chain is reflecting at ``n_max``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import fockspace, kernels, rates
from .errors import TruncationError, ValidityError
from .fockspace import PhononDistribution
from .params import SystemParams, rate_per_ms

log = logging.getLogger(__name__)

STEP_LIMIT = 0.1
AUTO_STEP = 0.08
BOUNDARY_ERROR = 0.01
BOUNDARY_WARN = 1e-4
CLIP_LOG = 1e-8
OVERLAP_FLOOR = 1e-18


# --------------------------------------------------------------------------
# State and protocol types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MasterState:
    """Joint populations at time ``t`` (ms)."""

    pg: np.ndarray
    pe: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pg = np.array(self.pg, dtype=float)
        pe = np.array(self.pe, dtype=float)
        if pg.shape != pe.shape or pg.ndim != 1 or pg.size < 2:
            raise ValidityError("pg and pe must be 1-d arrays of equal length >= 2")
        if min(pg.min(), pe.min()) < -1e-12:
            raise ValidityError("populations must be non-negative")
        total = pg.sum() + pe.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValidityError(f"populations sum to {total:.12f}, not 1")
        pg.setflags(write=False)
        pe.setflags(write=False)
        object.__setattr__(self, "pg", pg)
        object.__setattr__(self, "pe", pe)

    @classmethod
    def ground(cls, dist: PhononDistribution, t: float = 0.0) -> "MasterState":
        """Qubit in ``|g>`` with phonon distribution ``dist``."""
        return cls(dist.probs, np.zeros_like(dist.probs), t)

    @property
    def n_max(self) -> int:
        return self.pg.size - 1

    def phonon_distribution(self) -> PhononDistribution:
        """Trace out the qubit: ``P(n) = pg[n] + pe[n]``."""
        return PhononDistribution.from_weights(self.pg + self.pe)


@dataclass(frozen=True)
class ChirpSchedule:
    """Piecewise-linear centre ``n(t)`` in phonons; clamped outside the knots."""

    t_knots: tuple
    n_knots: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.t_knots)
        n = tuple(float(v) for v in self.n_knots)
        if len(t) != len(n) or not t:
            raise ValidityError("schedule needs matching, non-empty knot lists")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValidityError("schedule times must be strictly increasing")
        if any(b < a for a, b in zip(n, n[1:])):
            raise ValidityError("chirp schedule must be non-decreasing in time")
        object.__setattr__(self, "t_knots", t)
        object.__setattr__(self, "n_knots", n)

    @classmethod
    def constant(cls, n: float) -> "ChirpSchedule":
        return cls((0.0,), (n,))

    @classmethod
    def linear(cls, n0: float, rate_per_ms_: float, duration: float) -> "ChirpSchedule":
        """``n(t) = n0 + rate * t`` for ``0 <= t <= duration``."""
        return cls((0.0, duration), (n0, n0 + rate_per_ms_ * duration))

    def __call__(self, t):
        return np.interp(t, self.t_knots, self.n_knots)


@dataclass(frozen=True)
class BlueDrive:
    """Blue sideband drive with bare rate ``Omega_B0`` (MHz) and centre schedule."""

    Omega_B0: float
    schedule: ChirpSchedule


@dataclass(frozen=True)
class RedDrive:
    """Red sideband drive with bare rate ``Omega_R0`` (MHz) at fixed centre ``n_R``."""

    Omega_R0: float
    n_R: float


@dataclass(frozen=True)
class SpuriousSpec:
    """Higher-order red transitions excited off-resonantly by the blue dither drive.

    ``orders`` are the sideband orders ``l`` of ``|g,n> <-> |e,n+l>``; by
    default every red order down to ``-l_max``. ``charge_average`` averages
    the residual overlaps over the Gaussian charge-offset distribution.
    """

    enabled: bool = False
    l_max: int = 10
    charge_average: bool = True
    orders: Optional[tuple] = None

    def __post_init__(self):
        if not 1 <= self.l_max <= 11:
            raise ValidityError("spurious l_max must lie in 1..11")

    def order_list(self) -> tuple:
        if self.orders is not None:
            return tuple(int(o) for o in self.orders)
        return tuple(range(-self.l_max, 0))


@dataclass(frozen=True)
class SidebandProtocol:
    """Drives applied for ``duration`` ms."""

    duration: float
    blue: Optional[BlueDrive] = None
    red: Optional[RedDrive] = None
    spurious: SpuriousSpec = field(default_factory=SpuriousSpec)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidityError("protocol duration must be positive")
        if self.spurious.enabled and self.blue is None:
            raise ValidityError("spurious terms require a blue drive")

    def with_duration(self, duration: float) -> "SidebandProtocol":
        return SidebandProtocol(duration, self.blue, self.red, self.spurious)


@dataclass(frozen=True)
class DecayChannel:
    """Qubit and mechanical decay parameters.

    ``overlaps`` holds ``|alpha_mn|^2`` (row ``m``: excited level, column
    ``n``: ground level after the decay). Rates are in MHz.
    """

    Gamma_1: float
    gamma_m: float
    n_th: float
    r: float
    overlaps: np.ndarray

    def __post_init__(self):
        w = np.array(self.overlaps, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidityError("overlap matrix must be square")
        rows = w.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise ValidityError("overlap rows must sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "overlaps", w)

    @property
    def n_max(self) -> int:
        return self.overlaps.shape[0] - 1

    @classmethod
    def from_params(cls, params: SystemParams, n_max: int, *, residual: bool = False, r=None) -> "DecayChannel":
        """Build from system parameters.

        ``|alpha_mn|^2`` comes from ``S(-2r)`` (or the residual overlap with
        ``params.beta`` if ``residual``). Entries below 1e-18 are dropped and
        each row is renormalised, which restores the probability the
        truncation cuts off at the top levels.
        """
        r = params.r if r is None else float(r)
        beta = params.beta if residual else 0.0
        if r == 0 and beta == 0:
            w = np.eye(n_max + 1)
        else:
            amp = fockspace.residual_overlap_matrix(r, beta, n_max).entries
            w = amp**2
            w[w < OVERLAP_FLOOR] = 0.0
            w /= w.sum(axis=1, keepdims=True)
        return cls(params.Gamma_1, params.gamma_m, params.n_th, r, w)


# --------------------------------------------------------------------------
# Kernel program
# --------------------------------------------------------------------------


@dataclass
class RateProgram:
    """Flat arrays consumed by the integration kernels (rates per ms).

    Channel ``c`` exchanges ``|g,n>`` with ``|e,n+ch_k[c]>`` at rate
    ``ch_pref[c, n] / (1 + (ch_slope[c] (n - centre(t)) + ch_off[c])^2)``,
    where ``centre`` is schedule ``ch_sched[c]``.
    """

    n: int
    ch_k: np.ndarray
    ch_pref: np.ndarray
    ch_slope: np.ndarray
    ch_off: np.ndarray
    ch_sched: np.ndarray
    sch_t: np.ndarray
    sch_c: np.ndarray
    sch_len: np.ndarray
    g_up: np.ndarray
    g_dn: np.ndarray
    e_up: np.ndarray
    e_dn: np.ndarray
    gamma1: float
    w_ptr: np.ndarray
    w_idx: np.ndarray
    w_val: np.ndarray
    w_dense: np.ndarray
    labels: list = field(default_factory=list)

    def max_rate(self, times: Sequence[float]) -> float:
        """Largest total escape rate of any level over the sampled times."""
        base_g = self.g_up + self.g_dn
        base_e = self.e_up + self.e_dn + self.gamma1
        worst = max(base_g.max(), base_e.max())
        for t in times:
            out_g = base_g.copy()
            out_e = base_e.copy()
            ch = kernels._kernels_py.channel_rates(self, t)
            for c in range(self.ch_k.size):
                k = int(self.ch_k[c])
                lo, hi = max(0, -k), min(self.n, self.n - k)
                out_g[lo:hi] += ch[c, lo:hi]
                out_e[lo + k:hi + k] += ch[c, lo:hi]
            worst = max(worst, out_g.max(), out_e.max())
        return float(worst)


class _ProgramBuilder:
    def __init__(self, n: int):
        self.n = n
        self.k, self.pref, self.slope, self.off, self.sched, self.labels = [], [], [], [], [], []
        self.schedules: list[ChirpSchedule] = []

    def schedule(self, sch: ChirpSchedule) -> int:
        for i, s in enumerate(self.schedules):
            if s == sch:
                return i
        self.schedules.append(sch)
        return len(self.schedules) - 1

    def channel(self, k, pref, slope, off, sch, label):
        pref = np.asarray(pref, dtype=float).copy()
        idx = np.arange(self.n)
        pref[(idx + k < 0) | (idx + k >= self.n)] = 0.0
        self.k.append(int(k))
        self.pref.append(pref)
        self.slope.append(float(slope))
        self.off.append(float(off))
        self.sched.append(self.schedule(sch))
        self.labels.append(label)

    def arrays(self):
        n = self.n
        kmax = max([len(s.t_knots) for s in self.schedules] or [1])
        sch_t = np.zeros((max(1, len(self.schedules)), kmax))
        sch_c = np.zeros_like(sch_t)
        sch_len = np.ones(sch_t.shape[0], dtype=np.intc)
        for i, s in enumerate(self.schedules):
            sch_t[i, : len(s.t_knots)] = s.t_knots
            sch_c[i, : len(s.n_knots)] = s.n_knots
            sch_len[i] = len(s.t_knots)
        return dict(
            ch_k=np.array(self.k, dtype=np.intc),
            ch_pref=np.array(self.pref).reshape(len(self.k), n),
            ch_slope=np.array(self.slope),
            ch_off=np.array(self.off),
            ch_sched=np.array(self.sched, dtype=np.intc),
            sch_t=sch_t,
            sch_c=sch_c,
            sch_len=sch_len,
        )


def _spurious_overlaps(params: SystemParams, n_max: int, charge_average: bool) -> np.ndarray:
    """``|alpha^rsd_{mn}|^2`` for the spurious channels."""
    if charge_average and params.sigma_c > 0:
        y, w = np.polynomial.hermite.hermgauss(9)
        deltas = math.sqrt(2.0) * params.sigma_c * y
        acc = np.zeros((n_max + 1, n_max + 1))
        for wi, beta in zip(w, rates.residual_beta_from_offset(params, deltas)):
            acc += wi * fockspace.residual_overlap_matrix(params.r, float(beta), n_max).entries ** 2
        return acc / math.sqrt(math.pi)
    return fockspace.residual_overlap_matrix(params.r, params.beta, n_max).entries ** 2


def spurious_channel_specs(params: SystemParams, protocol: SidebandProtocol, n_max: int):
    """Exchange-channel parameters of the spurious higher-order transitions.

    The blue drive is an ac-dither sideband below the qubit, at
    ``w_d = w_q^{n_B} + w_m - w_dither``. Its bare Rabi rate follows from
    inverting the dither sideband rate, and transition ``|g,n> <-> |e,n+l>``
    sits at detuning ``2 chi (n_B - n) + (1 - l) w_m - w_dither``.

    Returns a list of ``(l, pref_mhz[n], slope, offset)``.
    """
    blue = protocol.blue
    detuning_d = params.omega_m - params.omega_dither
    omega_r = rates.dither_rabi_for_sideband_rate(params, blue.Omega_B0, detuning_d)
    alpha2 = _spurious_overlaps(params, n_max, protocol.spurious.charge_average)
    g2 = params.Gamma_2_star
    idx = np.arange(n_max + 1)
    out = []
    for l in protocol.spurious.order_list():
        target = idx + l
        ok = (target >= 0) & (target <= n_max)
        a2 = np.zeros(n_max + 1)
        a2[ok] = alpha2[target[ok], idx[ok]]
        pref = 4.0 * omega_r**2 * a2 / g2
        static = (1 - l) * params.omega_m - params.omega_dither
        out.append((l, pref, 4.0 * params.chi / g2, -2.0 * static / g2))
    return out


def build_program(
    params: SystemParams,
    protocol: Optional[SidebandProtocol],
    decay: Optional[DecayChannel],
    n_max: int,
    *,
    include_drive: bool = True,
    include_decay: bool = True,
    include_spurious: bool = True,
) -> RateProgram:
    """Assemble the kernel arrays; each ``include_*`` switch toggles a term group."""
    n = n_max + 1
    idx = np.arange(n, dtype=float)
    b = _ProgramBuilder(n)
    g2 = params.Gamma_2_star
    slope = 4.0 * params.chi / g2
    if protocol is not None and include_drive:
        if protocol.blue is not None and protocol.blue.Omega_B0 > 0:
            pref = rate_per_ms(4.0 * (idx + 1.0) * protocol.blue.Omega_B0**2 / g2)
            b.channel(+1, pref, slope, 0.0, protocol.blue.schedule, "blue")
        if protocol.red is not None and protocol.red.Omega_R0 > 0:
            pref = rate_per_ms(4.0 * idx * protocol.red.Omega_R0**2 / g2)
            b.channel(-1, pref, slope, 0.0, ChirpSchedule.constant(protocol.red.n_R), "red")
    if protocol is not None and include_spurious and protocol.spurious.enabled:
        for l, pref, sl, off in spurious_channel_specs(params, protocol, n_max):
            b.channel(l, rate_per_ms(pref), sl, off, protocol.blue.schedule, f"spurious{l:+d}")
    arrays = b.arrays()

    zeros = np.zeros(n)
    g_up = e_up = g_dn = e_dn = zeros
    gamma1 = 0.0
    w = np.zeros((n, n))
    if decay is not None and include_decay:
        if decay.n_max != n_max:
            raise ValidityError(f"decay overlaps cover n_max={decay.n_max}, state has {n_max}")
        gm = rate_per_ms(decay.gamma_m)
        nth = decay.n_th
        up = nth * (idx + 1.0)
        dn = (nth + 1.0) * idx
        up[-1] = 0.0  # reflecting top level
        g_up, g_dn = math.exp(2 * decay.r) * gm * up, math.exp(2 * decay.r) * gm * dn
        e_up, e_dn = math.exp(-2 * decay.r) * gm * up, math.exp(-2 * decay.r) * gm * dn
        gamma1 = rate_per_ms(decay.Gamma_1)
        w = decay.overlaps
    nz_rows, nz_cols = np.nonzero(w)
    w_ptr = np.zeros(n + 1, dtype=np.intc)
    np.add.at(w_ptr, nz_rows + 1, 1)
    w_ptr = np.cumsum(w_ptr).astype(np.intc)
    return RateProgram(
        n=n,
        g_up=np.asarray(g_up, dtype=float),
        g_dn=np.asarray(g_dn, dtype=float),
        e_up=np.asarray(e_up, dtype=float),
        e_dn=np.asarray(e_dn, dtype=float),
        gamma1=float(gamma1),
        w_ptr=w_ptr,
        w_idx=nz_cols.astype(np.intc),
        w_val=w[nz_rows, nz_cols].astype(float),
        w_dense=np.asarray(w, dtype=float),
        labels=b.labels,
        **arrays,
    )


# --------------------------------------------------------------------------
# Derivative pieces
# --------------------------------------------------------------------------


def _as_tuple_state(state: MasterState):
    return np.asarray(state.pg, dtype=float), np.asarray(state.pe, dtype=float)


def drive_derivative(state: MasterState, params: SystemParams, protocol: SidebandProtocol, t: Optional[float] = None):
    """Sideband-drive part of the rate equations, ``(dpg/dt, dpe/dt)`` per ms.

    Each drive moves probability between ``|g,n>`` and ``|e,n+1>`` (blue)
    or ``|e,n-1>`` (red) in proportion to the population difference, so
    loss and gain terms cancel in the total.
    """
    prog = build_program(params, protocol, None, state.n_max, include_decay=False, include_spurious=False)
    return kernels.backend.derivative(prog, state.t if t is None else t, *_as_tuple_state(state))


def decay_derivative(state: MasterState, decay: DecayChannel, params: Optional[SystemParams] = None):
    """Decay part of the rate equations, ``(dpg/dt, dpe/dt)`` per ms."""
    params = SystemParams() if params is None else params
    prog = build_program(params, None, decay, state.n_max, include_drive=False, include_spurious=False)
    return kernels.backend.derivative(prog, state.t, *_as_tuple_state(state))


def spurious_sideband_terms(state: MasterState, params: SystemParams, protocol: SidebandProtocol, t: Optional[float] = None):
    """Additional ``(dpg/dt, dpe/dt)`` from the spurious higher-order channels."""
    if not protocol.spurious.enabled:
        zero = np.zeros(state.n_max + 1)
        return zero, zero.copy()
    prog = build_program(params, protocol, None, state.n_max, include_drive=False, include_decay=False)
    return kernels.backend.derivative(prog, state.t if t is None else t, *_as_tuple_state(state))


def n_R_from_detuning(params: SystemParams, n_B0: float, detuning_mhz: float) -> float:
    """Red-drive centre from the initial blue centre and the blue-red drive detuning.

    Both are lower dither sidebands, ``w_B = w_q^{n_B0} + w_m - w_dither``
    and ``w_R = w_q^{n_R} - w_m - w_dither``, so
    ``n_R = n_B0 + (2 w_m - detuning) / (2 chi)``.
    """
    return n_B0 + (2.0 * params.omega_m - detuning_mhz) / (2.0 * params.chi)


def blue_red_detuning(params: SystemParams, n_B0: float, n_R: float) -> float:
    """Inverse of :func:`n_R_from_detuning`."""
    return 2.0 * params.omega_m - 2.0 * params.chi * (n_R - n_B0)


# --------------------------------------------------------------------------
# Integration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the rate equations."""

    times: np.ndarray
    pg: np.ndarray
    pe: np.ndarray
    dt: float
    stats: dict

    def state(self, i: int = -1) -> MasterState:
        return MasterState(self.pg[i], self.pe[i], float(self.times[i]))

    @property
    def final(self) -> MasterState:
        return self.state(-1)

    def distributions(self) -> np.ndarray:
        """Phonon distributions ``pg + pe`` at every sample, shape ``(S, n)``."""
        return self.pg + self.pe


def _sample_times(protocol: SidebandProtocol, n: int = 201) -> np.ndarray:
    ts = set(np.linspace(0.0, protocol.duration, n).tolist())
    if protocol.blue is not None:
        ts.update(t for t in protocol.blue.schedule.t_knots if 0 <= t <= protocol.duration)
    return np.array(sorted(ts))


def choose_step(prog: RateProgram, duration: float, dt: Optional[float] = None, times=None) -> tuple[float, int, float]:
    """Return ``(dt, n_steps, max_rate)`` honouring ``dt * max_rate < 0.1``.

    With ``dt=None`` the step is ``0.08 / max_rate`` shrunk so that an
    integer number of steps spans ``duration``. A supplied ``dt`` is
    likewise shrunk to divide ``duration``.

    Raises
    ------
    ValidityError
        If the (supplied) step violates the stability bound.
    """
    times = [0.0, duration] if times is None else times
    max_rate = prog.max_rate(times)
    if dt is None:
        dt = AUTO_STEP / max_rate if max_rate > 0 else duration
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    dt = duration / n_steps
    if dt * max_rate >= STEP_LIMIT:
        raise ValidityError(
            f"time step {dt:.3g} ms times the fastest rate {max_rate:.4g}/ms is {dt * max_rate:.3f} >= {STEP_LIMIT};"
            f" use dt <= {AUTO_STEP / max_rate:.3g} ms"
        )
    return dt, n_steps, max_rate


def _divides(interval: float, span: float) -> bool:
    k = span / interval
    return k >= 1 and abs(k - round(k)) < 1e-9


def integrate(
    initial: MasterState,
    params: SystemParams,
    protocol: SidebandProtocol,
    decay: Optional[DecayChannel],
    dt: Optional[float] = None,
    *,
    sample_interval: Optional[float] = None,
    t_end: Optional[float] = None,
    backend=None,
) -> Trajectory:
    """Fixed-step RK4 integration of the full rate equations.

    After every step negative entries are clipped, ``pe[n_max]`` is set to
    zero and ``pg[n_max]`` takes whatever probability the other levels do
    not hold, so the total stays exactly 1. Drive centres are evaluated at
    the RK4 stage times.

    Parameters
    ----------
    initial : MasterState
        Starting populations; their length fixes ``n_max``.
    dt : float, optional
        Time step in ms; chosen automatically from the fastest rate if
        omitted.
    sample_interval : float, optional
        Spacing of stored samples in ms (default: about 100 samples). When
        it divides the span and ``dt`` is automatic, the step is chosen to
        divide the interval so samples fall on exact multiples of it.
    t_end : float, optional
        Final time in ms (default ``protocol.duration``); integration starts
        at ``initial.t``, so a run can be continued piecewise.
    backend : module, optional
        Kernel module; defaults to :data:`quadmech.kernels.backend`.

    Raises
    ------
    ValidityError
        If ``dt`` violates ``dt * max_rate < 0.1``.
    TruncationError
        If more than 1% of the probability accumulates at ``n_max``.
    """
    n_max = initial.n_max
    t_end = protocol.duration if t_end is None else float(t_end)
    span = t_end - initial.t
    if not span > 0:
        raise ValidityError(f"end time {t_end} ms is not after the initial time {initial.t} ms")
    prog = build_program(params, protocol, decay, n_max)
    if dt is None and sample_interval is not None and _divides(sample_interval, span):
        # shrink the automatic step so samples fall exactly on multiples of the interval
        auto, _, _ = choose_step(prog, sample_interval, None, _sample_times(protocol))
        dt = auto
    dt, n_steps, max_rate = choose_step(prog, span, dt, _sample_times(protocol))
    if sample_interval is None:
        sample_every = max(1, n_steps // 100)
    else:
        sample_every = max(1, int(round(sample_interval / dt)))
    kern = kernels.backend if backend is None else backend
    log.debug("integrating %d steps of %.3g ms (max rate %.4g/ms, %s kernels)", n_steps, dt, max_rate, kern.BACKEND)
    times, gs, es, stats = kern.integrate(
        prog, np.array(initial.pg), np.array(initial.pe), float(initial.t), dt, int(n_steps), int(sample_every)
    )
    stats = dict(stats, n_steps=int(n_steps), max_rate=max_rate, backend=kern.BACKEND)
    if stats["clipped_mass"] > CLIP_LOG:
        log.info("clipped %.3g of negative probability in total", stats["clipped_mass"])
    if stats["boundary_max"] > BOUNDARY_ERROR:
        raise TruncationError(
            f"{stats['boundary_max']:.3%} of the probability reached n_max={n_max}; increase n_max"
        )
    if stats["boundary_max"] > BOUNDARY_WARN:
        log.warning("boundary level n_max=%d held up to %.2e of the probability", n_max, stats["boundary_max"])
    return Trajectory(np.asarray(times), np.asarray(gs), np.asarray(es), dt, stats)


def run_squeeze_protocol(
    params: SystemParams,
    decay: DecayChannel,
    protocol: SidebandProtocol,
    initial: Optional[MasterState] = None,
    dt: Optional[float] = None,
    backend=None,
) -> PhononDistribution:
    """Integrate to the end of ``protocol`` and return ``P(n) = pg + pe``.

    The default initial state is the thermal state at ``params.n_th`` in the
    qubit ground state on the decay channel's Fock space.
    """
    if initial is None:
        initial = MasterState.ground(fockspace.thermal_distribution(params.n_th, decay.n_max))
    traj = integrate(initial, params, protocol, decay, dt, sample_interval=protocol.duration, backend=backend)
    return traj.final.phonon_distribution()


def chirp_protocol(
    Omega_B0: float = 0.089,
    chirp_rate: float = 38.5,
    n_B0: float = -1.3,
    duration: float = 1.0,
    *,
    Omega_R0: float = 0.0,
    n_R: float = 44.0,
    spurious: Optional[SpuriousSpec] = None,
) -> SidebandProtocol:
    """Linear blue chirp from ``n_B0`` at ``chirp_rate`` phonons/ms, optional static red drive."""
    blue = BlueDrive(Omega_B0, ChirpSchedule.linear(n_B0, chirp_rate, duration))
    red = RedDrive(Omega_R0, n_R) if Omega_R0 > 0 else None
    return SidebandProtocol(duration, blue, red, spurious or SpuriousSpec())


def distributions_at(
    params: SystemParams,
    protocol: SidebandProtocol,
    decay: DecayChannel,
    taus: Sequence[float],
    initial: Optional[MasterState] = None,
    backend=None,
) -> np.ndarray:
    """Phonon distributions after running ``protocol`` for each time in ``taus``.

    Stopping a chirp at ``tau`` freezes nothing else, so this is one run
    continued piecewise through the sorted ``taus``. Returns shape
    ``(len(taus), n_max + 1)`` in the order given.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise ValidityError("times must be non-negative")
    if initial is None:
        initial = MasterState.ground(fockspace.thermal_distribution(params.n_th, decay.n_max))
    out = np.empty((taus.size, initial.n_max + 1))
    state = initial
    for i in np.argsort(taus, kind="stable"):
        if taus[i] > state.t:
            run = protocol.with_duration(max(protocol.duration, taus[i]))
            state = integrate(state, params, run, decay, sample_interval=taus[i], t_end=taus[i], backend=backend).final
        out[i] = state.pg + state.pe
    return out
