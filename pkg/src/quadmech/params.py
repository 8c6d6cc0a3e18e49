"""Physical parameter containers.

Every frequency and rate is an ordinary (not angular) frequency in MHz.
A quantity quoted as ``2 pi x 3.7 MHz`` is stored as ``3.7``. Modules that
need a true rate per millisecond convert once with :func:`rate_per_ms`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .errors import ValidityError

MHZ_TO_PER_MS = 2.0 * math.pi * 1000.0


def rate_per_ms(f_mhz):
    """Convert an ordinary frequency in MHz to an angular rate in 1/ms."""
    return MHZ_TO_PER_MS * f_mhz


def _bloch_siegert_chi(g_m, omega_q, omega_m):
    return g_m**2 * (1.0 / (omega_q - omega_m) + 1.0 / (omega_q + omega_m))


@dataclass(frozen=True)
class SystemParams:
    """Constants of the coupled qubit and mechanical oscillator.

    ``chi_m=None`` means "derive from ``g_m``, ``omega_q_bare`` and
    ``omega_m``"; the resolved value is available as :attr:`chi`.
    Energies ``E_J`` and ``E_c`` are in units of ``h * MHz``.

    ``Gamma_1`` defaults to the rate of a 0.26 us lifetime, and
    ``Gamma_2_star`` doubles as the intrinsic (charge-noise free)
    spectroscopic linewidth. ``drive_epsilon`` is the free probe-field
    scale of the spectroscopy model, in MHz.
    """

    E_J: float = 3800.0
    E_c: float = 2900.0
    omega_m: float = 25.0
    g_m: float = 22.0
    g_m_z: float = 0.0
    chi_m: Optional[float] = None
    omega_q_bare: float = 3800.0
    Gamma_1: float = 1.0 / (2.0 * math.pi * 0.26)
    Gamma_2_star: float = 3.7
    gamma_m: float = 94e-6
    n_th: float = 13.0
    sigma_c: float = 0.0071
    g_c: float = 37.0
    omega_c: float = 4760.0
    omega_dither: float = 257.0
    n_dither: float = 0.306 * 3800.0 / (8.0 * 2900.0)
    drive_epsilon: float = 10.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not math.isfinite(v):
                raise ValidityError(f"{f.name} must be finite, got {v!r}")
            if v < 0:
                raise ValidityError(f"{f.name} must be non-negative, got {v!r}")
        if self.omega_q_bare <= 0 or self.omega_m / self.omega_q_bare >= 0.1:
            raise ValidityError("omega_m must be below 0.1 * omega_q_bare")

    @property
    def chi(self) -> float:
        """Quadratic dispersive shift in MHz, supplied or derived."""
        if self.chi_m is not None:
            return float(self.chi_m)
        return _bloch_siegert_chi(self.g_m, self.omega_q_bare, self.omega_m)

    @property
    def r(self) -> float:
        """Squeeze parameter ``chi / (2 omega_m)``."""
        return self.chi / (2.0 * self.omega_m)

    @property
    def beta(self) -> float:
        """Residual displacement ``-g_m_z / omega_m``."""
        return -self.g_m_z / self.omega_m

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DitherDriveParams:
    """A dither-activated sideband drive.

    Attributes
    ----------
    omega_d : float
        Drive frequency in MHz (absolute).
    Omega_R : float
        Bare Rabi rate in MHz.
    side : str
        ``"blue"`` or ``"red"``.
    n_center : float
        Phonon index of the resonant transition; may be fractional.
    """

    omega_d: float
    Omega_R: float
    side: str = "blue"
    n_center: float = 0.0

    def __post_init__(self):
        if self.Omega_R < 0:
            raise ValidityError("Omega_R must be non-negative")
        if self.side not in ("blue", "red"):
            raise ValidityError(f"side must be 'blue' or 'red', got {self.side!r}")

    @property
    def sign(self) -> int:
        return 1 if self.side == "blue" else -1
