import numpy as np
import pytest

from quadmech import spectra
from quadmech.params import SystemParams


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def psf43(params):
    """PSF around the 43-phonon line: 101 Fock rows, 401 frequencies."""
    freqs = spectra.default_frequency_grid(params, 43, 401)
    return spectra.build_psf_map(params, 100, freqs)


@pytest.fixture(scope="session")
def psf_thermal():
    """PSF for thermal states near n_th = 17.7."""
    p = SystemParams(n_th=17.7)
    freqs = spectra.default_frequency_grid(p, 30, 401)
    return spectra.build_psf_map(p, 200, freqs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; returns ``ok`` so tests can assert on it."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        request.config.stash[_VERDICTS].append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
