import math

import numpy as np
import pytest
from scipy.special import jv

from quadmech import rates
from quadmech.errors import ValidityError
from quadmech.params import DitherDriveParams, SystemParams, rate_per_ms


def test_chi_value(params):
    # g^2 (1/(wq - wm) + 1/(wq + wm)) = 484 (1/3775 + 1/3825)
    assert rates.derive_chi(params) == pytest.approx(484 * (1 / 3775 + 1 / 3825), rel=1e-14)
    assert params.chi == rates.derive_chi(params)


def test_chi_override():
    assert SystemParams(chi_m=0.3).chi == 0.3
    with pytest.raises(ValidityError):
        SystemParams(omega_q_bare=200.0)


def test_rate_units():
    assert rate_per_ms(1.0) == pytest.approx(2 * math.pi * 1000)


def test_stark_line_spacing(params):
    f = rates.stark_shifted_qubit_frequency(params, np.arange(5))
    np.testing.assert_allclose(np.diff(f), 2 * params.chi, rtol=1e-12)


def test_resolution(params):
    assert rates.phonon_resolution(params) == pytest.approx(3.7 / (2 * params.chi))


def test_qubit_frequency_at_degeneracy(params):
    assert rates.qubit_frequency(params, 0.5) == pytest.approx(params.E_J)
    assert rates.bare_frequency_at_offset(params, 0.01) == pytest.approx(
        rates.qubit_frequency(params, 0.51), rel=1e-14
    )


def test_stark_shift_consistency(params):
    n = np.arange(0, 200, 7)
    nx = rates.phonon_modulation_map(params, n)
    shift = rates.classical_stark_shift(params, 0.0, nx)
    np.testing.assert_allclose(shift, 2 * params.chi * (n + 0.5), rtol=1e-10)
    np.testing.assert_allclose(rates.phonon_modulation_inverse(params, nx), n, atol=1e-9)


def test_sideband_completeness(params):
    n = 43
    total = sum(rates.quantum_sideband_amplitude(params, n, l, n_max=200) ** 2 for l in range(-43, 60))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_sideband_parity_without_displacement(params):
    assert rates.quantum_sideband_amplitude(params, 43, 1, beta=0.0) < 1e-10
    assert rates.quantum_sideband_amplitude(params, 43, 2, beta=0.0) > 1e-3
    assert rates.quantum_sideband_amplitude(params, 43, 1, beta=0.05) > 1e-3


def test_sideband_below_vacuum_is_zero(params):
    np.testing.assert_array_equal(rates.quantum_sideband_amplitude(params, np.array([0, 1]), -2), [0.0, 0.0])


def test_sideband_small_r_asymmetry():
    p = SystemParams(chi_m=1e-4 * 25.0)
    n = 100
    ratio = rates.quantum_sideband_amplitude(p, n, -2) / rates.quantum_sideband_amplitude(p, n, 2)
    assert ratio == pytest.approx(float(rates.exact_sideband_ratio(n)), abs=1e-3)


def _peak_normalised_deviation(two_r, l, n_hi):
    p = SystemParams(chi_m=two_r * 25.0, sigma_c=0.0)
    n = np.arange(0, n_hi + 1)
    nx = rates.phonon_modulation_map(p, n)
    c = rates.classical_sideband_amplitudes(p, [l], 0.0, nx)[0] ** 2
    q = rates.quantum_sideband_amplitude(p, n, l, beta=0.0) ** 2
    ok = n + l >= 0
    return np.abs(c - q)[ok].max() / max(c[ok].max(), q[ok].max())


@pytest.mark.parametrize("l", [0, 2, -2])
def test_classical_quantum_agreement(l):
    assert _peak_normalised_deviation(0.01, l, 150) < 0.03


def test_classical_quantum_degrades_at_strong_coupling():
    assert max(_peak_normalised_deviation(0.2, l, 100) for l in (0, 2, -2)) > 0.10


def test_classical_sidebands_complete(params):
    nx = rates.phonon_modulation_map(params, 43)
    amps = rates.classical_sideband_amplitudes(params, np.arange(-30, 31), 0.004, nx)
    assert (amps**2).sum() == pytest.approx(1.0, abs=1e-12)


def test_classical_odd_orders_need_offset(params):
    nx = rates.phonon_modulation_map(params, 43)
    assert abs(rates.classical_sideband_amplitude(params, 1, 0.0, nx)) < 1e-15
    assert abs(rates.classical_sideband_amplitude(params, 1, 0.005, nx)) > 1e-3


def test_rabi_scaling_leaves_relative_weights(params):
    n = np.arange(30, 50)
    a = rates.reduced_order_l_rate(params, n, 2, 4000.0, 0.1)
    b = rates.reduced_order_l_rate(params, n, 2, 4000.0, 0.3)
    np.testing.assert_allclose(b / a, 9.0, rtol=1e-12)


def test_dither_rate_roundtrip(params):
    drive = DitherDriveParams(omega_d=params.omega_q_bare + 300.0, Omega_R=20.0, n_center=40)
    rate = rates.dither_sideband_rate(params, drive)
    wq = rates.stark_shifted_qubit_frequency(params, 40)
    back = rates.dither_rabi_for_sideband_rate(params, rate, drive.omega_d - wq)
    assert back == pytest.approx(20.0, rel=1e-12)
    assert rates.dither_bessel_factor(params) == pytest.approx(float(jv(1, 0.306)), rel=1e-12)


def test_dither_rate_rejects_resonant_drive(params):
    wq = float(rates.stark_shifted_qubit_frequency(params, 0))
    with pytest.raises(ValidityError):
        rates.dither_sideband_rate(params, DitherDriveParams(omega_d=wq + 1.0, Omega_R=1.0))


def test_dither_sideband_lines(params):
    f = rates.dither_sideband_frequencies(params, 10)
    assert f["blue_lower"] - f["red_lower"] == pytest.approx(2 * params.omega_m)
    assert f["blue_upper"] - f["blue_lower"] == pytest.approx(2 * params.omega_dither)


def test_reduced_rates(params):
    on = rates.reduced_blue_rate(params, 10, 10, 0.089)
    assert on == pytest.approx(4 * 11 * 0.089**2 / 3.7)
    xi = rates.phonon_resolution(params) / 2
    assert rates.reduced_blue_rate(params, 10 + xi, 10, 0.089) / (
        4 * (11 + xi) * 0.089**2 / 3.7
    ) == pytest.approx(0.5, rel=1e-12)
    assert rates.reduced_red_rate(params, 0, 0, 0.066) == 0.0


def test_spurious_rate_resonance(params):
    n = np.arange(0, 100)
    omega_d = float(rates.stark_shifted_qubit_frequency(params, 40)) - 2 * params.omega_m
    r = rates.reduced_order_l_rate(params, n, -2, omega_d, 1.0, overlaps=None)
    assert int(np.argmax(r)) == 40
