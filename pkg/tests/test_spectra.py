import numpy as np
import pytest

from quadmech import fockspace as fs
from quadmech import rates, spectra
from quadmech.errors import GridError, ValidityError
from quadmech.params import SystemParams


def test_saturation_lorentzian_height_and_width():
    f = np.linspace(-20, 20, 4001)
    pe = spectra.saturation_lorentzian(f, 0.0, 1.0, 4.0)
    assert pe.max() == pytest.approx(0.25)
    # power-broadened FWHM = G sqrt(1 + A^2)
    above = f[pe >= pe.max() / 2]
    assert above[-1] - above[0] == pytest.approx(4.0 * np.sqrt(2.0), abs=0.02)
    assert spectra.saturation_lorentzian(0.0, 0.0, 1e4, 4.0) < 0.5


def test_spectrum_validation():
    with pytest.raises(ValidityError):
        spectra.Spectrum([0.0, 1.0], [0.1, 0.6])
    with pytest.raises(ValidityError):
        spectra.Spectrum([1.0, 0.0], [0.1, 0.1])
    s = spectra.Spectrum.from_measurement([0.0, 1.0, 2.0], [-0.01, 0.2, 0.7])
    np.testing.assert_array_equal(s.pe, [0.0, 0.2, 0.5])


def test_psf_never_exceeds_saturation(psf43):
    assert psf43.matrix.max() <= 0.5
    assert psf43.matrix.min() >= 0.0


def test_psf_saturation_under_strong_probe():
    p = SystemParams(drive_epsilon=1e4)
    f = spectra.default_frequency_grid(p, 5, 201)
    psf = spectra.build_psf_map(p, 10, f, nodes=41)
    assert psf.matrix.max() <= 0.5


def test_psf_stark_slope():
    p = SystemParams()
    f = np.linspace(-30, 200, 1151)
    psf = spectra.build_psf_map(p, 150, f, nodes=121)
    peaks = psf.carrier_peaks()
    assert np.all(np.diff(peaks) >= 0)
    assert psf.peak_slope() == pytest.approx(2 * p.chi, rel=0.02)


def test_psf_slope_without_charge_noise():
    p = SystemParams(sigma_c=0.0)
    f = np.linspace(-10, 60, 1401)
    psf = spectra.build_psf_map(p, 50, f)
    assert psf.peak_slope() == pytest.approx(2 * p.chi, rel=2e-3)


def _odd_weight(p, n):
    nx = rates.phonon_modulation_map(p, n)
    odd = np.arange(-7, 8, 2)
    if p.sigma_c == 0:
        deltas, w = np.zeros(1), np.ones(1)
    else:
        deltas, w = spectra._charge_nodes(p, spectra.CHARGE_NODES)
    a = rates.classical_sideband_amplitudes(p, odd, deltas, nx)
    return float(w @ (a**2).sum(axis=0))


def test_charge_noise_breaks_parity():
    assert _odd_weight(SystemParams(sigma_c=0.0), 43) < 1e-12
    assert _odd_weight(SystemParams(), 43) > 0.0


def test_charge_noise_fills_odd_sideband_line():
    # spectral weight at the l = +1 line appears only with charge noise
    n = 20
    nx = rates.phonon_modulation_map(SystemParams(), n)
    for sigma, positive in [(0.0, False), (0.0071, True)]:
        p = SystemParams(sigma_c=sigma)
        carrier = float(rates.classical_stark_shift(p, 0.0, nx))
        f = np.linspace(carrier - 5, carrier + 40, 901)
        base = spectra.charge_averaged_spectrum(p, nx, f, l_max=0)
        full = spectra.charge_averaged_spectrum(p, nx, f, l_max=1)
        at = int(np.argmin(np.abs(f - (carrier + p.omega_m))))
        extra = full.pe[at] - base.pe[at]
        assert (extra > 1e-9) == positive


def test_offset_spectrum_matches_average_without_noise():
    p = SystemParams(sigma_c=0.0)
    nx = rates.phonon_modulation_map(p, 10)
    f = np.linspace(-20, 60, 801)
    a = spectra.offset_spectrum(p, 0.0, nx, f).pe
    b = spectra.charge_averaged_spectrum(p, nx, f).pe
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_charge_quadratures_agree():
    p = SystemParams()
    nx = rates.phonon_modulation_map(p, 30)
    f = spectra.default_frequency_grid(p, 30, 301)
    fine = spectra.charge_averaged_spectrum(p, nx, f, nodes=701).pe
    default = spectra.charge_averaged_spectrum(p, nx, f).pe
    np.testing.assert_allclose(default, fine, atol=1e-9)


def test_carrier_outside_grid():
    p = SystemParams()
    with pytest.raises(GridError):
        spectra.build_psf_map(p, 200, np.linspace(-10, 10, 50))


def test_dressed_spectrum_is_linear(psf43, rng):
    a = rng.random(101)
    b = rng.random(101)
    a, b = a / a.sum(), b / b.sum()
    mix = 0.3 * a + 0.7 * b
    lhs = spectra.dressed_spectrum(mix, psf43).pe
    rhs = 0.3 * spectra.dressed_spectrum(a, psf43).pe + 0.7 * spectra.dressed_spectrum(b, psf43).pe
    np.testing.assert_allclose(lhs, rhs, atol=1e-15)


def test_dressed_spectrum_of_fock_state_is_row(psf43):
    np.testing.assert_array_equal(
        spectra.dressed_spectrum(fs.PhononDistribution.fock(40, 100), psf43).pe, psf43.matrix[40]
    )
    with pytest.raises(ValidityError):
        spectra.dressed_spectrum(np.ones(5) / 5, psf43)


def test_psf_shift_and_identity(psf43):
    shifted = psf43.shifted(1.0)
    step = psf43.freqs[1] - psf43.freqs[0]
    k = int(round(1.0 / step))
    np.testing.assert_allclose(shifted.matrix[43, k:], psf43.matrix[43, :-k], atol=1e-3)
    ident = spectra.PSFMap.identity(5)
    assert ident.kind == "identity" and ident.n_max == 5


def test_threads_do_not_change_psf():
    p = SystemParams()
    f = spectra.default_frequency_grid(p, 5, 101)
    a = spectra.build_psf_map(p, 12, f, nodes=51)
    b = spectra.build_psf_map(p, 12, f, nodes=51, threads=3)
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_skewed_lorentzian_fit_roundtrip():
    f = np.linspace(-30, 30, 601)
    truth = [
        spectra.SkewedLorentzianParams(-8.0, 0.8, 3.7, 0.15),
        spectra.SkewedLorentzianParams(9.0, 0.5, 4.5, 0.15),
    ]
    data = spectra.skewed_lorentzian_eval(truth, f)
    init = [
        spectra.SkewedLorentzianParams(-7.0, 0.6, 3.0, 0.0),
        spectra.SkewedLorentzianParams(8.0, 0.6, 3.0, 0.0),
    ]
    fit = spectra.fit_skewed_lorentzians(data, init)
    for got, want in zip(fit, truth):
        assert got.center == pytest.approx(want.center, abs=1e-6)
        assert got.amplitude == pytest.approx(want.amplitude, rel=1e-6)
        assert got.width == pytest.approx(want.width, rel=1e-6)
        assert got.skew == pytest.approx(0.15, abs=1e-6)


def test_skewed_lorentzian_validation():
    with pytest.raises(ValidityError):
        spectra.SkewedLorentzianParams(0.0, 1.0, -1.0)
    with pytest.raises(ValidityError):
        spectra.SkewedLorentzianParams(0.0, 1.0, 1.0, skew=1.0)
