import warnings

import numpy as np
import pytest

from quadmech import dynamics as dyn
from quadmech import fockspace as fs
from quadmech import reconstruct as rc
from quadmech import spectra
from quadmech.errors import ConvergenceWarning, GridError, PrecisionWarning, StatisticsError, ValidityError
from quadmech.params import SystemParams


# --------------------------------------------------------------------------
# Richardson-Lucy
# --------------------------------------------------------------------------


def test_rl_identity_fixed_point(rng):
    p = rng.random(30)
    p /= p.sum()
    out = rc.richardson_lucy(p, spectra.PSFMap.identity(29), 50)
    np.testing.assert_allclose(out.probs, p, atol=1e-14)


def test_rl_likelihood_monotone(psf43, rng):
    data = np.clip(fs.poisson_distribution(43, 100).probs @ psf43.matrix + rng.normal(0, 2e-3, psf43.freqs.size), 0, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        rep = rc.richardson_lucy_report(data, psf43, 400, tol=0)
    assert rep.decreases == 0
    assert np.all(np.diff(rep.loglik) >= -1e-12 * np.abs(rep.loglik[1:]))
    assert rep.iterations == 400
    assert rep.distribution.probs.min() >= 0
    assert rep.distribution.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_rl_permutation_equivariance(psf43, rng):
    data = fs.gaussian_number_distribution(43, 0.5, 100).probs @ psf43.matrix
    perm = rng.permutation(psf43.freqs.size)
    shuffled = spectra.PSFMap(psf43.freqs[perm], psf43.matrix[:, perm])
    a = rc.richardson_lucy(data, psf43, 300).probs
    b = rc.richardson_lucy(data[perm], shuffled, 300).probs
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_rl_recovers_poisson(psf43):
    truth = fs.poisson_distribution(43, 100)
    out = rc.richardson_lucy(spectra.dressed_spectrum(truth, psf43), psf43)
    mean, _, fano = fs.moments(out)
    assert mean == pytest.approx(43.0, abs=0.3)
    assert fano == pytest.approx(1.0, abs=0.05)


def test_rl_early_stop(psf43):
    data = fs.poisson_distribution(43, 100).probs @ psf43.matrix
    rep = rc.richardson_lucy_report(data, psf43, 100000, tol=1e-6)
    assert rep.iterations < 100000


def test_rl_input_checks(psf43):
    with pytest.raises(GridError):
        rc.richardson_lucy(np.ones(5), psf43)
    with pytest.raises(GridError):
        rc.richardson_lucy(spectra.Spectrum(psf43.freqs + 1.0, np.zeros(psf43.freqs.size)), psf43)
    with pytest.raises(ValidityError):
        rc.richardson_lucy(np.zeros(psf43.freqs.size), psf43)


# --------------------------------------------------------------------------
# parametric fits
# --------------------------------------------------------------------------


def test_fit_thermal_roundtrip(psf_thermal):
    p = SystemParams(n_th=17.7)
    clean = fs.thermal_distribution(17.7, psf_thermal.n_max).probs @ psf_thermal.matrix
    data = spectra.Spectrum(psf_thermal.freqs, rc._shift_rows(psf_thermal.freqs, clean, 1.3))
    fit = rc.fit_thermal(data, psf_thermal, p)
    assert fit["n_th"] == pytest.approx(17.7, abs=1e-3)
    assert fit["shift"] == pytest.approx(1.3, abs=1e-3)
    assert fit["omega_q_bare"] == pytest.approx(p.omega_q_bare + 1.3, abs=1e-3)
    assert fit.units["n_th"] == "phonons"
    assert set(fit.to_dict()) >= {"parameters", "residual"}


def test_fit_thermal_accepts_builder(psf_thermal):
    p = SystemParams(n_th=10.0)
    data = spectra.dressed_spectrum(fs.thermal_distribution(10.0, psf_thermal.n_max), psf_thermal)
    fit = rc.fit_thermal(data, lambda _: psf_thermal, p, fit_shift=False)
    assert fit["n_th"] == pytest.approx(10.0, abs=1e-3)
    assert fit["shift"] == 0.0


def test_fit_displaced_thermal_roundtrip(psf_thermal):
    p = SystemParams(n_th=2.0)
    truth = fs.displaced_thermal_distribution(2.0, 20.0, psf_thermal.n_max)
    fit = rc.fit_displaced_thermal(spectra.dressed_spectrum(truth, psf_thermal), psf_thermal, p, 2.0)
    assert fit["n_disp"] == pytest.approx(20.0, abs=1e-3)


def test_linear_fits():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert rc.linear_fit(x, 2 * x + 1) == pytest.approx((2.0, 1.0))
    assert rc.fit_through_origin(x, 3 * x) == pytest.approx(3.0)


# --------------------------------------------------------------------------
# noise model and bootstrap
# --------------------------------------------------------------------------


def _synthetic_traces(rng, model, n_traces=3000, levels=None):
    levels = np.linspace(0.0, 0.4, 41) if levels is None else levels
    return levels + rng.normal(0, 1, (n_traces, levels.size)) * model.sigma(levels)


def test_noise_model_constant(rng):
    fit = rc.fit_noise_model(_synthetic_traces(rng, rc.NoiseModel(0.02)))
    assert fit.c0 == pytest.approx(0.02, abs=1e-3)
    assert abs(fit.c1) < 5e-3


def test_noise_model_heteroscedastic(rng):
    fit = rc.fit_noise_model(_synthetic_traces(rng, rc.NoiseModel(0.01, 0.05, 0.0)))
    assert fit.c0 == pytest.approx(0.01, abs=1e-3)
    assert fit.sigma(0.3) == pytest.approx(0.025, rel=0.03)


def test_noise_model_errors(rng):
    with pytest.raises(StatisticsError):
        rc.fit_noise_model(_synthetic_traces(rng, rc.NoiseModel(0.01), n_traces=10))
    with pytest.raises(StatisticsError):
        rc.fit_noise_model(_synthetic_traces(rng, rc.NoiseModel(0.01), levels=np.full(20, 0.1)))
    with pytest.raises(ValidityError):
        rc.NoiseModel(-0.01)


def test_averaged_sigma():
    m = rc.NoiseModel(0.01, 0.1)
    assert m.averaged_sigma(0.2, 100) == pytest.approx(m.sigma(0.2) / 10)


def _mean_first(spec):
    return float(spec[0])


def test_bootstrap_zero_variance():
    traces = np.tile([0.2, 0.3], (40, 1))
    ci = rc.bootstrap_ci(traces, _mean_first, resamples=200)
    assert ci.lower == ci.point == ci.upper == pytest.approx(0.2)


def test_bootstrap_deterministic(rng):
    traces = rng.normal(0.2, 0.05, (50, 3))
    a = rc.bootstrap_ci(traces, _mean_first, resamples=300, seed=7)
    b = rc.bootstrap_ci(traces, _mean_first, resamples=300, seed=7)
    c = rc.bootstrap_ci(traces, _mean_first, resamples=300, seed=8)
    assert a == b
    assert a != c
    assert a.lower <= a.point <= a.upper


def test_bootstrap_warns_on_few_resamples(rng):
    with pytest.warns(PrecisionWarning):
        rc.bootstrap_ci(rng.random((20, 2)), _mean_first, resamples=50)


def test_bootstrap_coverage():
    rng = np.random.default_rng(2024)
    hits = 0
    trials = 500
    for k in range(trials):
        traces = rng.normal(1.0, 1.0, (60, 1))
        ci = rc.bootstrap_ci(traces, _mean_first, resamples=300, level=0.9, seed=k)
        hits += ci.contains(1.0)
    assert 0.86 <= hits / trials <= 0.94


# --------------------------------------------------------------------------
# Fano-bound Monte Carlo
# --------------------------------------------------------------------------


def test_fano_mc_reproducible(psf43):
    kw = dict(n_sims=3, n_averages=916, rl_iterations=200, seed=11)
    a = rc.fano_bound_mc(43.0, [0.25, 0.35], rc.DEFAULT_NOISE, psf43, **kw)
    b = rc.fano_bound_mc(43.0, [0.25, 0.35], rc.DEFAULT_NOISE, psf43, threads=2, **kw)
    np.testing.assert_array_equal(a.f_extract, b.f_extract)
    np.testing.assert_array_equal(a.histograms(), b.histograms())
    c = rc.fano_bound_mc(43.0, [0.25, 0.35], rc.DEFAULT_NOISE, psf43, **dict(kw, seed=12))
    assert not np.array_equal(a.f_extract, c.f_extract)


def test_fano_mc_noiseless_rows_identical(psf43):
    res = rc.fano_bound_mc(43.0, [0.3], None, psf43, n_sims=2, rl_iterations=100)
    assert res.f_extract[0, 0] == res.f_extract[0, 1]


def test_fano_result_bound_logic():
    f_true = np.array([0.2, 0.25, 0.3, 0.35])
    samples = np.array([[0.1, 0.21, 0.5], [0.26, 0.26, 0.5], [0.26, 0.5, 0.5], [0.26, 0.5, 0.5]])
    res = rc.FanoBoundResult(f_true, samples, 43.0, 916, 0)
    np.testing.assert_array_equal(res.window_counts((0.255, 0.265)), [0, 2, 1, 1])
    _, cdf = res.conditional_cdf((0.255, 0.265))
    np.testing.assert_allclose(cdf, [0, 0.5, 0.75, 1.0])
    assert res.upper_bound((0.255, 0.265), 0.95) == 0.35
    assert res.upper_bound((0.255, 0.265), 0.5) == 0.25
    assert res.histograms().sum() == samples.size
    with pytest.raises(StatisticsError):
        res.conditional_cdf((0.9, 0.95))


# --------------------------------------------------------------------------
# staged protocol fit
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_lookup():
    p = SystemParams(n_th=2.0)
    decay = dyn.DecayChannel.from_params(p, 60)
    return rc.ProtocolLookup(
        p, decay, taus=[0.2, 0.4], Omega_B0_grid=[0.07, 0.089, 0.11], n_B0_grid=[-2.3, -1.3, -0.3],
        Omega_R0_grid=[0.04, 0.066, 0.09], chirp_rate=38.5,
    )


@pytest.fixture(scope="module")
def small_psf():
    p = SystemParams(n_th=2.0)
    return spectra.build_psf_map(p, 60, spectra.default_frequency_grid(p, 10, 241), nodes=61)


def test_joint_fit_self_consistent(small_lookup, small_psf):
    blue = small_lookup.blue_table()[1, 1]
    red = small_lookup.red_table(0.089, -1.3, 12.0)[1]
    blue_spectra = [spectra.dressed_spectrum(d / d.sum(), small_psf) for d in blue]
    red_spectra = [spectra.dressed_spectrum(d / d.sum(), small_psf) for d in red]
    a, b = rc.joint_fit_protocol(blue_spectra, red_spectra, small_lookup, small_psf, n_R=12.0)
    assert a["Omega_B0"] == 0.089 and a["n_B0"] == -1.3
    assert b["Omega_R0"] == 0.066 and b["n_R"] == 12.0
    assert a.residual < 1e-20


def test_joint_fit_boundary_raises(small_lookup, small_psf):
    blue = small_lookup.blue_table()[0, 1]
    blue_spectra = [spectra.dressed_spectrum(d / d.sum(), small_psf) for d in blue]
    with pytest.raises(GridError):
        rc.joint_fit_protocol(blue_spectra, [], small_lookup, small_psf)
