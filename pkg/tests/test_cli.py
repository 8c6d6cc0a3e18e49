import filecmp
import json

import numpy as np
import pytest

from quadmech import cli, config, io, spectra
from quadmech import fockspace as fs
from quadmech.errors import ConfigError
from quadmech.params import SystemParams


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _run(tmp_path, command, cfg, out="out", *extra):
    path = _write(tmp_path, cfg, f"{command}_{out}.json")
    return cli.main([command, "--config", str(path), "--out", str(tmp_path / out), *extra])


SIM = {
    "schema_version": 1,
    "system": {"n_th": 2.0},
    "grid": {"n_max": 60},
    "protocol": {
        "duration": 0.2,
        "blue": {"Omega_B0": 0.089, "chirp_rate": 38.5, "n_B0": -1.3},
        "red": {"Omega_R0": 0.066, "n_R": 12.0},
        "sample_interval": 0.05,
        "sample_taus": [0.1, 0.2],
    },
}

TINY_GRID = {"n_max": 30, "charge_nodes": 41, "freq": {"center_n": 10, "n_points": 121}}


def test_rates_command(tmp_path, capsys):
    assert _run(tmp_path, "rates", {"schema_version": 1, "rates": {"n_max": 20}}) == 0
    header, vals = io.read_table(tmp_path / "out" / "rates.csv")
    assert header[0] == "n" and vals.shape[0] == 21
    summary = json.loads((tmp_path / "out" / "rates_summary.json").read_text())
    assert summary["two_chi_mhz"] == pytest.approx(2 * SystemParams().chi)
    assert "rates:" in capsys.readouterr().out


def test_psf_command_synthetic(tmp_path):
    assert _run(tmp_path, "psf", {"schema_version": 1, "grid": TINY_GRID}) == 0
    psf = io.read_psf(tmp_path / "out" / "psf.csv")
    p = SystemParams()
    ref = spectra.build_psf_map(p, 30, spectra.default_frequency_grid(p, 10, 121), nodes=41)
    np.testing.assert_array_equal(psf.matrix, ref.matrix)
    summary = json.loads((tmp_path / "out" / "psf_summary.json").read_text())
    assert summary["slope_ratio"] == pytest.approx(1.0, abs=0.02)


def test_psf_command_identity_preset(tmp_path):
    assert cli.main(["psf", "--preset", "identity_psf", "--out", str(tmp_path / "id")]) == 0
    psf = io.read_psf(tmp_path / "id" / "psf.csv")
    np.testing.assert_array_equal(psf.matrix, np.eye(41))


def test_simulate_command(tmp_path):
    assert _run(tmp_path, "simulate", SIM) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    final = io.read_distribution(out / "final_distribution.csv")
    assert final.sum() == pytest.approx(1.0, abs=1e-12)
    assert summary["mean"] == pytest.approx(float(final @ np.arange(61)), rel=1e-12)
    header, traj = io.read_table(out / "trajectory.csv")
    assert header == ["t_ms", "n", "pg", "pe"]
    assert np.unique(traj[:, 0]).size == 5
    _, taus = io.read_table(out / "distributions_at_tau.csv")
    at_end = taus[taus[:, 0] == 0.2][:, 2]
    np.testing.assert_allclose(at_end, final, atol=1e-6)


def test_zero_drive_matches_thermal(tmp_path):
    cfg = {"schema_version": 1, "system": {"n_th": 2.0}, "grid": {"n_max": 60},
           "protocol": {"duration": 0.5, "blue": None, "red": None}}
    assert _run(tmp_path, "simulate", cfg) == 0
    final = io.read_distribution(tmp_path / "out" / "final_distribution.csv")
    np.testing.assert_allclose(final, fs.thermal_distribution(2.0, 60).probs, atol=1e-6)


def test_rerun_is_byte_identical(tmp_path):
    assert _run(tmp_path, "simulate", SIM, "a") == 0
    assert _run(tmp_path, "simulate", SIM, "b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    # effective configs differ only in the output directory
    assert mismatch == ["effective_config.json"] and not errors


def test_effective_config_reingestible(tmp_path):
    assert _run(tmp_path, "simulate", SIM, "first") == 0
    eff = json.loads((tmp_path / "first" / "effective_config.json").read_text())
    assert config.effective_config(eff, "simulate") == eff
    eff_path = tmp_path / "first" / "effective_config.json"
    assert cli.main(["simulate", "--config", str(eff_path), "--out", str(tmp_path / "second")]) == 0
    assert filecmp.cmp(tmp_path / "first" / "final_distribution.csv", tmp_path / "second" / "final_distribution.csv",
                       shallow=False)


def _thermal_traces(tmp_path, rng, n_th=5.0, n_traces=40, sigma=1e-3):
    p = SystemParams(n_th=n_th)
    freqs = spectra.default_frequency_grid(p, 10, 201)
    psf = spectra.build_psf_map(p, 100, freqs, nodes=61)
    clean = fs.thermal_distribution(n_th, 100).probs @ psf.matrix
    traces = clean + rng.normal(0, sigma, (n_traces, freqs.size))
    path = tmp_path / "traces.csv"
    with path.open("w") as fh:
        fh.write(",".join(repr(float(f)) for f in freqs) + "\n")
        for row in traces:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def _recon_cfg(spectrum, **recon):
    return {
        "schema_version": 1,
        "system": {"n_th": 5.0},
        "grid": {"n_max": 100, "charge_nodes": 61},
        "reconstruction": dict({"spectrum": str(spectrum), "rl": {"iterations": 500},
                                "thermal": {"enabled": True, "n_th_max": 20.0}}, **recon),
    }


def test_reconstruct_thermal_roundtrip(tmp_path, rng):
    traces = _thermal_traces(tmp_path, rng)
    assert _run(tmp_path, "reconstruct", _recon_cfg(traces)) == 0
    report = json.loads((tmp_path / "out" / "fit_report.json").read_text())
    assert report["thermal"]["parameters"]["n_th"] == pytest.approx(5.0, abs=0.2)
    assert report["rl"]["likelihood_decreases"] == 0
    assert report["n_traces"] == 40
    assert io.read_distribution(tmp_path / "out" / "distribution.csv").size == 101


def test_reconstruct_bootstrap_deterministic(tmp_path, rng):
    traces = _thermal_traces(tmp_path, rng)
    cfg = _recon_cfg(traces, rl={"iterations": 200}, thermal={"enabled": False},
                     bootstrap={"resamples": 100, "statistic": "mean"})
    assert _run(tmp_path, "reconstruct", cfg, "a", "--seed", "5") == 0
    assert _run(tmp_path, "reconstruct", cfg, "b", "--seed", "5") == 0
    a = json.loads((tmp_path / "a" / "fit_report.json").read_text())["bootstrap"]
    b = json.loads((tmp_path / "b" / "fit_report.json").read_text())["bootstrap"]
    assert a == b
    assert a["lower"] <= a["point"] <= a["upper"]


def test_fano_bound_command(tmp_path):
    cfg = {
        "schema_version": 1,
        "grid": {"n_max": 100, "charge_nodes": 61, "freq": {"center_n": 43, "n_points": 201}},
        "monte_carlo": {"f_true": [0.25, 0.4], "n_sims": 3, "rl_iterations": 100, "window": [0.0, 5.0]},
    }
    assert _run(tmp_path, "fano-bound", cfg, "a") == 0
    assert _run(tmp_path, "fano-bound", cfg, "b") == 0
    for name in ("fano_histogram.csv", "fano_samples.csv", "fano_cdf.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    report = json.loads((tmp_path / "a" / "fano_report.json").read_text())
    assert sum(report["window_counts"]) == 6
    assert set(report["upper_bounds"]) == {"0.95", "0.99"}


def test_fano_bound_empty_window_is_compute_error(tmp_path, capsys):
    cfg = {
        "schema_version": 1,
        "grid": {"n_max": 100, "charge_nodes": 61, "freq": {"center_n": 43, "n_points": 201}},
        "monte_carlo": {"f_true": [0.25], "n_sims": 1, "rl_iterations": 50, "window": [4.0, 5.0]},
    }
    assert _run(tmp_path, "fano-bound", cfg) == 1
    assert "no simulation" in capsys.readouterr().err
    assert (tmp_path / "out" / "fano_report.json").exists()


# --------------------------------------------------------------------------
# error handling
# --------------------------------------------------------------------------


def test_unknown_key_is_input_error(tmp_path, capsys):
    cfg = {"schema_version": 1, "grid": {"n_max": 60, "bogus": 1}}
    assert _run(tmp_path, "psf", cfg) == 2
    assert "grid" in capsys.readouterr().err


def test_bad_type_is_input_error(tmp_path, capsys):
    assert _run(tmp_path, "psf", {"schema_version": 1, "grid": {"n_max": "big"}}) == 2
    assert "grid/n_max" in capsys.readouterr().err


def test_malformed_traces_name_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("0.0,1.0,2.0\n0.1,0.1,0.1\n0.1,oops,0.1\n")
    assert _run(tmp_path, "reconstruct", _recon_cfg(bad)) == 2
    assert "line 3" in capsys.readouterr().err


def test_ragged_traces(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# comment\n0.0,1.0,2.0\n0.1,0.1\n")
    assert _run(tmp_path, "reconstruct", _recon_cfg(bad)) == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_traces_file(tmp_path):
    assert _run(tmp_path, "reconstruct", _recon_cfg(tmp_path / "nope.csv")) == 2


def test_grid_mismatch_is_input_error(tmp_path, rng, capsys):
    traces = _thermal_traces(tmp_path, rng)
    cfg = _recon_cfg(traces)
    cfg["grid"]["freq"] = {"min": -10.0, "max": 60.0, "n_points": 150}
    assert _run(tmp_path, "reconstruct", cfg) == 2
    assert "grid mismatch" in capsys.readouterr().err


def test_unstable_step_is_compute_error(tmp_path, capsys):
    cfg = json.loads(json.dumps(SIM))
    cfg["protocol"]["dt"] = 0.01
    assert _run(tmp_path, "simulate", cfg) == 1
    assert "use dt <=" in capsys.readouterr().err


def test_truncation_reports_hint(tmp_path, capsys):
    cfg = {"schema_version": 1, "system": {"n_th": 13.0}, "grid": {"n_max": 40}}
    assert _run(tmp_path, "simulate", cfg) == 1
    assert "hint: increase grid.n_max" in capsys.readouterr().err


def test_red_drive_needs_one_centre(tmp_path, capsys):
    cfg = json.loads(json.dumps(SIM))
    cfg["protocol"]["red"] = {"Omega_R0": 0.066, "n_R": 12.0, "detuning": 27.0}
    assert _run(tmp_path, "simulate", cfg) == 2


def test_config_and_preset_are_exclusive(tmp_path):
    path = _write(tmp_path, {"schema_version": 1})
    with pytest.raises(SystemExit) as exc:
        cli.main(["psf", "--config", str(path), "--preset", "zero_drive"])
    assert exc.value.code == 2


def test_threads_must_be_positive(tmp_path):
    assert _run(tmp_path, "rates", {"schema_version": 1}, "out", "--threads", "0") == 2


# --------------------------------------------------------------------------
# presets and config module
# --------------------------------------------------------------------------


def _command_for(preset):
    if "reconstruction" in preset:
        return "reconstruct"
    if "monte_carlo" in preset:
        return "fano-bound"
    if "protocol" in preset:
        return "simulate"
    return "psf"


@pytest.mark.parametrize("name", config.preset_names())
def test_presets_validate(name):
    raw = config.load_preset(name)
    eff = config.effective_config(raw, _command_for(raw))
    assert config.effective_config(eff, _command_for(raw)) == eff


def test_squeeze_preset_red_centre():
    raw = config.load_preset("fig3_squeeze")
    eff = config.effective_config(raw, "simulate")
    proto = config.protocol(eff, config.system_params(eff))
    assert proto.red.n_R == pytest.approx(44.0, abs=1e-9)


def test_effective_config_fills_defaults():
    eff = config.effective_config({"schema_version": 1}, "simulate")
    assert eff["grid"]["n_max"] == 200
    assert eff["protocol"]["blue"] is None and eff["protocol"]["spurious"]["l_max"] == 10
    assert "monte_carlo" not in eff


def test_validate_rejects_schema_version():
    with pytest.raises(ConfigError):
        config.effective_config({"schema_version": 2}, "psf")


def test_config_hash_is_canonical():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
