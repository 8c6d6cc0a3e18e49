"""Command-line front end.

``quadmech <psf|simulate|reconstruct|fano-bound|rates> --config path.json
[--seed N] [--out dir] [--threads K]``

Every command validates its configuration first, writes the effective
configuration (defaults applied) to ``<out>/effective_config.json`` and
then its data files. Exit status: 0 on success, 1 on a computational
error, 2 on an input error (configuration or data file). Set
``QUADMECH_LOG`` to a logging level name (``INFO``, ``DEBUG``) for
diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, dynamics, fockspace, io, rates, reconstruct, spectra
from .errors import ConfigError, GridError, QuadmechError, TruncationError, ValidityError

log = logging.getLogger("quadmech")

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2


class _Run:
    """Effective config plus output helpers for one command invocation."""

    def __init__(self, command, cfg, out, threads, base_dir):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.threads = threads
        self.base_dir = base_dir
        self.params = cfgmod.system_params(cfg)
        self.out.mkdir(parents=True, exist_ok=True)
        io.write_json(self.out / "effective_config.json", cfg)

    def path(self, p):
        """Resolve a data path from the config relative to the config file."""
        p = Path(p)
        if not p.is_absolute() and self.base_dir is not None and not p.exists():
            p = self.base_dir / p
        return p

    def csv(self, name, header, rows):
        return io.write_csv(self.out / name, header, rows, self.cfg)

    def json(self, name, obj):
        return io.write_json(self.out / name, obj, self.cfg)


def _say(msg):
    print(msg, flush=True)


# --------------------------------------------------------------------------
# psf
# --------------------------------------------------------------------------


def _build_psf(run: _Run, freqs=None) -> spectra.PSFMap:
    g = run.cfg["grid"]
    if g["psf_file"]:
        return io.read_psf(run.path(g["psf_file"]))
    if g["psf_kind"] == "identity":
        return spectra.PSFMap.identity(g["n_max"])
    if freqs is None:
        freqs = cfgmod.frequency_grid(run.cfg, run.params)
    return spectra.build_psf_map(
        run.params, g["n_max"], freqs, l_max=g["l_max"], nodes=g["charge_nodes"],
        method=g["charge_method"], threads=run.threads,
    )


def cmd_psf(run: _Run) -> int:
    psf = _build_psf(run)
    io.write_psf(run.out / "psf.csv", psf, run.cfg)
    summary = {
        "n_max": psf.n_max,
        "kind": psf.kind,
        "n_freqs": int(psf.freqs.size),
        "freq_min": float(psf.freqs[0]),
        "freq_max": float(psf.freqs[-1]),
    }
    if psf.kind != "identity":
        n_hi = min(psf.n_max, 100)
        slope = psf.peak_slope(n_hi)
        summary.update(peak_slope=slope, two_chi=2 * run.params.chi, slope_ratio=slope / (2 * run.params.chi),
                       slope_rows=n_hi + 1)
    run.json("psf_summary.json", summary)
    line = f"psf: n_max={psf.n_max} grid={psf.freqs.size} points [{psf.freqs[0]:.3f}, {psf.freqs[-1]:.3f}] MHz"
    if "peak_slope" in summary:
        line += f" carrier slope={summary['peak_slope']:.4f} MHz/phonon (2chi={summary['two_chi']:.4f})"
    _say(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def cmd_simulate(run: _Run) -> int:
    p = run.cfg["protocol"]
    n_max = run.cfg["grid"]["n_max"]
    params = run.params
    n_th0 = params.n_th if p["initial_n_th"] is None else p["initial_n_th"]
    proto = cfgmod.protocol(run.cfg, params)
    decay = dynamics.DecayChannel.from_params(params, n_max, residual=p["residual_decay"])
    initial = dynamics.MasterState.ground(fockspace.thermal_distribution(n_th0, n_max))
    traj = dynamics.integrate(initial, params, proto, decay, p["dt"], sample_interval=p["sample_interval"])
    n = np.arange(n_max + 1)
    run.csv("trajectory.csv", ["t_ms", "n", "pg", "pe"],
            ([t, k, g[k], e[k]] for t, g, e in zip(traj.times, traj.pg, traj.pe) for k in n))
    final = traj.final.phonon_distribution()
    io.write_distribution(run.out / "final_distribution.csv", final.probs, run.cfg)
    mean, var, fano = fockspace.moments(final)
    summary = {
        "mean": mean, "variance": var, "fano": fano,
        "dt_ms": traj.dt, "n_steps": traj.stats["n_steps"], "max_rate_per_ms": traj.stats["max_rate"],
        "boundary_max": traj.stats["boundary_max"], "clipped_mass": traj.stats["clipped_mass"],
        "n_R": proto.red.n_R if proto.red else None, "backend": traj.stats["backend"],
    }
    if p["sample_taus"]:
        taus = np.asarray(p["sample_taus"], dtype=float)
        dists = dynamics.distributions_at(params, proto, decay, taus, initial)
        run.csv("distributions_at_tau.csv", ["tau_ms", "n", "P"],
                ([t, k, d[k]] for t, d in zip(taus, dists) for k in n))
    run.json("summary.json", summary)
    _say(f"simulate: {traj.stats['n_steps']} steps of {traj.dt:.3g} ms; final <n>={mean:.3f} F={fano:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# reconstruct
# --------------------------------------------------------------------------


def cmd_reconstruct(run: _Run) -> int:
    rc = run.cfg["reconstruction"]
    try:
        freqs, traces = io.read_traces(run.path(rc["spectrum"]))
    except OSError as exc:
        raise io.InputError(f"{rc['spectrum']}: {exc.strerror}") from None
    f = run.cfg["grid"]["freq"]
    explicit = f["min"] is not None
    psf = _build_psf(run, cfgmod.frequency_grid(run.cfg, run.params) if explicit else freqs)
    if psf.freqs.shape != freqs.shape or not np.allclose(psf.freqs, freqs, rtol=0, atol=1e-9):
        raise io.InputError(
            f"grid mismatch: spectrum has {freqs.size} frequencies, PSF has {psf.freqs.size} (or different values)"
        )
    spectrum = spectra.Spectrum.from_measurement(freqs, traces.mean(axis=0))
    report = {"n_traces": int(traces.shape[0]), "n_freqs": int(freqs.size)}
    params = run.params
    thermal_fit = None

    def rl_estimate(s):
        return reconstruct.richardson_lucy(s, psf, rc["rl"]["iterations"], tol=rc["rl"]["tol"])

    if rc["rl"]["enabled"]:
        rep = reconstruct.richardson_lucy_report(spectrum, psf, rc["rl"]["iterations"], tol=rc["rl"]["tol"])
        io.write_distribution(run.out / "distribution.csv", rep.distribution.probs, run.cfg)
        mean, var, fano = fockspace.moments(rep.distribution)
        report["rl"] = {"mean": mean, "variance": var, "fano": fano, "iterations": rep.iterations,
                        "likelihood_decreases": rep.decreases, "loglik": float(rep.loglik[-1])}
    th = rc["thermal"]
    if th["enabled"]:
        thermal_fit = reconstruct.fit_thermal(spectrum, psf, params, n_th_bounds=(th["n_th_min"], th["n_th_max"]),
                                              shift_window=th["shift_window"])
        report["thermal"] = thermal_fit.to_dict()
    dp = rc["displaced"]
    if dp["enabled"]:
        n_th = dp["n_th"] if dp["n_th"] is not None else (thermal_fit["n_th"] if thermal_fit else params.n_th)
        shift = thermal_fit["shift"] if thermal_fit and dp["n_th"] is None else dp["shift"]
        disp = reconstruct.fit_displaced_thermal(spectrum, psf, params, n_th, n_disp_bounds=(0.0, dp["n_disp_max"]),
                                                 shift=shift)
        report["displaced"] = disp.to_dict()
    bs = rc["bootstrap"]
    if bs["resamples"] > 0:
        stat = bs["statistic"]

        def estimator(avg):
            s = spectra.Spectrum.from_measurement(freqs, avg)
            if stat in ("mean", "fano"):
                m, _, fa = fockspace.moments(rl_estimate(s))
                return m if stat == "mean" else fa
            if stat == "n_th":
                return reconstruct.fit_thermal(s, psf, params, n_th_bounds=(th["n_th_min"], th["n_th_max"]),
                                               shift_window=th["shift_window"])["n_th"]
            n_th = dp["n_th"] if dp["n_th"] is not None else (thermal_fit["n_th"] if thermal_fit else params.n_th)
            return reconstruct.fit_displaced_thermal(s, psf, params, n_th, n_disp_bounds=(0.0, dp["n_disp_max"]),
                                                     shift=dp["shift"])["n_disp"]

        ci = reconstruct.bootstrap_ci(traces, estimator, bs["resamples"], bs["level"], seed=run.cfg["seed"])
        report["bootstrap"] = dict(ci.to_dict(), statistic=stat)
    run.json("fit_report.json", report)
    parts = [f"{k}: " + ", ".join(f"{n}={v:.4g}" for n, v in report[k]["parameters"].items())
             for k in ("thermal", "displaced") if k in report]
    if "rl" in report:
        parts.insert(0, f"rl: <n>={report['rl']['mean']:.3f} F={report['rl']['fano']:.4f}")
    if "bootstrap" in report:
        b = report["bootstrap"]
        parts.append(f"bootstrap {b['statistic']}: [{b['lower']:.4g}, {b['upper']:.4g}] at {b['level']:.0%}")
    _say("reconstruct: " + "; ".join(parts))
    return EXIT_OK


# --------------------------------------------------------------------------
# fano-bound
# --------------------------------------------------------------------------


def _noise_model(run: _Run):
    nz = run.cfg["monte_carlo"]["noise"]
    if nz["traces"]:
        _, traces = io.read_traces(run.path(nz["traces"]))
        return reconstruct.fit_noise_model(traces)
    if nz["model"] == "none":
        return None
    try:
        return reconstruct.NoiseModel(nz["c0"], nz["c1"], nz["c2"])
    except ValidityError as exc:
        raise ConfigError(f"config field monte_carlo/noise: {exc}") from None


def cmd_fano_bound(run: _Run) -> int:
    mc = run.cfg["monte_carlo"]
    psf = _build_psf(run)
    noise = _noise_model(run)
    res = reconstruct.fano_bound_mc(
        mc["mean"], mc["f_true"], noise, psf, mc["n_sims"], mc["n_averages"], mc["rl_iterations"],
        run.cfg["seed"], rl_tol=mc["rl_tol"], threads=run.threads,
    )
    edges = res.bin_edges
    hist = res.histograms()
    run.csv("fano_histogram.csv", ["f_true"] + [f"{e:.2f}" for e in edges[:-1]],
            ([f] + list(h) for f, h in zip(res.f_true, hist)))
    run.csv("fano_samples.csv", ["f_true", "sim", "f_extract"],
            ([f, s, v] for f, row in zip(res.f_true, res.f_extract) for s, v in enumerate(row)))
    window = tuple(mc["window"])
    report = {
        "f_true": res.f_true, "bias": res.bias(), "spread": res.f_extract.std(axis=1),
        "window": list(window), "window_counts": res.window_counts(window),
        "noise": list(noise.poly_coeffs) if noise else None,
    }
    try:
        f, cdf = res.conditional_cdf(window)
        report["cdf"] = cdf
        report["upper_bounds"] = {f"{lv:g}": res.upper_bound(window, lv) for lv in mc["levels"]}
        run.csv("fano_cdf.csv", ["f_true", "cdf"], zip(f, cdf))
    finally:
        run.json("fano_report.json", report)
    bounds = ", ".join(f"{k}: F_true <= {v:.2f}" for k, v in report["upper_bounds"].items())
    _say(f"fano-bound: {int(report['window_counts'].sum())} simulations in [{window[0]}, {window[1]}]; {bounds}")
    return EXIT_OK


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------


def cmd_rates(run: _Run) -> int:
    rt = run.cfg["rates"]
    p = run.params
    n = np.arange(rt["n_min"], rt["n_max"] + 1)
    orders = list(rt["orders"])
    quantum = {l: rates.quantum_sideband_amplitude(p, n, l) for l in orders}
    n_x = rates.phonon_modulation_map(p, n)
    classical = rates.classical_sideband_amplitudes(p, orders, 0.0, n_x)
    header = ["n", "qubit_frequency_mhz", "blue_rate_peak_mhz", "red_rate_peak_mhz"]
    header += [f"quantum_l{l:+d}" for l in orders] + [f"classical_l{l:+d}" for l in orders]
    blue = rates.reduced_blue_rate(p, n, n, rt["Omega_B0"])
    red = rates.reduced_red_rate(p, n, n, rt["Omega_R0"])
    freq = rates.stark_shifted_qubit_frequency(p, n)
    rows = (
        [k, freq[i], blue[i], red[i]] + [quantum[l][i] for l in orders] + [classical[j][i] for j in range(len(orders))]
        for i, k in enumerate(n)
    )
    run.csv("rates.csv", header, rows)
    det = p.omega_m - p.omega_dither
    summary = {
        "chi_mhz": p.chi, "two_chi_mhz": 2 * p.chi, "r": p.r, "beta": p.beta,
        "resolution_phonons": rates.phonon_resolution(p),
        "dither_bessel_factor": rates.dither_bessel_factor(p),
        "dither_rabi_for_Omega_B0_mhz": rates.dither_rabi_for_sideband_rate(p, rt["Omega_B0"], det),
    }
    run.json("rates_summary.json", summary)
    _say(f"rates: 2chi={2 * p.chi:.5f} MHz r={p.r:.5g} xi={summary['resolution_phonons']:.3f} phonons; "
         f"{n.size} rows x {len(orders)} orders")
    return EXIT_OK


COMMANDS = {
    "psf": cmd_psf,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "fano-bound": cmd_fano_bound,
    "rates": cmd_rates,
}

HINTS = {
    TruncationError: "increase grid.n_max",
    GridError: "widen the frequency or lookup grid",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quadmech", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"quadmech {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="JSON configuration file")
    src.add_argument("--preset", help=f"bundled preset ({', '.join(cfgmod.preset_names())})")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", type=Path, help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    return ap


def _setup_logging():
    level = os.environ.get("QUADMECH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        raw = cfgmod.load(args.config) if args.config else cfgmod.load_preset(args.preset)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output"] = str(args.out)
        cfg = cfgmod.effective_config(raw, args.command)
        base = args.config.resolve().parent if args.config else None
        run = _Run(args.command, cfg, cfg["output"], args.threads, base)
        return COMMANDS[args.command](run)
    except (ConfigError, io.InputError) as exc:
        print(f"quadmech: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QuadmechError, ValueError, ArithmeticError) as exc:
        hint = next((h for t, h in HINTS.items() if isinstance(exc, t)), None)
        msg = f"quadmech: {type(exc).__name__}: {exc}"
        print(msg + (f" (hint: {hint})" if hint else ""), file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
