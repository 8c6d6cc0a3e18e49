"""Compare the compiled and numpy kernels on representative workloads.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Workloads: a 0.2 ms squeeze-protocol integration on 201 Fock levels (the
physical truncation, about 17k RK4 steps) and 3000 Richardson-Lucy updates
on a 101 x 401 kernel.
"""

import argparse
import time

import numpy as np

from quadmech import dynamics as dyn
from quadmech import fockspace as fs
from quadmech import kernels, spectra
from quadmech import reconstruct as rc
from quadmech.params import SystemParams


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    p = SystemParams()
    decay = dyn.DecayChannel.from_params(p, 200)
    proto = dyn.chirp_protocol(duration=0.2, Omega_R0=0.066, n_R=44.0)
    start = dyn.MasterState.ground(fs.thermal_distribution(p.n_th, 200))
    psf = spectra.build_psf_map(p, 100, spectra.default_frequency_grid(p, 43, 401))
    data = fs.gaussian_number_distribution(43, 0.25, 100).probs @ psf.matrix

    names = ["python"] + (["cython"] if kernels.compiled_available() else [])
    results = {}
    for name in names:
        be = kernels.get_backend(name)
        results[name] = (
            _time(lambda: dyn.integrate(start, p, proto, decay, backend=be), args.repeat),
            _time(lambda: rc.richardson_lucy_report(data, psf, 3000, tol=0, backend=be), args.repeat),
        )
    print(f"{'backend':<8} {'integrate [s]':>14} {'RL 3000 [s]':>12}")
    for name, (ti, tr) in results.items():
        print(f"{name:<8} {ti:14.3f} {tr:12.3f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speed-up {py[0] / cy[0]:14.1f}x {py[1] / cy[1]:11.1f}x")


if __name__ == "__main__":
    main()
