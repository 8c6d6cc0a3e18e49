import os
import subprocess
import sys

import numpy as np
import pytest

from quadmech import _kernels_py, kernels
from quadmech import dynamics as dyn
from quadmech import fockspace as fs
from quadmech import reconstruct as rc
from quadmech.params import SystemParams

needs_compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")


def _setup():
    p = SystemParams(n_th=2.0)
    decay = dyn.DecayChannel.from_params(p, 60)
    proto = dyn.SidebandProtocol(
        0.3,
        dyn.BlueDrive(0.089, dyn.ChirpSchedule.linear(-1.3, 38.5, 0.3)),
        dyn.RedDrive(0.066, 12.0),
        dyn.SpuriousSpec(enabled=True, l_max=3),
    )
    start = dyn.MasterState.ground(fs.thermal_distribution(2.0, 60))
    return p, decay, proto, start


@needs_compiled
def test_backends_agree_on_integration():
    p, decay, proto, start = _setup()
    a = dyn.integrate(start, p, proto, decay, backend=kernels.get_backend("python"))
    b = dyn.integrate(start, p, proto, decay, backend=kernels.get_backend("cython"))
    np.testing.assert_allclose(a.pg, b.pg, atol=1e-14)
    np.testing.assert_allclose(a.pe, b.pe, atol=1e-14)
    np.testing.assert_array_equal(a.times, b.times)
    assert a.stats["backend"] == "python" and b.stats["backend"] == "cython"


@needs_compiled
def test_backends_agree_on_derivative(rng):
    p, decay, proto, _ = _setup()
    prog = dyn.build_program(p, proto, decay, 60)
    w = rng.random(122)
    w /= w.sum()
    a = _kernels_py.derivative(prog, 0.1, w[:61], w[61:])
    b = kernels.get_backend("cython").derivative(prog, 0.1, w[:61], w[61:])
    np.testing.assert_allclose(a[0], b[0], atol=1e-13)
    np.testing.assert_allclose(a[1], b[1], atol=1e-13)


@needs_compiled
def test_backends_agree_on_rl(psf43):
    data = fs.gaussian_number_distribution(43, 0.25, 100).probs @ psf43.matrix
    a = rc.richardson_lucy_report(data, psf43, 500, backend=kernels.get_backend("python"))
    b = rc.richardson_lucy_report(data, psf43, 500, backend=kernels.get_backend("cython"))
    np.testing.assert_allclose(a.distribution.probs, b.distribution.probs, atol=1e-12)
    np.testing.assert_allclose(a.loglik, b.loglik, rtol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_environment_forces_fallback():
    env = dict(os.environ, QUADMECH_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import quadmech.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@needs_compiled
def test_compiled_is_default():
    env = {k: v for k, v in os.environ.items() if k != "QUADMECH_PURE_PYTHON"}
    out = subprocess.run(
        [sys.executable, "-c", "import quadmech.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "cython"
