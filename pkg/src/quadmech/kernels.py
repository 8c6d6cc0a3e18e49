"""Backend selection for the hot kernels.

The compiled extension ``quadmech._kernels`` is used when it imports;
otherwise, or when the environment variable ``QUADMECH_PURE_PYTHON`` is set
to a non-empty value other than ``0``, the numpy implementation in
``quadmech._kernels_py`` is used. Both expose ``integrate``, ``derivative``
and ``richardson_lucy`` with identical signatures.
"""

from __future__ import annotations

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)


def _load():
    if os.environ.get("QUADMECH_PURE_PYTHON", "0") not in ("", "0"):
        return _kernels_py
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError as exc:  # pragma: no cover - depends on the build
        log.debug("compiled kernels unavailable (%s); using numpy fallback", exc)
        return _kernels_py
    return _kernels


backend = _load()
BACKEND = backend.BACKEND


def get_backend(name: str | None = None):
    """Return a kernel module by name (``"cython"``/``"python"``), or the active one."""
    if name is None:
        return backend
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    try:
        from . import _kernels  # type: ignore[attr-defined]  # noqa: F401
    except ImportError:
        return False
    return True
