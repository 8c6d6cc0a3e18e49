"""File formats.

CSV outputs start with one ``#`` comment line carrying the tool version
and the SHA-256 of the effective configuration; readers skip comment
lines. Trace files hold a header row of frequencies followed by one row per
repetition.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .errors import QuadmechError


class InputError(QuadmechError, ValueError):
    """A user-supplied data file is malformed."""


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``.

    The ``output`` location is left out, so the same computation written to
    two directories carries the same hash and byte-identical files.
    """
    body = {k: v for k, v in config.items() if k != "output"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def provenance_line(config: Optional[dict]) -> str:
    tag = config_hash(config) if config is not None else "none"
    return f"# quadmech {__version__} config_sha256={tag}"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], config: Optional[dict] = None) -> Path:
    """Write ``rows`` under ``header`` with the provenance comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(provenance_line(config) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path, obj, config: Optional[dict] = None) -> Path:
    """Write ``obj`` as indented JSON; a ``provenance`` entry is added to dicts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, dict) and config is not None:
        obj = dict(obj, provenance={"version": __version__, "config_sha256": config_hash(config)})
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _data_lines(path):
    with Path(path).open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() and not line.lstrip().startswith("#"):
                yield lineno, line


def _parse_row(lineno, line, width=None):
    cells = next(csv.reader([line]))
    try:
        vals = [float(c) for c in cells]
    except ValueError as exc:
        raise InputError(f"line {lineno}: non-numeric value ({exc})") from None
    if width is not None and len(vals) != width:
        raise InputError(f"line {lineno}: expected {width} columns, found {len(vals)}")
    if not all(np.isfinite(vals)):
        raise InputError(f"line {lineno}: non-finite value")
    return vals


def read_traces(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a trace matrix: header row of frequencies, one row per repetition.

    Returns ``(freqs, traces)`` with ``traces`` of shape ``(R, F)``.

    Raises
    ------
    InputError
        On an empty file, ragged rows or non-numeric cells (message names
        the line).
    """
    lines = list(_data_lines(path))
    if len(lines) < 2:
        raise InputError(f"{path}: need a frequency header and at least one trace row")
    freqs = _parse_row(*lines[0])
    rows = [_parse_row(n, line, len(freqs)) for n, line in lines[1:]]
    return np.array(freqs), np.array(rows)


def read_table(path) -> tuple[list, np.ndarray]:
    """Read a CSV with a text header row; returns ``(columns, values)``."""
    lines = list(_data_lines(path))
    if not lines:
        raise InputError(f"{path}: empty table")
    header = next(csv.reader([lines[0][1]]))
    rows = [_parse_row(n, line, len(header)) for n, line in lines[1:]]
    return header, np.array(rows).reshape(len(rows), len(header))


def write_psf(path, psf, config=None) -> Path:
    """PSF map: header ``n, f_0, f_1, ...``; one row per Fock state."""
    header = ["n"] + [repr(float(f)) for f in psf.freqs]
    rows = ([n] + list(row) for n, row in enumerate(psf.matrix))
    return write_csv(path, header, rows, config)


def read_psf(path):
    """Inverse of :func:`write_psf`.

    Returns a measured-kind :class:`PSFMap`, or an identity-kind one when the
    file holds the identity kernel written by ``PSFMap.identity``.
    """
    from .spectra import PSFMap

    header, vals = read_table(path)
    if header[0] != "n":
        raise InputError(f"{path}: first PSF column must be 'n'")
    try:
        freqs = np.array([float(h) for h in header[1:]])
    except ValueError:
        raise InputError(f"{path}: PSF header must list frequencies") from None
    if not np.array_equal(vals[:, 0], np.arange(vals.shape[0])):
        raise InputError(f"{path}: PSF rows must be n = 0, 1, 2, ...")
    matrix = vals[:, 1:]
    n = matrix.shape[0]
    if matrix.shape == (n, n) and np.array_equal(matrix, np.eye(n)) and np.array_equal(freqs, np.arange(n)):
        return PSFMap(freqs, matrix, "identity", {"source": str(path)})
    return PSFMap(freqs, matrix, "measured", {"source": str(path)})


def write_distribution(path, probs, config=None) -> Path:
    return write_csv(path, ["n", "P"], enumerate(np.asarray(probs)), config)


def read_distribution(path) -> np.ndarray:
    header, vals = read_table(path)
    if header[:2] != ["n", "P"]:
        raise InputError(f"{path}: expected columns n,P")
    return vals[:, 1]
