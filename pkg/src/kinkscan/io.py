"""
Reading and writing datasets, study tables and summaries.

Floats are written with up to 17 significant digits, which reads back to the
identical 64-bit value.  Output files are written to a temporary name in the
target directory and renamed into place, so an interrupted run never leaves
a partial file behind.
"""
import json
import os
import tempfile

import numpy as np

from .errors import DataFormatError
from .scenario import Dataset

DATASET_COLUMNS = ("x", "y", "eps", "F")


def fmt_float(x):
    """Float with 17 significant digits."""
    return f"{float(x):.17g}"


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def header_comment(seed, config_hash):
    return f"# kinkscan seed={seed} config={config_hash}\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def format_table(columns, rows, comment=""):
    """CSV text with an optional leading comment line."""
    lines = [comment, ",".join(columns) + "\n"]
    for row in rows:
        lines.append(",".join(_cell(row[c]) for c in columns) + "\n")
    return "".join(lines)


def dataset_text(dataset, latents=False, comment=""):
    cols = ["x", "y"]
    arrays = [dataset.x, dataset.y]
    if latents:
        if not dataset.has_latents:
            raise DataFormatError("dataset has no latent columns")
        cols += ["eps", "F"]
        arrays += [dataset.epsilon, dataset.F_of_x]
    body = [",".join(fmt_float(v) for v in vals) + "\n" for vals in zip(*arrays)]
    return comment + ",".join(cols) + "\n" + "".join(body)


def write_dataset(path, dataset, latents=False, comment=""):
    atomic_write(path, dataset_text(dataset, latents, comment))


def write_series(path, values, comment=""):
    """Single-column CSV of an LRD series, header ``xi``."""
    atomic_write(path, comment + "xi\n" + "".join(fmt_float(v) + "\n" for v in values))


def read_dataset(path):
    """Read an ``x,y[,eps,F]`` CSV; comment lines start with ``#``.

    Rows are numbered from 1 after the header in error messages.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from None
    lines = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataFormatError("empty file")
    cols = [c.strip() for c in lines[0].split(",")]
    if cols not in (["x", "y"], ["x", "y", "eps", "F"]):
        raise DataFormatError(f"header must be x,y or x,y,eps,F, got {lines[0]!r}")
    data = np.empty((len(lines) - 1, len(cols)))
    for i, ln in enumerate(lines[1:]):
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise DataFormatError(f"expected {len(cols)} fields, got {len(parts)}", i + 1)
        try:
            data[i] = [float(p) for p in parts]
        except ValueError:
            raise DataFormatError(f"non-numeric field in {ln!r}", i + 1) from None
        if not np.all(np.isfinite(data[i])):
            raise DataFormatError("non-finite value", i + 1)
    if len(data) == 0:
        raise DataFormatError("no data rows")
    if len(cols) == 4:
        return Dataset(data[:, 0], data[:, 1], epsilon=data[:, 2], F_of_x=data[:, 3])
    return Dataset(data[:, 0], data[:, 1])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    atomic_write(path, json_text(obj))


def profile_svg(t, values, width=640, height=240, threshold=None, marks=()):
    """Minimal SVG line plot of a profile, with optional threshold lines and marks."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two points to plot")
    pad = 20
    lo, hi = float(np.min(v)), float(np.max(v))
    if threshold is not None:
        lo, hi = min(lo, -threshold), max(hi, threshold)
    if hi == lo:
        hi, lo = hi + 1, lo - 1
    sx = lambda a: pad + (a - t[0]) / (t[-1] - t[0]) * (width - 2 * pad)
    sy = lambda b: height - pad - (b - lo) / (hi - lo) * (height - 2 * pad)
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, v))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{width - pad}" y2="{sy(0):.2f}" stroke="#999"/>',
             f'<polyline fill="none" stroke="#1f77b4" points="{pts}"/>']
    if threshold is not None:
        for y in (threshold, -threshold):
            parts.append(f'<line x1="{pad}" y1="{sy(y):.2f}" x2="{width - pad}" y2="{sy(y):.2f}" '
                         'stroke="#d62728" stroke-dasharray="4 3"/>')
    for m in marks:
        parts.append(f'<line x1="{sx(m):.2f}" y1="{pad}" x2="{sx(m):.2f}" y2="{height - pad}" stroke="#2ca02c"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)
