"""CSV ingestion and CSV/JSON/SVG output.

Numbers are written with ``repr``, the shortest string that reads back to
the same double, so files round-trip bit for bit.  Every file is written to
a temporary name and renamed into place.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyInput, ParseError
from .numcore import Dataset
from .weights import Z95, StepWeightFunction, WeightReport

MISSING = frozenset({"", "na", "nan", "null", "none", "."})


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    rows_kept: int
    rows_dropped: int
    columns: tuple


def _track(numbered, sink):
    # feed lines to csv.reader while remembering the file line number
    for i, ln in numbered:
        sink.append(i)
        yield ln


def load_csv(path, columns=None) -> tuple[Dataset, IngestReport]:
    """Read a numeric CSV with a header row.

    Lines starting with ``#`` are metadata and skipped.  Only ``columns``
    (default: all) are parsed.  Rows with an empty, NA or infinite cell in
    any of them are dropped; any other token that is not a number raises
    :class:`ParseError` naming the row and column.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        numbered = ((i, ln) for i, ln in enumerate(fh, start=1) if not ln.startswith("#"))
        lines = []
        reader = csv.reader(_track(numbered, lines))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: duplicate column names in header")
        used = list(header) if columns is None else list(columns)
        missing = [c for c in used if c not in header]
        if missing:
            raise KeyError(f"columns not in {path}: {missing}")
        pos = [header.index(c) for c in used]
        data = [[] for _ in used]
        read = dropped = 0
        for row in reader:
            line = lines[-1]
            if not row or all(not f.strip() for f in row):
                continue
            read += 1
            vals = []
            for j, p in zip(pos, used):
                tok = row[j].strip() if j < len(row) else ""
                if tok.lower() in MISSING:
                    vals = None
                    break
                try:
                    v = float(tok)
                except ValueError:
                    raise ParseError(f"{path}: row {read} (line {line}), column {p!r}: "
                                     f"not a number: {tok!r}") from None
                if not math.isfinite(v):
                    vals = None
                    break
                vals.append(v)
            if vals is None:
                dropped += 1
                continue
            for col, v in zip(data, vals):
                col.append(v)
    ds = Dataset({c: np.array(v, dtype=float) for c, v in zip(used, data)})
    return ds, IngestReport(read, read - dropped, dropped, tuple(used))


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_text(header, rows, meta=None) -> str:
    lines = [f"# {k}={fmt(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(header))
    lines.extend(",".join(fmt(v) for v in r) for r in rows)
    return "\n".join(lines) + "\n"


def dataset_text(ds: Dataset, meta=None) -> str:
    cols = [ds[c] for c in ds.columns]
    return table_text(ds.columns, zip(*cols), meta)


def write_csv(ds: Dataset, path, meta=None) -> None:
    atomic_write(path, dataset_text(ds, meta))


def weights_text(obj) -> str:
    """Weights as ``x, omega, se, ci_lo, ci_hi``.

    ``x`` is the right end of each interval: the value at knot ``x`` is the
    weight on the interval that ends there.
    """
    rep = obj if isinstance(obj, WeightReport) else None
    fn = rep.weight_fn if rep else obj
    meta = {"normalizer": fn.normalizer, "total_mass": fn.integral(),
            "positive_mass": fn.integral(0.0, math.inf)}
    if rep is not None:
        meta["mean_of_x"] = rep.mean_of_X
        meta["negative_mass"] = rep.negative_mass
    se = fn.pointwise_se
    rows = []
    for i, v in enumerate(fn.values):
        s = None if se is None else se[i]
        lo = None if s is None else v - Z95 * s
        hi = None if s is None else v + Z95 * s
        rows.append((fn.knots[i + 1], v, s, lo, hi))
    return table_text(("x", "omega", "se", "ci_lo", "ci_hi"), rows, meta)


def lp_text(results) -> str:
    rows = []
    for r in results:
        lo, hi = r.ci
        rows.append((r.h, r.beta_h, r.se, lo, hi))
    return table_text(("horizon", "beta", "se", "ci_lo", "ci_hi"), rows)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_jsonable(v) for v in o.tolist()]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else repr(f)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    atomic_write(path, json_text(obj))


# --------------------------------------------------------------------------
# SVG

_W, _H = 640, 400
_L, _R, _T, _B = 70, 20, 30, 50


def _scale(lo, hi, a, b):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda v: a + (np.asarray(v, dtype=float) - lo) / (hi - lo) * (b - a)


def _ticks(lo, hi, k=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, k))


def _frame(xlo, xhi, ylo, yhi, xlabel, ylabel, title):
    sx = _scale(xlo, xhi, _L, _W - _R)
    sy = _scale(ylo, yhi, _H - _B, _T)
    out = [f'<rect x="{_L}" y="{_T}" width="{_W - _L - _R}" height="{_H - _T - _B}" '
           'fill="white" stroke="black"/>']
    for t in _ticks(xlo, xhi):
        x = float(sx(t))
        out.append(f'<line x1="{x:.2f}" y1="{_H - _B}" x2="{x:.2f}" y2="{_H - _B + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_H - _B + 18}" font-size="11" '
                   f'text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(ylo, yhi):
        y = float(sy(t))
        out.append(f'<line x1="{_L - 5}" y1="{y:.2f}" x2="{_L}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_L - 8}" y="{y + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{(_L + _W - _R) / 2}" y="{_H - 10}" font-size="13" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(_T + _H - _B) / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {(_T + _H - _B) / 2})">{escape(ylabel)}</text>')
    out.append(f'<text x="{_L}" y="{_T - 10}" font-size="13">{escape(title)}</text>')
    return sx, sy, out


def _doc(parts) -> str:
    body = "\n".join(parts)
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}">\n{body}\n</svg>\n')


def _pts(xs, ys):
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def weights_svg(obj, title: str = "weight function") -> str:
    rep = obj if isinstance(obj, WeightReport) else None
    fn = rep.weight_fn if rep else obj
    if not isinstance(fn, StepWeightFunction) or fn.values.size == 0:
        raise EmptyInput("weight function has no intervals")
    k, v = fn.knots, fn.values
    ylo, yhi = min(0.0, float(v.min())), max(0.0, float(v.max()))
    pad = 0.05 * (yhi - ylo or 1.0)
    sx, sy, parts = _frame(float(k[0]), float(k[-1]), ylo - pad, yhi + pad, "shock value x",
                           "weight", title)
    xs = np.r_[k[0], np.repeat(k[1:-1], 2), k[-1]]
    ys = np.repeat(v, 2)
    parts.append(f'<polyline class="weights" fill="none" stroke="steelblue" stroke-width="1.5" '
                 f'points="{_pts(sx(xs), sy(ys))}"/>')
    y0 = float(sy(0.0))
    parts.append(f'<line x1="{_L}" y1="{y0:.2f}" x2="{_W - _R}" y2="{y0:.2f}" stroke="gray" '
                 'stroke-dasharray="3,3"/>')
    mean = rep.mean_of_X if rep else None
    if mean is not None and k[0] <= mean <= k[-1]:
        xm = float(sx(mean))
        parts.append(f'<line class="mean" x1="{xm:.2f}" y1="{_T}" x2="{xm:.2f}" y2="{_H - _B}" '
                     'stroke="firebrick" stroke-dasharray="5,3"/>')
        parts.append(f'<text x="{xm + 4:.2f}" y="{_T + 14}" font-size="11" '
                     'fill="firebrick">mean</text>')
    pos = fn.integral(0.0, math.inf)
    parts.append(f'<text class="positive-mass" x="{_W - _R - 6}" y="{_T + 14}" font-size="12" '
                 f'text-anchor="end">ω&gt;0: {pos:.3f}</text>')
    return _doc(parts)


def lp_svg(results, title: str = "local projection") -> str:
    results = list(results)
    if not results:
        raise EmptyInput("no horizons to plot")
    h = np.array([r.h for r in results], dtype=float)
    b = np.array([r.beta_h for r in results])
    lo = np.array([r.ci[0] for r in results])
    hi = np.array([r.ci[1] for r in results])
    ylo, yhi = min(0.0, float(lo.min())), max(0.0, float(hi.max()))
    pad = 0.05 * (yhi - ylo or 1.0)
    sx, sy, parts = _frame(float(h.min()), float(h.max()), ylo - pad, yhi + pad, "horizon",
                           "coefficient", title)
    band = np.r_[sx(h), sx(h[::-1])], np.r_[sy(lo), sy(hi[::-1])]
    parts.append(f'<polygon class="band" fill="lightsteelblue" fill-opacity="0.5" stroke="none" '
                 f'points="{_pts(*band)}"/>')
    parts.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" '
                 f'points="{_pts(sx(h), sy(b))}"/>')
    for x, y in zip(sx(h), sy(b)):
        parts.append(f'<circle class="point" cx="{x:.2f}" cy="{y:.2f}" r="3" fill="steelblue"/>')
    return _doc(parts)


def emit_svg(obj, path, title: str | None = None) -> None:
    """Write a step chart of a weight function or a line chart of an LP path."""
    if isinstance(obj, (WeightReport, StepWeightFunction)):
        text = weights_svg(obj, title or "weight function")
    else:
        text = lp_svg(obj, title or "local projection")
    atomic_write(path, text)
