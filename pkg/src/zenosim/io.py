"""Result files: CSV tables, JSON with the full configuration, and SVG plots.

Every artifact carries the configuration hash and the ensemble seed, and
all writers are deterministic, so equal hashes give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .protocols import ScanResult

SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
AXIS_LABELS = {
    "N": "number of measurements N",
    "tau": "pulse width (us)",
    "I": "normalized intensity I",
    "T": "total free-evolution time (us)",
}

Results = Union[ScanResult, Mapping[str, ScanResult]]


def _jsonable(obj):
    """Replace non-finite floats by None and numpy scalars by Python values."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _series(results: Results) -> dict:
    if isinstance(results, ScanResult):
        return {"": results}
    if not results:
        raise ValueError("no results to emit")
    return {str(k): v for k, v in results.items()}


def scan_csv(sr: ScanResult, config_hash: str = "", seed: Optional[int] = None) -> str:
    """CSV text: a ``#`` provenance line, then param,loss_prob,stderr,mean_final_x."""
    if not sr.points:
        raise ValueError("empty scan result")
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash} seed={seed} protocol={sr.protocol} "
              f"axis={sr.axis}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "loss_prob", "stderr", "mean_final_x"])
    for p in sr.points:
        w.writerow([repr(float(p.param)), repr(float(p.loss_prob)), repr(float(p.stderr)),
                    repr(float(p.mean_final_x))])
    return buf.getvalue()


def results_json(results: Results, config: Optional[dict] = None, config_hash: str = "",
                 seed: Optional[int] = None) -> str:
    series = _series(results)
    body = {"config_hash": config_hash, "seed": seed, "config": config,
            "series": {k: sr.to_dict() for k, sr in series.items()}}
    return dumps(body)


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _fmt(v):
    return f"{v:.6g}"


def scan_svg(results: Results, title: str = "", width: int = 640, height: int = 420) -> str:
    """Line plot of loss probability with error bars, one polyline per series."""
    series = _series(results)
    first = next(iter(series.values()))
    xs = np.concatenate([sr.params for sr in series.values()])
    lo_y = min(0.0, float(np.min([np.min(sr.loss - sr.stderr) for sr in series.values()])))
    hi_y = max(1.0, float(np.max([np.max(sr.loss + sr.stderr) for sr in series.values()])))
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    ml, mr, mt, mb = 70, 20, 40, 60
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (1 - (v - lo_y) / (hi_y - lo_y)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        if x0 <= t <= x1:
            out.append(f'<line x1="{sx(t):.2f}" y1="{mt + ph}" x2="{sx(t):.2f}" '
                       f'y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{sx(t):.2f}" y="{mt + ph + 18}" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(lo_y, hi_y):
        if lo_y <= t <= hi_y:
            out.append(f'<line x1="{ml - 5}" y1="{sy(t):.2f}" x2="{ml}" y2="{sy(t):.2f}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.2f}" '
                       f'text-anchor="end">{_fmt(t)}</text>')
    xlabel = AXIS_LABELS.get(first.axis, first.axis)
    out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 15}" '
               f'text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{mt + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {mt + ph / 2:.2f})">atom loss probability</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2:.2f}" y="22" text-anchor="middle">{title}</text>')
    for i, (label, sr) in enumerate(series.items()):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        pts = " ".join(f"{sx(p.param):.2f},{sy(p.loss_prob):.2f}" for p in sr.points)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{pts}"/>')
        for p in sr.points:
            cx = sx(p.param)
            out.append(f'<line x1="{cx:.2f}" y1="{sy(p.loss_prob - p.stderr):.2f}" '
                       f'x2="{cx:.2f}" y2="{sy(p.loss_prob + p.stderr):.2f}" '
                       f'stroke="{color}"/>')
            out.append(f'<circle cx="{cx:.2f}" cy="{sy(p.loss_prob):.2f}" r="2.5" '
                       f'fill="{color}"/>')
        if label:
            ly = mt + 16 + 16 * i
            out.append(f'<text x="{ml + pw - 10}" y="{ly}" text-anchor="end" '
                       f'fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_results(results: Results, fmt, directory, stem: str = "result",
                 config=None) -> list[Path]:
    """Write scan results as CSV, JSON and/or SVG files; returns the paths.

    Parameters
    ----------
    results : ScanResult or mapping of label to ScanResult
        Mappings produce one CSV per series (``{stem}_{label}.csv``) and a
        single JSON and SVG file.
    fmt : str or sequence of str
        Any of ``"csv"``, ``"json"``, ``"svg"``.
    config : RunConfig, optional
        Embedded in the JSON output; its hash and seed head every file.
    """
    fmts = [fmt] if isinstance(fmt, str) else list(fmt)
    bad = [f for f in fmts if f not in ("csv", "json", "svg")]
    if bad:
        raise ValueError(f"unknown output format(s) {bad}")
    series = _series(results)
    chash = config.config_hash() if config is not None else ""
    seed = config.seed if config is not None else None
    cdict = config.to_dict() if config is not None else None
    directory = Path(directory)
    paths = []
    for f in fmts:
        if f == "csv":
            for label, sr in series.items():
                name = f"{stem}_{label}.csv" if label else f"{stem}.csv"
                paths.append(directory / name)
                _write(paths[-1], scan_csv(sr, chash, seed))
        elif f == "json":
            paths.append(directory / f"{stem}.json")
            _write(paths[-1], results_json(results, cdict, chash, seed))
        else:
            paths.append(directory / f"{stem}.svg")
            text = scan_svg(results, f"{stem} (config {chash})" if chash else stem)
            _write(paths[-1], f"<!-- config_hash={chash} seed={seed} -->\n" + text)
    return paths


def read_xy_csv(path_or_text, x_col: Optional[str] = None, y_col: Optional[str] = None):
    """Read ``param, value[, stderr]`` columns from a CSV file or text.

    Lines starting with ``#`` are skipped.  A header row is optional; with a
    header, ``loss_prob`` (or ``value``) and ``stderr`` (or ``sigma``) are
    picked by name; without one the first three columns are used.

    Returns
    -------
    (x, y, sigma) with ``sigma`` None when no uncertainty column exists.
    """
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str)
                                          and "\n" not in path_or_text
                                          and os.path.exists(path_or_text)):
        with open(path_or_text, newline="") as fh:
            text = fh.read()
    rows = [r for r in csv.reader(line for line in text.splitlines()
                                  if line.strip() and not line.lstrip().startswith("#"))]
    if not rows:
        raise ValueError("no data rows in CSV")
    header = None
    try:
        float(rows[0][0])
    except ValueError:
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    ix, iy, isd = 0, 1, 2
    if header:
        def pick(names, default):
            for n in names:
                if n in header:
                    return header.index(n)
            return default
        ix = pick([x_col] if x_col else ["param", "x"], 0)
        iy = pick([y_col] if y_col else ["loss_prob", "value", "y"], 1)
        isd = pick(["stderr", "sigma"], None)
    data = np.array([[float(v) for v in r] for r in rows])
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError("CSV needs at least two columns")
    sigma = data[:, isd] if isd is not None and data.shape[1] > isd else None
    return data[:, ix], data[:, iy], sigma
