"""CSV and SVG emitters for per-model time series."""

from __future__ import annotations

import hashlib
import html
from pathlib import Path
from typing import Mapping

import numpy as np

CSV_HEADER = "t,model,population_norm,coherence_abs_norm,min_choi_eig,trace_dev"
COLUMNS = ("population_norm", "coherence_abs_norm", "min_choi_eig", "trace_dev")
PALETTE = ("#000000", "#1f5fbf", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#7f8c8d")


def _check_series(series: Mapping[str, Mapping[str, np.ndarray]]) -> np.ndarray:
    if not series:
        raise ValueError("no model series to write")
    t_ref = None
    for name, cols in series.items():
        t = np.asarray(cols["t"], dtype=float)
        if t.size == 0:
            raise ValueError(f"series for model {name!r} is empty")
        for col in COLUMNS:
            if np.asarray(cols[col]).shape != t.shape:
                raise ValueError(f"column {col!r} of model {name!r} is not aligned with its time grid")
        if t_ref is None:
            t_ref = t
        elif t.shape != t_ref.shape or np.any(t != t_ref):
            raise ValueError(f"model {name!r} uses a different time grid")
    return t_ref


def emit_csv(series: Mapping[str, Mapping[str, np.ndarray]], path) -> Path:
    """Write one row per (t, model), sorted by model then t."""
    t = _check_series(series)
    lines = [CSV_HEADER]
    for name in sorted(series):
        cols = series[name]
        values = [np.asarray(cols[c], dtype=float) for c in COLUMNS]
        for i in np.argsort(t, kind="stable"):
            lines.append(f"{t[i]:.12g},{name}," + ",".join(f"{v[i]:.15g}" for v in values))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def emit_svg(series: Mapping[str, Mapping[str, np.ndarray]], path, column: str = "population_norm",
             width: int = 640, height: int = 400) -> Path:
    """Self-contained SVG line chart with one polyline per model."""
    t = _check_series(series)
    margin = 50
    ys = np.concatenate([np.asarray(series[m][column], dtype=float) for m in series])
    y_lo, y_hi = float(min(ys.min(), 0.0)), float(max(ys.max(), 1.0))
    t_lo, t_hi = float(t.min()), float(t.max())
    sx = (width - 2 * margin) / ((t_hi - t_lo) or 1.0)
    sy = (height - 2 * margin) / ((y_hi - y_lo) or 1.0)

    def xy(tv, yv):
        return margin + (tv - t_lo) * sx, height - margin - (yv - y_lo) * sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" style="fill:#ffffff"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" '
        'style="stroke:#444444;stroke-width:1"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        'style="stroke:#444444;stroke-width:1"/>',
    ]
    if y_lo < 0:
        _, y0 = xy(t_lo, 0.0)
        parts.append(f'<line x1="{margin}" y1="{y0:.2f}" x2="{width - margin}" y2="{y0:.2f}" '
                     'style="stroke:#bbbbbb;stroke-width:1;stroke-dasharray:4 3"/>')
    for k, name in enumerate(sorted(series)):
        color = PALETTE[k % len(PALETTE)]
        yv = np.asarray(series[name][column], dtype=float)
        pts = " ".join("{:.2f},{:.2f}".format(*xy(a, b)) for a, b in zip(t, yv))
        parts.append(f'<polyline points="{pts}" style="fill:none;stroke:{color};stroke-width:1.5"/>')
        parts.append(f'<text x="{width - margin - 150}" y="{margin + 16 * k}" '
                     f'style="font-family:sans-serif;font-size:12px;fill:{color}">{html.escape(name)}</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 12}" '
                 f'style="font-family:sans-serif;font-size:12px;fill:#444444">t</text>')
    parts.append(f'<text x="8" y="{margin - 12}" '
                 f'style="font-family:sans-serif;font-size:12px;fill:#444444">{html.escape(column)}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8", newline="\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
