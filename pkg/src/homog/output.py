"""Artifact writers: CSV tables, JSON reports and a minimal log-log SVG plot.

Floats are printed with 9 significant digits so that reruns diff cleanly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DIGITS = 9


def fmt(x) -> str:
    """A number as text with 9 significant digits; complex values as a+bj."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (complex, np.complexfloating)):
        if x.imag == 0:
            return fmt(float(x.real))
        return f"{fmt(float(x.real))}{'+' if x.imag >= 0 else '-'}{fmt(abs(float(x.imag)))}j"
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return f"{x:.{DIGITS}g}"
    return str(x)


def to_jsonable(obj):
    """Numpy-aware conversion; floats are rounded to 9 significant digits."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        if obj.imag == 0:
            return to_jsonable(float(obj.real))
        return {"re": to_jsonable(float(obj.real)), "im": to_jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return float(f"{x:.{DIGITS}g}")
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def emit_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows), encoding="utf-8", newline="")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def json_text(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def emit_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json_text(obj), encoding="utf-8")
    return path


def svg_text(x: Sequence[float], y: Sequence[float], slope: float | None = None, intercept: float | None = None,
             title: str = "", width: int = 480, height: int = 360) -> str:
    """Log-log scatter of (x, y) with an optional fitted line log y = slope log x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log plot needs positive data")
    margin = 50
    lx, ly = np.log10(x), np.log10(y)
    if slope is not None and len(x):
        fit_y = (slope * np.log(x) + intercept) / np.log(10)
        lo_y, hi_y = min(ly.min(), fit_y.min()), max(ly.max(), fit_y.max())
    else:
        fit_y = None
        lo_y, hi_y = (ly.min(), ly.max()) if len(ly) else (0.0, 1.0)
    lo_x, hi_x = (lx.min(), lx.max()) if len(lx) else (0.0, 1.0)
    span_x = hi_x - lo_x or 1.0
    span_y = hi_y - lo_y or 1.0

    def px(v):
        return margin + (v - lo_x) / span_x * (width - 2 * margin)

    def py(v):
        return height - margin - (v - lo_y) / span_y * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">log10 eps</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {height / 2:.1f})">log10 error</text>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>')
    for a, b in zip(lx, ly):
        parts.append(f'<circle class="marker" cx="{px(a):.2f}" cy="{py(b):.2f}" r="4" fill="steelblue"/>')
    if fit_y is not None:
        i0, i1 = int(np.argmin(lx)), int(np.argmax(lx))
        parts.append(
            f'<line class="fit" x1="{px(lx[i0]):.2f}" y1="{py(fit_y[i0]):.2f}" x2="{px(lx[i1]):.2f}" y2="{py(fit_y[i1]):.2f}" '
            f'stroke="firebrick"/>'
        )
        parts.append(f'<text x="{width - margin}" y="{margin}" text-anchor="end" font-size="12">slope {fmt(slope)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(path, x, y, slope=None, intercept=None, title: str = "") -> Path:
    path = Path(path)
    path.write_text(svg_text(x, y, slope, intercept, title), encoding="utf-8")
    return path
