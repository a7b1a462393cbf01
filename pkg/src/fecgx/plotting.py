"""SVG overlay plots: reference trace on top, extracted trace below."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import ShapeError
from .signals import Signal

__all__ = ["emit_plot"]

_WIDTH = 900
_PANEL_H = 220
_MARGIN = 45


def _polyline_points(samples: np.ndarray, x0, y0, w, h) -> str:
    n = samples.size
    lo, hi = samples.min(), samples.max()
    span = hi - lo if hi > lo else 1.0
    xs = x0 + np.arange(n) * (w / max(1, n - 1))
    ys = y0 + h - (samples - lo) / span * h
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def emit_plot(truth: Signal, extracted: Signal, path):
    """Write a two-panel SVG: shared time base, one polyline per panel."""
    a = np.asarray(truth.samples, dtype=np.float64)
    b = np.asarray(extracted.samples, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("cannot plot empty signals")
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    w = _WIDTH - 2 * _MARGIN
    h = _PANEL_H - 2 * _MARGIN
    total_h = 2 * _PANEL_H
    duration = a.size / truth.sample_rate_hz
    panels = []
    for row, (label, samples) in enumerate(
            (("ground truth", a), ("estimated fECG", b))):
        y0 = row * _PANEL_H + _MARGIN
        pts = _polyline_points(samples, _MARGIN, y0, w, h)
        panels.append(
            f'<g><text x="{_MARGIN}" y="{y0 - 12}" font-size="14" '
            f'font-family="sans-serif">{label}</text>'
            f'<rect x="{_MARGIN}" y="{y0}" width="{w}" height="{h}" '
            f'fill="none" stroke="#999"/>'
            f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" '
            f'stroke-width="1"/></g>')
    x_label = (f'<text x="{_WIDTH // 2}" y="{total_h - 8}" font-size="13" '
               f'font-family="sans-serif" text-anchor="middle">'
               f'time (0 to {duration:.3g} s)</text>')
    svg = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
           f'height="{total_h}" viewBox="0 0 {_WIDTH} {total_h}">\n'
           + "\n".join(panels) + "\n" + x_label + "\n</svg>\n")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".svg-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(svg)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
