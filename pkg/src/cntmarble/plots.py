"""Self-contained SVG figures for traces, written by hand for byte-stable output."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .protocol import Trace
from .stats import detect_onset

__all__ = ["PLOT_STYLES", "render_plots"]

PLOT_STYLES = ("resistance_vs_time", "iv_loop")

WIDTH, HEIGHT = 720, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 20, 30, 50
PHASE_FILLS = ("#d9e8f5", "#f7dfc9", "#dcefd6", "#efd9ee")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, x0, x1, y0, y1):
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.w = WIDTH - MARGIN_L - MARGIN_R
        self.h = HEIGHT - MARGIN_T - MARGIN_B

    def px(self, x):
        return MARGIN_L + (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y):
        return MARGIN_T + (self.y1 - np.asarray(y, dtype=float)) / (self.y1 - self.y0) * self.h


def _points(xs: np.ndarray, ys: np.ndarray) -> str:
    return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))


def _axes(frame: _Frame, xlabel: str, ylabel: str, title: str,
          xticks: list[tuple[float, str]], yticks: list[tuple[float, str]]) -> list[str]:
    left, right = MARGIN_L, WIDTH - MARGIN_R
    top, bottom = MARGIN_T, HEIGHT - MARGIN_B
    out = [f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
           f'fill="none" stroke="#000"/>']
    for value, label in xticks:
        x = _fmt(float(frame.px(value)))
        out.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 5}" stroke="#000"/>')
        out.append(f'<text x="{x}" y="{bottom + 18}" text-anchor="middle">{escape(label)}</text>')
    for value, label in yticks:
        y = _fmt(float(frame.py(value)))
        out.append(f'<line x1="{left - 5}" y1="{y}" x2="{left}" y2="{y}" stroke="#000"/>')
        out.append(f'<text x="{left - 8}" y="{y}" text-anchor="end" '
                   f'dominant-baseline="middle">{escape(label)}</text>')
    out.append(f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 12}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>')
    out.append(f'<text x="{(left + right) / 2:.1f}" y="{top - 10}" '
               f'text-anchor="middle">{escape(title)}</text>')
    return out


def _linear_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + k * (hi - lo) / (n - 1) for k in range(n)]


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>', *body,
                      "</svg>"]) + "\n"


def _resistance_vs_time(trace: Trace) -> str:
    r = np.maximum(trace.r, 1e-12)
    logr = np.log10(r)
    lo, hi = math.floor(float(logr.min())), math.ceil(float(logr.max()))
    if hi == lo:
        hi = lo + 1
    t0, t1 = float(trace.t.min()), float(trace.t.max())
    frame = _Frame(t0, t1, lo, hi)

    body = []
    phases = trace.phases()
    for k in phases:
        start = trace.phase_start(k)
        later = [trace.phase_start(j) for j in phases if j > k]
        end = later[0] if later else t1
        x0, x1 = float(frame.px(max(start, t0))), float(frame.px(min(end, t1)))
        body.append(f'<rect class="phase" x="{_fmt(x0)}" y="{MARGIN_T}" '
                    f'width="{_fmt(x1 - x0)}" height="{frame.h}" '
                    f'fill="{PHASE_FILLS[k % len(PHASE_FILLS)]}"/>')
        body.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{MARGIN_T + 14}" '
                    f'text-anchor="middle">s{k + 1}</text>')

    yticks = [(float(d), f"1e{d}") for d in range(lo, hi + 1)]
    xticks = [(v, f"{v:g}") for v in _linear_ticks(t0, t1)]
    body += _axes(frame, "time (s)", "resistance (ohm)", "Resistance at pulse peaks",
                  xticks, yticks)
    body.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1" '
                f'points="{_points(frame.px(trace.t), frame.py(logr))}"/>')

    for k in phases:
        try:
            onset = detect_onset(trace, k)
        except ValueError:
            onset = None
        if onset is None:
            continue
        tx = trace.phase_start(k) + onset
        j = int(np.flatnonzero((trace.phase == k) & (trace.t >= tx - 1e-9))[0])
        cx, cy = _fmt(float(frame.px(trace.t[j]))), _fmt(float(frame.py(logr[j])))
        body.append(f'<circle class="onset" cx="{cx}" cy="{cy}" r="4" fill="none" '
                    f'stroke="#c0392b" stroke-width="1.5"/>')
    return _document(body)


def _iv_loop(trace: Trace) -> str:
    v, i = trace.v, trace.i
    vmax = max(float(np.abs(v).max()), 1e-12)
    imax = max(float(np.abs(i).max()), 1e-15)
    frame = _Frame(-vmax, vmax, -imax, imax)
    xticks = [(x, f"{x:g}") for x in _linear_ticks(-vmax, vmax)]
    yticks = [(y, f"{y:.3g}") for y in _linear_ticks(-imax, imax)]
    body = _axes(frame, "voltage (V)", "current (A)", "Current-voltage sweep", xticks, yticks)
    zx, zy = _fmt(float(frame.px(0.0))), _fmt(float(frame.py(0.0)))
    body.append(f'<line x1="{MARGIN_L}" y1="{zy}" x2="{WIDTH - MARGIN_R}" y2="{zy}" '
                f'stroke="#999" stroke-dasharray="3,3"/>')
    body.append(f'<line x1="{zx}" y1="{MARGIN_T}" x2="{zx}" y2="{HEIGHT - MARGIN_B}" '
                f'stroke="#999" stroke-dasharray="3,3"/>')
    # close the loop back onto its first sample
    xs = np.append(frame.px(v), frame.px(v[0]))
    ys = np.append(frame.py(i), frame.py(i[0]))
    body.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1" '
                f'points="{_points(xs, ys)}"/>')
    return _document(body)


def render_plots(trace: Trace, style: str) -> str:
    """Render ``trace`` as an SVG document in one of ``PLOT_STYLES``."""
    if style not in PLOT_STYLES:
        raise ValueError(f"unknown plot style {style!r}; expected one of {PLOT_STYLES}")
    if len(trace) == 0:
        raise ValueError("cannot plot an empty trace")
    if style == "resistance_vs_time":
        return _resistance_vs_time(trace)
    return _iv_loop(trace)
