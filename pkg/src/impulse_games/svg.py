"""Minimal static SVG line charts (polylines, axes, ticks, legend)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "Panel", "write_svg", "render_svg"]

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
PANEL_W, PANEL_H = 420, 300
MARGIN = dict(left=62, right=16, top=34, bottom=46)


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    yerr: np.ndarray | None = None
    markers: bool = False
    dashed: bool = False


@dataclass
class Panel:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    series: list = field(default_factory=list)
    logx: bool = False
    logy: bool = False
    note: str = ""


def _fmt(v):
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _log_ticks(lo, hi):
    a, b = math.floor(lo), math.ceil(hi)
    ticks = [float(k) for k in range(a, b + 1) if lo - 1e-9 <= k <= hi + 1e-9]
    if len(ticks) < 2:
        ticks = [lo, hi]
    return ticks


def _prep(v, log):
    v = np.asarray(v, dtype=float)
    if log:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v > 0, np.log10(v), np.nan)
    return v


def _panel_svg(panel: Panel, ox, oy):
    out = []
    pw = PANEL_W - MARGIN["left"] - MARGIN["right"]
    ph = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
    x0, y0 = ox + MARGIN["left"], oy + MARGIN["top"]
    xs = [_prep(s.x, panel.logx) for s in panel.series]
    ys = [_prep(s.y, panel.logy) for s in panel.series]
    allx = np.concatenate([a[np.isfinite(a)] for a in xs]) if xs else np.array([])
    ally = np.concatenate([a[np.isfinite(a)] for a in ys]) if ys else np.array([])
    for s, y in zip(panel.series, ys):
        if s.yerr is not None and not panel.logy:
            e = np.asarray(s.yerr, float)
            ok = np.isfinite(y) & np.isfinite(e)
            ally = np.concatenate([ally, (y + e)[ok], (y - e)[ok]])
    if len(allx) == 0 or len(ally) == 0:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    else:
        xlo, xhi = float(allx.min()), float(allx.max())
        ylo, yhi = float(ally.min()), float(ally.max())
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def px(v):
        return x0 + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return y0 + ph - (v - ylo) / (yhi - ylo) * ph

    out.append(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    xt = _log_ticks(xlo, xhi) if panel.logx else _nice_ticks(xlo, xhi)
    yt = _log_ticks(ylo, yhi) if panel.logy else _nice_ticks(ylo, yhi)
    for t in xt:
        X = px(t)
        lab = _fmt(10 ** t) if panel.logx else _fmt(t)
        out.append(f'<line x1="{X:.2f}" y1="{y0 + ph}" x2="{X:.2f}" y2="{y0 + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{X:.2f}" y="{y0 + ph + 16}" font-size="10" text-anchor="middle">{lab}</text>')
    for t in yt:
        Y = py(t)
        lab = _fmt(10 ** t) if panel.logy else _fmt(t)
        out.append(f'<line x1="{x0 - 4}" y1="{Y:.2f}" x2="{x0}" y2="{Y:.2f}" stroke="#444"/>')
        out.append(f'<line x1="{x0}" y1="{Y:.2f}" x2="{x0 + pw}" y2="{Y:.2f}" stroke="#eee"/>')
        out.append(f'<text x="{x0 - 6}" y="{Y + 3:.2f}" font-size="10" text-anchor="end">{lab}</text>')
    if panel.title:
        out.append(f'<text x="{x0 + pw / 2}" y="{oy + 20}" font-size="13" text-anchor="middle">'
                   f'{escape(panel.title)}</text>')
    if panel.xlabel:
        out.append(f'<text x="{x0 + pw / 2}" y="{oy + PANEL_H - 8}" font-size="11" text-anchor="middle">'
                   f'{escape(panel.xlabel)}</text>')
    if panel.ylabel:
        cx, cy = ox + 14, y0 + ph / 2
        out.append(f'<text x="{cx}" y="{cy}" font-size="11" text-anchor="middle" '
                   f'transform="rotate(-90 {cx} {cy})">{escape(panel.ylabel)}</text>')
    for k, (s, x, y) in enumerate(zip(panel.series, xs, ys)):
        col = COLORS[k % len(COLORS)]
        dash = ' stroke-dasharray="5,3"' if s.dashed else ""
        # gaps (NaN) split the polyline
        ok = np.isfinite(x) & np.isfinite(y)
        runs, cur = [], []
        for i in range(len(x)):
            if ok[i]:
                cur.append(f"{px(x[i]):.2f},{py(y[i]):.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.6"{dash} points="{" ".join(run)}"/>')
        if s.markers:
            for i in np.flatnonzero(ok):
                out.append(f'<circle cx="{px(x[i]):.2f}" cy="{py(y[i]):.2f}" r="2.5" fill="{col}"/>')
        if s.yerr is not None and not panel.logy:
            e = np.asarray(s.yerr, float)
            for i in np.flatnonzero(ok & np.isfinite(e)):
                X = px(x[i])
                out.append(f'<line x1="{X:.2f}" y1="{py(y[i] - e[i]):.2f}" x2="{X:.2f}" '
                           f'y2="{py(y[i] + e[i]):.2f}" stroke="{col}"/>')
    labelled = [(k, s) for k, s in enumerate(panel.series) if s.label]
    for j, (k, s) in enumerate(labelled):
        col = COLORS[k % len(COLORS)]
        ly = y0 + 12 + 14 * j
        lx = x0 + pw - 70
        out.append(f'<line x1="{lx}" y1="{ly - 3}" x2="{lx + 16}" y2="{ly - 3}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 20}" y="{ly}" font-size="10">{escape(s.label)}</text>')
    if panel.note:
        out.append(f'<text x="{x0 + 6}" y="{y0 + ph - 8}" font-size="10" fill="#333">{escape(panel.note)}</text>')
    return out


def render_svg(panels, title: str = "") -> str:
    if isinstance(panels, Panel):
        panels = [panels]
    top = 24 if title else 0
    w = PANEL_W * len(panels)
    h = PANEL_H + top
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             f'viewBox="0 0 {w} {h}" font-family="sans-serif">',
             f'<rect width="{w}" height="{h}" fill="white"/>']
    if title:
        parts.append(f'<text x="{w / 2}" y="17" font-size="14" text-anchor="middle">{escape(title)}</text>')
    for i, p in enumerate(panels):
        parts.extend(_panel_svg(p, i * PANEL_W, top))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, panels, title: str = ""):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_svg(panels, title))
