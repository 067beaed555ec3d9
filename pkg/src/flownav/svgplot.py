"""Dependency-free SVG line plots with machine-recoverable data.

Each figure maps data space to pixels through a single group transform;
the polylines inside keep raw data coordinates in their points attribute.
Tests recover the plotted series exactly instead of comparing pixels.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

WIDTH = 640
HEIGHT = 480
MARGIN_LEFT = 64
MARGIN_RIGHT = 150
MARGIN_TOP = 36
MARGIN_BOTTOM = 48

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    color: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x.shape != self.y.shape:
            raise ValueError("series x and y must have the same length")


def _extent(lo: float, hi: float) -> tuple[float, float]:
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ValueError("non-finite plot data")
    if hi <= lo:
        pad = 0.5 if lo == hi else 0.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.8g}"


def line_plot(
    path,
    series: list[Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    equal_aspect: bool = False,
) -> None:
    """Write a line plot; y grows upward in data space."""
    if not series:
        raise ValueError("nothing to plot")
    xmin, xmax = _extent(
        min(s.x.min() for s in series), max(s.x.max() for s in series)
    )
    ymin, ymax = _extent(
        min(s.y.min() for s in series), max(s.y.max() for s in series)
    )
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    sx = plot_w / (xmax - xmin)
    sy = plot_h / (ymax - ymin)
    if equal_aspect:
        sx = sy = min(sx, sy)
        xmid = 0.5 * (xmin + xmax)
        ymid = 0.5 * (ymin + ymax)
        xmin, xmax = xmid - 0.5 * plot_w / sx, xmid + 0.5 * plot_w / sx
        ymin, ymax = ymid - 0.5 * plot_h / sy, ymid + 0.5 * plot_h / sy

    def px(x):
        return MARGIN_LEFT + (x - xmin) * sx

    def py(y):
        return MARGIN_TOP + (ymax - y) * sy

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#888"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH / 2:g}" y="22" text-anchor="middle" '
            f'font-size="15">{_escape(title)}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{MARGIN_LEFT + plot_w / 2:g}" y="{HEIGHT - 12}" '
            f'text-anchor="middle" font-size="12">{_escape(xlabel)}</text>'
        )
    if ylabel:
        cx, cy = 18, MARGIN_TOP + plot_h / 2
        out.append(
            f'<text x="{cx}" y="{cy:g}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 {cx} {cy:g})">{_escape(ylabel)}</text>'
        )
    for xt in np.linspace(xmin, xmax, 5):
        out.append(
            f'<text x="{px(xt):.1f}" y="{MARGIN_TOP + plot_h + 16}" '
            f'text-anchor="middle" font-size="10">{xt:.3g}</text>'
        )
    for yt in np.linspace(ymin, ymax, 5):
        out.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{py(yt) + 3:.1f}" '
            f'text-anchor="end" font-size="10">{yt:.3g}</text>'
        )

    tx = MARGIN_LEFT - xmin * sx
    ty = MARGIN_TOP + ymax * sy
    out.append(
        f'<g transform="translate({tx:.8g} {ty:.8g}) scale({sx:.8g} {-sy:.8g})" '
        f'clip-path="none">'
    )
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(s.x, s.y))
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
            f'vector-effect="non-scaling-stroke" data-label="{_escape(s.label)}" '
            f'points="{pts}"/>'
        )
    out.append("</g>")
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        yrow = MARGIN_TOP + 14 + 16 * i
        xleg = WIDTH - MARGIN_RIGHT + 10
        out.append(
            f'<line x1="{xleg}" y1="{yrow - 4}" x2="{xleg + 18}" y2="{yrow - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{xleg + 24}" y="{yrow}" font-size="11">{_escape(s.label)}</text>'
        )
    out.append("</svg>")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def parse_series(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Recover plotted series from a figure written by line_plot."""
    root = ET.parse(path).getroot()
    found = {}
    for el in root.iter():
        if not el.tag.endswith("polyline"):
            continue
        label = el.get("data-label")
        if label is None:
            continue
        pts = el.get("points", "").split()
        xy = np.array([[float(c) for c in p.split(",")] for p in pts])
        xy = xy.reshape(-1, 2)
        found[label] = (xy[:, 0], xy[:, 1])
    return found
