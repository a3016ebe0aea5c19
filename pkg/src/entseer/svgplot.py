"""Minimal SVG scatter and line plots written as plain text."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
]

W, H = 640, 480
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 60


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


class _Frame:
    def __init__(self, xs, ys):
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        finite_x = xs[np.isfinite(xs)]
        finite_y = ys[np.isfinite(ys)]
        self.x0, self.x1 = (finite_x.min(), finite_x.max()) if finite_x.size else (0.0, 1.0)
        self.y0, self.y1 = (finite_y.min(), finite_y.max()) if finite_y.size else (0.0, 1.0)
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        pad_x = 0.04 * (self.x1 - self.x0)
        pad_y = 0.04 * (self.y1 - self.y0)
        self.x0, self.x1 = self.x0 - pad_x, self.x1 + pad_x
        self.y0, self.y1 = self.y0 - pad_y, self.y1 + pad_y

    def px(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)

    def py(self, y):
        return H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)


def _axes(fr: _Frame, title, xlabel, ylabel) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" '
        'fill="none" stroke="black"/>',
        f'<text x="{(W - RIGHT + LEFT) / 2:.1f}" y="{TOP - 14}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<text x="{(W - RIGHT + LEFT) / 2:.1f}" y="{H - 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{escape(xlabel)}</text>',
        f'<text x="18" y="{(H - BOTTOM + TOP) / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" transform="rotate(-90 18 {(H - BOTTOM + TOP) / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(fr.x0, fr.x1):
        x = fr.px(t)
        out.append(f'<line x1="{x:.1f}" y1="{H - BOTTOM}" x2="{x:.1f}" y2="{H - BOTTOM + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{H - BOTTOM + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{t:.3g}</text>')
    for t in _ticks(fr.y0, fr.y1):
        y = fr.py(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.1f}" x2="{LEFT}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{t:.3g}</text>')
    return out


def _legend(names) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = TOP + 10 + 18 * i
        col = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{W - RIGHT + 14}" y="{y - 8}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{W - RIGHT + 30}" y="{y + 1}" font-family="sans-serif" font-size="12">'
                   f'{escape(str(name))}</text>')
    return out


def scatter_svg(x, y, groups=None, title="", xlabel="x0", ylabel="x1", radius=2.0) -> str:
    """Scatter plot with one colour per group (groups sorted for a stable legend)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    groups = np.full(len(x), "") if groups is None else np.asarray(groups).astype(str)
    names = sorted(set(groups.tolist()))
    fr = _Frame(x, y)
    out = _axes(fr, title, xlabel, ylabel)
    for gi, name in enumerate(names):
        col = PALETTE[gi % len(PALETTE)]
        for xi, yi in zip(x[groups == name], y[groups == name]):
            if not (np.isfinite(xi) and np.isfinite(yi)):
                continue
            out.append(f'<circle cx="{fr.px(xi):.2f}" cy="{fr.py(yi):.2f}" r="{radius}" fill="{col}" '
                       'fill-opacity="0.7"/>')
    if names != [""]:
        out += _legend(names)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_svg(series: dict, title="", xlabel="x", ylabel="y", hlines=()) -> str:
    """Polyline per named series; ``series[name] = (xs, ys)``.  ``hlines`` draws dashed references."""
    all_x = np.concatenate([np.asarray(v[0], float) for v in series.values()]) if series else np.zeros(1)
    all_y = np.concatenate([np.asarray(v[1], float) for v in series.values()] + [np.asarray(hlines, float)])
    fr = _Frame(all_x, all_y)
    out = _axes(fr, title, xlabel, ylabel)
    for h in hlines:
        out.append(f'<line x1="{LEFT}" y1="{fr.py(h):.2f}" x2="{W - RIGHT}" y2="{fr.py(h):.2f}" '
                   'stroke="gray" stroke-dasharray="4 3"/>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        col = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{fr.px(a):.2f},{fr.py(b):.2f}" for a, b in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for a, b in zip(xs, ys):
            out.append(f'<circle cx="{fr.px(a):.2f}" cy="{fr.py(b):.2f}" r="3" fill="{col}"/>')
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)
