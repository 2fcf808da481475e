"""Minimal deterministic SVG figures: heatmaps, line plots, histograms."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# 256-step perceptually ordered colormap (viridis), low to high
_VIRIDIS = """
    440154 440256 450457 450559 46075a 46085c 460a5d 460b5e
    470d60 470e61 471063 471164 471365 481467 481668 481769
    48186a 481a6c 481b6d 481c6e 481d6f 481f70 482071 482173
    482374 482475 482576 482677 482878 482979 472a7a 472c7a
    472d7b 472e7c 472f7d 46307e 46327e 46337f 463480 453581
    453781 453882 443983 443a83 443b84 433d84 433e85 423f85
    424086 424186 414287 414487 404588 404688 3f4788 3f4889
    3e4989 3e4a89 3e4c8a 3d4d8a 3d4e8a 3c4f8a 3c508b 3b518b
    3b528b 3a538b 3a548c 39558c 39568c 38588c 38598c 375a8c
    375b8d 365c8d 365d8d 355e8d 355f8d 34608d 34618d 33628d
    33638d 32648e 32658e 31668e 31678e 31688e 30698e 306a8e
    2f6b8e 2f6c8e 2e6d8e 2e6e8e 2e6f8e 2d708e 2d718e 2c718e
    2c728e 2c738e 2b748e 2b758e 2a768e 2a778e 2a788e 29798e
    297a8e 297b8e 287c8e 287d8e 277e8e 277f8e 27808e 26818e
    26828e 26828e 25838e 25848e 25858e 24868e 24878e 23888e
    23898e 238a8d 228b8d 228c8d 228d8d 218e8d 218f8d 21908d
    21918c 20928c 20928c 20938c 1f948c 1f958b 1f968b 1f978b
    1f988b 1f998a 1f9a8a 1e9b8a 1e9c89 1e9d89 1f9e89 1f9f88
    1fa088 1fa188 1fa187 1fa287 20a386 20a486 21a585 21a685
    22a785 22a884 23a983 24aa83 25ab82 25ac82 26ad81 27ad81
    28ae80 29af7f 2ab07f 2cb17e 2db27d 2eb37c 2fb47c 31b57b
    32b67a 34b679 35b779 37b878 38b977 3aba76 3bbb75 3dbc74
    3fbc73 40bd72 42be71 44bf70 46c06f 48c16e 4ac16d 4cc26c
    4ec36b 50c46a 52c569 54c568 56c667 58c765 5ac864 5cc863
    5ec962 60ca60 63cb5f 65cb5e 67cc5c 69cd5b 6ccd5a 6ece58
    70cf57 73d056 75d054 77d153 7ad151 7cd250 7fd34e 81d34d
    84d44b 86d549 89d548 8bd646 8ed645 90d743 93d741 95d840
    98d83e 9bd93c 9dd93b a0da39 a2da37 a5db36 a8db34 aadc32
    addc30 b0dd2f b2dd2d b5de2b b8de29 bade28 bddf26 c0df25
    c2df23 c5e021 c8e020 cae11f cde11d d0e11c d2e21b d5e21a
    d8e219 dae319 dde318 dfe318 e2e418 e5e419 e7e419 eae51a
    ece51b efe51c f1e51d f4e61e f6e620 f8e621 fbe723 fde725
""".split()
COLORMAP = tuple("#" + c for c in _VIRIDIS)

LINE_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
               "#7f7f7f", "#bcbd22", "#17becf")
MISSING_COLOR = "#d9d9d9"

W, H = 640, 480
LEFT, RIGHT, TOP, BOTTOM = 80, 110, 40, 60


def _n(x: float) -> str:
    return format(float(x), ".2f")


def color_for(value: float, lo: float, hi: float) -> str:
    if not np.isfinite(value):
        return MISSING_COLOR
    t = 0.0 if hi <= lo else (value - lo) / (hi - lo)
    return COLORMAP[int(np.clip(round(t * 255), 0, 255))]


def _ticks(lo: float, hi: float, log: bool, n: int = 5) -> list:
    if log:
        a, b = np.floor(np.log10(lo)), np.ceil(np.log10(hi))
        t = [10.0 ** k for k in np.arange(a, b + 1) if lo * (1 - 1e-9) <= 10.0 ** k <= hi * (1 + 1e-9)]
        return t if len(t) >= 2 else list(np.geomspace(lo, hi, 3))
    return list(np.linspace(lo, hi, n))


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim, log_x=False, log_y=False):
        self.parts = []
        self.xlim, self.ylim = xlim, ylim
        self.log_x, self.log_y = log_x, log_y
        self.pw, self.ph = W - LEFT - RIGHT, H - TOP - BOTTOM
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def _frac(self, v, lim, log):
        lo, hi = lim
        if log:
            v, lo, hi = np.log10(v), np.log10(lo), np.log10(hi)
        return 0.5 if hi == lo else (v - lo) / (hi - lo)

    def x(self, v) -> float:
        return LEFT + self._frac(v, self.xlim, self.log_x) * self.pw

    def y(self, v) -> float:
        return TOP + (1.0 - self._frac(v, self.ylim, self.log_y)) * self.ph

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, size=11, anchor="start", extra=""):
        self.add(f'<text x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}" font-size="{size}"{extra}>'
                 f'{escape(str(s))}</text>')

    def axes(self):
        y0 = TOP + self.ph
        self.add(f'<rect x="{LEFT}" y="{TOP}" width="{self.pw}" height="{self.ph}" fill="none" '
                 f'stroke="black"/>')
        for v in _ticks(*self.xlim, self.log_x):
            px = self.x(v)
            self.add(f'<line x1="{_n(px)}" y1="{y0}" x2="{_n(px)}" y2="{y0 + 5}" stroke="black"/>')
            self.text(px, y0 + 18, format(v, ".3g"), anchor="middle")
        for v in _ticks(*self.ylim, self.log_y):
            py = self.y(v)
            self.add(f'<line x1="{LEFT - 5}" y1="{_n(py)}" x2="{LEFT}" y2="{_n(py)}" stroke="black"/>')
            self.text(LEFT - 8, py + 4, format(v, ".3g"), anchor="end")
        self.text(LEFT + self.pw / 2, H - 15, self.xlabel, 13, "middle")
        cy = TOP + self.ph / 2
        self.text(18, cy, self.ylabel, 13, "middle", f' transform="rotate(-90 18 {_n(cy)})"')
        self.text(LEFT + self.pw / 2, 24, self.title, 14, "middle")

    def render(self) -> str:
        head = (f'<?xml version="1.0" encoding="UTF-8"?>\n<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
                f'<rect width="{W}" height="{H}" fill="white"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _edges(values, log: bool) -> np.ndarray:
    """Cell boundaries halfway between nodes (in log space for log axes)."""
    v = np.log10(values) if log else np.asarray(values, dtype=float)
    if v.size == 1:
        e = np.array([v[0] - 0.5, v[0] + 0.5])
    else:
        mid = 0.5 * (v[1:] + v[:-1])
        e = np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])
    return 10.0 ** e if log else e


def heatmap_svg(x, y, z, title="", xlabel="", ylabel="", log_x=False, log_y=False,
                marker=None, colorbar_label="") -> str:
    """Cells z[i, j] at (x[i], y[j]); a black dot at ``marker=(x, y)`` if inside the plot."""
    x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    if z.shape != (x.size, y.size):
        raise ValueError("z must have shape (len(x), len(y))")
    xe, ye = _edges(x, log_x), _edges(y, log_y)
    c = _Canvas(title, xlabel, ylabel, (xe[0], xe[-1]), (ye[0], ye[-1]), log_x, log_y)
    finite = z[np.isfinite(z)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    for i in range(x.size):
        for j in range(y.size):
            x0, x1 = c.x(xe[i]), c.x(xe[i + 1])
            y0, y1 = c.y(ye[j + 1]), c.y(ye[j])
            c.add(f'<rect x="{_n(x0)}" y="{_n(y0)}" width="{_n(x1 - x0)}" height="{_n(y1 - y0)}" '
                  f'fill="{color_for(z[i, j], lo, hi)}"/>')
    if marker is not None:
        mx, my = marker
        if xe[0] <= mx <= xe[-1] and ye[0] <= my <= ye[-1]:
            c.add(f'<circle cx="{_n(c.x(mx))}" cy="{_n(c.y(my))}" r="5" fill="black"/>')
    c.axes()
    bx, bh = W - RIGHT + 20, c.ph
    for k in range(64):
        c.add(f'<rect x="{bx}" y="{_n(TOP + bh * (1 - (k + 1) / 64))}" width="18" '
              f'height="{_n(bh / 64 + 0.5)}" fill="{COLORMAP[round(k * 255 / 63)]}"/>')
    c.add(f'<rect x="{bx}" y="{TOP}" width="18" height="{bh}" fill="none" stroke="black"/>')
    for frac, val in ((0.0, lo), (0.5, 0.5 * (lo + hi)), (1.0, hi)):
        c.text(bx + 22, TOP + bh * (1 - frac) + 4, format(val, ".4g"), 10)
    if colorbar_label:
        c.text(bx, TOP - 8, colorbar_label)
    return c.render()


def line_plot_svg(x, series: dict, title="", xlabel="", ylabel="", log_x=False) -> str:
    """One polyline per (label, values) entry; NaN values break the line."""
    x = np.asarray(x, float)
    ys = [np.asarray(v, float) for v in series.values()]
    finite = np.concatenate([v[np.isfinite(v)] for v in ys]) if ys else np.zeros(0)
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    pad = 0.05 * (hi - lo) if hi > lo else 0.05 * max(abs(hi), 1.0)
    c = _Canvas(title, xlabel, ylabel, (x.min(), x.max()), (lo - pad, hi + pad), log_x)
    c.axes()

    def flush(seg, color):
        if seg:
            c.add(f'<polyline points="{" ".join(seg)}" fill="none" stroke="{color}" stroke-width="2"/>')

    for k, (label, v) in enumerate(zip(series, ys)):
        color = LINE_COLORS[k % len(LINE_COLORS)]
        seg = []
        for xi, vi in zip(x, v):
            if np.isfinite(vi):
                seg.append(f"{_n(c.x(xi))},{_n(c.y(vi))}")
            else:
                flush(seg, color)
                seg = []
        flush(seg, color)
        ly = TOP + 14 * k + 10
        c.add(f'<line x1="{W - RIGHT + 10}" y1="{ly}" x2="{W - RIGHT + 30}" y2="{ly}" '
              f'stroke="{color}" stroke-width="2"/>')
        c.text(W - RIGHT + 34, ly + 4, label)
    return c.render()


def histogram_svg(edges, counts, title="", xlabel="", ylabel="count") -> str:
    edges, counts = np.asarray(edges, float), np.asarray(counts, float)
    top = max(float(counts.max()), 1.0) if counts.size else 1.0
    c = _Canvas(title, xlabel, ylabel, (edges[0], edges[-1]), (0.0, top * 1.05))
    for lo, hi, n in zip(edges[:-1], edges[1:], counts):
        if n > 0:
            x0, x1, y0 = c.x(lo), c.x(hi), c.y(n)
            c.add(f'<rect x="{_n(x0)}" y="{_n(y0)}" width="{_n(x1 - x0)}" '
                  f'height="{_n(c.y(0.0) - y0)}" fill="{COLORMAP[96]}" stroke="white" '
                  f'stroke-width="0.5"/>')
    c.axes()
    return c.render()


def write_svg(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
