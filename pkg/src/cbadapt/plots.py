"""Self-contained SVG figures, written as plain text (no plotting library).

Three panel kinds: empirical CDFs of AGCS per codebook, train/validation
loss curves, and an overhead-vs-AGCS scatter for policies and baselines.
"""

from html import escape

import numpy as np

from .errors import ConfigError

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
PANEL_W, PANEL_H = 420, 300
MARGIN = dict(left=56, right=16, top=30, bottom=44)


def ecdf_points(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and their empirical CDF; the last point is ``(max, 1.0)``."""
    x = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if x.size == 0:
        raise ConfigError("cannot build an ECDF from no values")
    return x, np.arange(1, x.size + 1) / x.size


class _Panel:
    def __init__(self, x0, y0, title, xlim, ylim, xlabel, ylabel, logy=False):
        self.x0, self.y0 = x0, y0
        self.xlim, self.ylim = xlim, ylim
        self.logy = logy
        self.parts = []
        self.legend = []
        self._frame(title, xlabel, ylabel)

    def _ty(self, y):
        if self.logy:
            y = np.log10(np.maximum(y, 1e-300))
        return y

    def px(self, x, y):
        lo, hi = self.xlim
        ylo, yhi = (self._ty(v) for v in self.ylim)
        w = PANEL_W - MARGIN["left"] - MARGIN["right"]
        h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
        sx = self.x0 + MARGIN["left"] + (np.asarray(x) - lo) / ((hi - lo) or 1.0) * w
        sy = self.y0 + MARGIN["top"] + h - (self._ty(np.asarray(y)) - ylo) / ((yhi - ylo) or 1.0) * h
        return sx, sy

    def _frame(self, title, xlabel, ylabel):
        l = self.x0 + MARGIN["left"]
        t = self.y0 + MARGIN["top"]
        w = PANEL_W - MARGIN["left"] - MARGIN["right"]
        h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
        self.parts.append(f'<rect x="{l}" y="{t}" width="{w}" height="{h}" fill="none" stroke="#444"/>')
        self.parts.append(f'<text x="{l + w / 2:.1f}" y="{self.y0 + 18}" text-anchor="middle" '
                          f'font-size="13">{escape(title)}</text>')
        self.parts.append(f'<text x="{l + w / 2:.1f}" y="{t + h + 34}" text-anchor="middle" '
                          f'font-size="11">{escape(xlabel)}</text>')
        self.parts.append(f'<text x="{self.x0 + 14}" y="{t + h / 2:.1f}" text-anchor="middle" font-size="11" '
                          f'transform="rotate(-90 {self.x0 + 14} {t + h / 2:.1f})">{escape(ylabel)}</text>')
        for frac in (0.0, 0.5, 1.0):
            xv = self.xlim[0] + frac * (self.xlim[1] - self.xlim[0])
            sx, _ = self.px(xv, self.ylim[0])
            self.parts.append(f'<text x="{float(sx):.1f}" y="{t + h + 15}" text-anchor="middle" '
                              f'font-size="10">{xv:.3g}</text>')
            if self.logy:
                yv = 10 ** (np.log10(self.ylim[0]) + frac * (np.log10(self.ylim[1]) - np.log10(self.ylim[0])))
            else:
                yv = self.ylim[0] + frac * (self.ylim[1] - self.ylim[0])
            _, sy = self.px(self.xlim[0], yv)
            self.parts.append(f'<text x="{l - 4}" y="{float(sy) + 3:.1f}" text-anchor="end" '
                              f'font-size="10">{yv:.3g}</text>')

    def line(self, x, y, color, label, css="series"):
        sx, sy = self.px(x, y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy))
        self.parts.append(f'<polyline class="{css}" data-label="{escape(label)}" points="{pts}" '
                          f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        self.legend.append((label, color))

    def points(self, x, y, color, label):
        sx, sy = self.px(x, y)
        for a, b in zip(np.atleast_1d(sx), np.atleast_1d(sy)):
            self.parts.append(f'<circle class="point" data-label="{escape(label)}" cx="{a:.2f}" '
                              f'cy="{b:.2f}" r="4" fill="{color}"/>')
        self.legend.append((label, color))

    def svg(self) -> str:
        l = self.x0 + PANEL_W - MARGIN["right"] - 6
        t = self.y0 + MARGIN["top"] + 12
        legend = []
        for i, (label, color) in enumerate(self.legend):
            y = t + 13 * i
            legend.append(f'<rect x="{l - 120}" y="{y - 8}" width="9" height="9" fill="{color}"/>'
                          f'<text x="{l - 107}" y="{y}" font-size="10">{escape(label)}</text>')
        return "\n".join(self.parts + legend)


def cdf_panel(x0, y0, series: dict, title="AGCS distribution per codebook") -> _Panel:
    if not series:
        raise ConfigError("no AGCS series to plot")
    lo = min(float(np.min(v)) for v in series.values())
    hi = max(float(np.max(v)) for v in series.values())
    p = _Panel(x0, y0, title, (min(lo, hi - 1e-3), hi), (0.0, 1.0), "AGCS", "CDF")
    for i, (label, values) in enumerate(series.items()):
        x, y = ecdf_points(values)
        p.line(np.repeat(x, 2)[1:], np.repeat(y, 2)[:-1], PALETTE[i % len(PALETTE)], label, "cdf")
    return p


def loss_panel(x0, y0, curves: dict, title="Training loss") -> _Panel:
    curves = {k: np.asarray(v, float) for k, v in curves.items() if len(v)}
    if not curves:
        raise ConfigError("no loss curves to plot")
    n = max(len(v) for v in curves.values())
    lo = min(float(v[v > 0].min()) if np.any(v > 0) else 1e-6 for v in curves.values())
    hi = max(float(v.max()) for v in curves.values())
    p = _Panel(x0, y0, title, (1, max(n, 2)), (lo, max(hi, lo * 10)), "epoch", "MSE", logy=True)
    for i, (label, v) in enumerate(curves.items()):
        p.line(np.arange(1, len(v) + 1), v, PALETTE[i % len(PALETTE)], label, "loss")
    return p


def tradeoff_panel(x0, y0, rows, title="Overhead vs achieved AGCS") -> _Panel:
    if not rows:
        raise ConfigError("no policy rows to plot")
    bits = [r["mean_overhead_bits"] for r in rows]
    agcs = [r["mean_agcs"] for r in rows]
    pad = 0.05 * (max(bits) - min(bits) or 1.0)
    p = _Panel(x0, y0, title, (min(bits) - pad, max(bits) + pad),
               (min(agcs) - 0.02, max(agcs) + 0.02), "mean overhead (bits)", "mean AGCS")
    for i, r in enumerate(rows):
        p.points(r["mean_overhead_bits"], r["mean_agcs"], PALETTE[i % len(PALETTE)], r["name"])
    return p


def render(panels, meta: dict | None = None) -> str:
    if not panels:
        raise ConfigError("nothing to plot")
    cols = min(2, len(panels))
    rows = (len(panels) + cols - 1) // cols
    width, height = cols * PANEL_W, rows * PANEL_H
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">']
    for k, v in sorted((meta or {}).items()):
        head.append(f"<!-- {escape(str(k))}={escape(str(v))} -->")
    head.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    body = []
    for p in panels:
        body.append(p.svg())
    return "\n".join(head + body + ["</svg>"]) + "\n"


def panel_origin(i: int) -> tuple[int, int]:
    return (i % 2) * PANEL_W, (i // 2) * PANEL_H
