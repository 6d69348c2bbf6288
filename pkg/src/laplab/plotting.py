"""Minimal deterministic SVG figures built from result records.

Only record values feed the figures, so regenerating them from a results CSV
reproduces the files written by the sweep byte for byte.
"""

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PANEL_W, PANEL_H = 360, 280
MARGIN = dict(left=64, right=16, top=32, bottom=48)


def _f(x):
    return f"{x:.2f}"


def _viridis(z):
    # five-stop piecewise-linear approximation of viridis
    stops = np.array([
        [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
    ], dtype=float)
    z = min(max(z, 0.0), 1.0) * (len(stops) - 1)
    i = min(int(z), len(stops) - 2)
    c = stops[i] + (z - i) * (stops[i + 1] - stops[i])
    return "#{:02x}{:02x}{:02x}".format(*(int(round(v)) for v in c))


class _Canvas:
    def __init__(self, n_panels):
        self.width = PANEL_W * n_panels
        self.height = PANEL_H
        self.parts = []

    def add(self, s):
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", size=11, rotate=None):
        tr = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}"{tr}>{escape(s)}</text>')

    def render(self):
        head = (
            '<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{self.width}" height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
            'font-family="sans-serif">\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _frame(c, ox, title, xlabel, ylabel):
    x0, y0 = ox + MARGIN["left"], MARGIN["top"]
    w = PANEL_W - MARGIN["left"] - MARGIN["right"]
    h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
    c.add(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(w)}" height="{_f(h)}" fill="none" stroke="#000"/>')
    c.text(x0 + w / 2, 20, title, size=12)
    c.text(x0 + w / 2, PANEL_H - 10, xlabel)
    c.text(ox + 14, y0 + h / 2, ylabel, rotate=-90)
    return x0, y0, w, h


def _ticks(c, x0, y0, w, h, lo, hi, axis):
    for k in range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1):
        frac = 0.5 if hi == lo else (k - lo) / (hi - lo)
        if axis == "x":
            x = x0 + frac * w
            c.add(f'<line x1="{_f(x)}" y1="{_f(y0 + h)}" x2="{_f(x)}" y2="{_f(y0 + h + 4)}" stroke="#000"/>')
            c.text(x, y0 + h + 16, f"1e{k}", size=10)
        else:
            y = y0 + h - frac * h
            c.add(f'<line x1="{_f(x0 - 4)}" y1="{_f(y)}" x2="{_f(x0)}" y2="{_f(y)}" stroke="#000"/>')
            c.text(x0 - 6, y + 3, f"1e{k}", anchor="end", size=10)


def _padded(lo, hi):
    if hi - lo < 1e-9:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def field_svg(stats, metrics):
    """Heatmap of log10 mean error over the (eps, N) grid, one panel per metric."""
    c = _Canvas(max(len(metrics), 1))
    for p, metric in enumerate(metrics):
        cells = [s for s in stats if s["metric"] == metric and s["mean"] > 0]
        Ns = sorted({s["N"] for s in cells})
        eps = sorted({s["eps"] for s in cells})
        x0, y0, w, h = _frame(c, p * PANEL_W, f"log10 mean {metric}", "eps", "N")
        if not cells:
            continue
        z = {(s["N"], s["eps"]): math.log10(s["mean"]) for s in cells}
        zlo, zhi = min(z.values()), max(z.values())
        cw, ch = w / len(eps), h / len(Ns)
        for i, n in enumerate(Ns):
            for j, e in enumerate(eps):
                if (n, e) not in z:
                    continue
                v = z[(n, e)]
                frac = 0.5 if zhi == zlo else (v - zlo) / (zhi - zlo)
                x, y = x0 + j * cw, y0 + h - (i + 1) * ch
                c.add(
                    f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" '
                    f'fill="{_viridis(frac)}"><title>N={n} eps={e:.4g} log10={v:.3f}</title></rect>'
                )
        c.text(x0 + 2, y0 + h - 4, f"{eps[0]:.3g}", anchor="start", size=9)
        c.text(x0 + w - 2, y0 + h - 4, f"{eps[-1]:.3g}", anchor="end", size=9)
        c.text(x0 - 6, y0 + h - ch / 2 + 3, str(Ns[0]), anchor="end", size=9)
        c.text(x0 - 6, y0 + ch / 2 + 3, str(Ns[-1]), anchor="end", size=9)
        c.text(x0 + w / 2, y0 + 12, f"range [{zlo:.2f}, {zhi:.2f}]", size=9)
    return c.render()


def loglog_svg(series, xlabel, titles):
    """Log-log scatter with a fitted line per panel.

    ``series`` is a list of ``(xs, ys, fit)`` where ``fit`` is ``(slope, intercept)``
    or a list of ``(slope, intercept, x_subset)`` branches, or ``None``.
    """
    c = _Canvas(max(len(series), 1))
    for p, ((xs, ys, fits), title) in enumerate(zip(series, titles)):
        x0, y0, w, h = _frame(c, p * PANEL_W, title, xlabel, "error")
        pts = [(math.log10(x), math.log10(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
        if not pts:
            continue
        xlo, xhi = _padded(min(q[0] for q in pts), max(q[0] for q in pts))
        ylo, yhi = _padded(min(q[1] for q in pts), max(q[1] for q in pts))
        _ticks(c, x0, y0, w, h, xlo, xhi, "x")
        _ticks(c, x0, y0, w, h, ylo, yhi, "y")

        def sx(v):
            return x0 + (v - xlo) / (xhi - xlo) * w

        def sy(v):
            return y0 + h - (v - ylo) / (yhi - ylo) * h

        for lx, ly in pts:
            c.add(f'<circle cx="{_f(sx(lx))}" cy="{_f(sy(ly))}" r="3" fill="#1f77b4"/>')
        for k, (slope, intercept, sub) in enumerate(fits or []):
            lx = [math.log10(x) for x in sub]
            a, b = min(lx), max(lx)
            c.add(
                f'<line x1="{_f(sx(a))}" y1="{_f(sy(slope * a + intercept))}" '
                f'x2="{_f(sx(b))}" y2="{_f(sy(slope * b + intercept))}" stroke="#d62728" stroke-width="1.5"/>'
            )
            c.text(x0 + w - 6, y0 + 14 + 13 * k, f"slope {slope:.3f}", anchor="end", size=10)
    return c.render()


def write_plots(out_dir, name, experiment, records):
    """Write the figures for one result set; returns the written paths."""
    from .harness import summarize

    out_dir = Path(out_dir)
    summary = summarize(experiment, records)
    stats = summary["cells"]
    metrics = sorted({s["metric"] for s in stats})
    written = []
    if experiment == "pointwise_curve":
        series, titles = [], []
        for key, entry in summary["curves"].items():
            curve = entry["curve"]
            fits = []
            if entry["slopes"]:
                for branch in ("small_eps", "large_eps"):
                    b = entry["slopes"][branch]
                    fits.append((b["slope"], b["intercept"], b["eps"]))
            series.append(([s["eps"] for s in curve], [s["mean"] for s in curve], fits))
            titles.append(key)
        path = out_dir / f"{name}_curve.svg"
        path.write_text(loglog_svg(series, "eps", titles), encoding="utf-8", newline="")
        return [path]

    path = out_dir / f"{name}_field.svg"
    path.write_text(field_svg(stats, metrics), encoding="utf-8", newline="")
    written.append(path)
    series, titles = [], []
    for m in metrics:
        best = summary["best"][m]
        xs = [b["N"] for b in best]
        fit = summary["slopes"].get(m)
        fits = [(fit["slope"], fit["intercept"], xs)] if fit else []
        series.append((xs, [b["mean"] for b in best], fits))
        titles.append(f"best mean {m}")
    path = out_dir / f"{name}_best.svg"
    path.write_text(loglog_svg(series, "N", titles), encoding="utf-8", newline="")
    written.append(path)
    return written
