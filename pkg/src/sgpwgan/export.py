"""Deterministic file output: JSON, CSV and hand-written SVG.

Floats are written with ``repr`` so a rerun with the same seeds produces
byte-identical files.  Non-finite floats become the strings ``"inf"``,
``"-inf"`` and ``"nan"`` in JSON.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Header and float rows of a file written by :func:`write_csv`."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    rows = [[float(c) for c in line.split(",")] for line in text[1:]]
    return header, np.array(rows).reshape(len(rows), len(header))


# ---------------------------------------------------------------------------
# SVG


class _Canvas:
    def __init__(self, xlim, ylim, width=640, height=640, margin=40):
        self.xlim, self.ylim = xlim, ylim
        self.w, self.h, self.m = width, height, margin
        self.items = []

    def px(self, x, y):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        u = self.m + (x - x0) / (x1 - x0) * (self.w - 2 * self.m)
        v = self.h - self.m - (y - y0) / (y1 - y0) * (self.h - 2 * self.m)
        return u, v

    def line(self, a, b, color, width=1.0, cls=None):
        (u0, v0), (u1, v1) = self.px(*a), self.px(*b)
        c = f' class="{cls}"' if cls else ""
        self.items.append(f'<line{c} x1="{u0:.2f}" y1="{v0:.2f}" x2="{u1:.2f}" y2="{v1:.2f}" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def polyline(self, pts, color, width=1.5, cls=None):
        if len(pts) < 2:
            return
        c = f' class="{cls}"' if cls else ""
        coords = " ".join("{:.2f},{:.2f}".format(*self.px(x, y)) for x, y in pts)
        self.items.append(f'<polyline{c} points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def circle(self, x, y, r, color, cls=None, opacity=1.0):
        u, v = self.px(x, y)
        c = f' class="{cls}"' if cls else ""
        self.items.append(f'<circle{c} cx="{u:.2f}" cy="{v:.2f}" r="{r}" fill="{color}" fill-opacity="{opacity}"/>')

    def text(self, x, y, s, size=12):
        self.items.append(f'<text x="{x}" y="{y}" font-size="{size}" font-family="sans-serif">{s}</text>')

    def frame(self, xlabel, ylabel):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        for a, b in (((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))):
            self.line(a, b, "#444444")
        self.text(self.w / 2, self.h - 8, xlabel)
        self.text(6, self.h / 2, ylabel)
        self.text(self.m, self.h - self.m + 16, f"{x0:g}", 10)
        self.text(self.w - self.m - 16, self.h - self.m + 16, f"{x1:g}", 10)
        self.text(4, self.h - self.m, f"{y0:g}", 10)
        self.text(4, self.m + 4, f"{y1:g}", 10)

    def render(self, title=""):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        body = [head, f'<rect width="{self.w}" height="{self.h}" fill="white"/>']
        if title:
            body.append(f'<title>{title}</title>')
        body += self.items
        body.append("</svg>")
        return "\n".join(body) + "\n"


def portrait_svg(portrait, title="phase portrait") -> str:
    """Arrows (grey), psi_dot nullclines (red), theta_dot nullclines (blue),
    trajectories (green), equilibria (black dots)."""
    xlim, ylim = portrait.box
    cv = _Canvas(xlim, ylim)
    cv.frame("psi", "theta")
    dx = (xlim[1] - xlim[0]) / max(1, len(portrait.psi) - 1)
    dy = (ylim[1] - ylim[0]) / max(1, len(portrait.theta) - 1)
    scale = 0.4 * min(dx, dy)
    for i, t in enumerate(portrait.theta):
        for j, p in enumerate(portrait.psi):
            a, b = portrait.arrows[i, j]
            if a == 0.0 and b == 0.0:
                continue
            cv.line((p, t), (p + scale * a, t + scale * b), "#999999", 1.0, "arrow")
            cv.circle(p + scale * a, t + scale * b, 1.2, "#999999")
    for key, color in (("psi_dot", "#d62728"), ("theta_dot", "#1f77b4")):
        for line in portrait.nullclines.get(key, []):
            cv.polyline(np.asarray(line).tolist(), color, 2.0, f"nullcline-{key}")
    for tr in portrait.trajectories:
        st = tr.states
        step = max(1, len(st) // 2000)
        pts = st[::step, :2].tolist() + [st[-1, :2].tolist()]
        pts = [q for q in pts if xlim[0] <= q[0] <= xlim[1] and ylim[0] <= q[1] <= ylim[1]]
        cv.polyline(pts, "#2ca02c", 1.2, "trajectory")
    for e in portrait.equilibria:
        cv.circle(e[0], e[1], 4, "#000000", "equilibrium")
    return cv.render(title)


def scatter_svg(points, xlim=(-3, 3), ylim=(-3, 3), centers=None, title="samples") -> str:
    cv = _Canvas(xlim, ylim)
    cv.frame("x1", "x2")
    if centers is not None:
        for c in np.asarray(centers):
            cv.circle(c[0], c[1], 4, "#d62728", "center")
    for x, y in np.asarray(points)[:, :2]:
        if xlim[0] <= x <= xlim[1] and ylim[0] <= y <= ylim[1]:
            cv.circle(x, y, 1.5, "#1f77b4", opacity=0.6)
    return cv.render(title)
