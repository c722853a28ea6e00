"""Standalone SVG line charts. No plotting dependency."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

SPAN_COLORS = {
    "Publicity": "#C0C0EC",
    "Announcement": "#D1E5CE",
    "Prohibition": "#E2CDE4",
    "Response": "#E9D5D4",
    "Refutation": "#FFFFD1",
    "Comments": "#FDF2F5",
}
LINE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

W, H = 720, 360
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 45


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick(v: float) -> str:
    if abs(v) >= 1e4:
        return f"{v:.2e}"
    return f"{v:.3g}"


class _Canvas:
    def __init__(self, x_range: tuple[float, float], y_range: tuple[float, float], title: str, ylabel: str):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2 - RIGHT / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        ]
        self.ylabel = ylabel
        self.legend: list[tuple[str, str, str]] = []

    def px(self, x: float) -> float:
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)

    def py(self, y: float) -> float:
        return H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)

    def span(self, x_lo: float, x_hi: float, color: str, opacity: float = 0.8) -> None:
        a, b = self.px(max(x_lo, self.x0)), self.px(min(x_hi, self.x1))
        self.parts.append(
            f'<rect x="{_fmt(a)}" y="{TOP}" width="{_fmt(b - a)}" height="{H - TOP - BOTTOM}" fill="{color}" fill-opacity="{opacity}"/>'
        )

    def line(self, xs: Sequence[float], ys: Sequence[float], color: str, label: str | None = None) -> None:
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for x, y in zip(xs, ys):
            self.parts.append(f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="2.2" fill="{color}"/>')
        if label is not None:
            self.legend.append(("line", color, label))

    def axes(self, xlabel: str = "day") -> None:
        p = self.parts
        p.append(f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>')
        p.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>')
        for x in range(int(self.x0), int(self.x1) + 1):
            X = self.px(x)
            p.append(f'<line x1="{_fmt(X)}" y1="{H - BOTTOM}" x2="{_fmt(X)}" y2="{H - BOTTOM + 4}" stroke="black"/>')
            p.append(f'<text x="{_fmt(X)}" y="{H - BOTTOM + 16}" text-anchor="middle">{x}</text>')
        for k in range(5):
            v = self.y0 + (self.y1 - self.y0) * k / 4
            Y = self.py(v)
            p.append(f'<line x1="{LEFT - 4}" y1="{_fmt(Y)}" x2="{LEFT}" y2="{_fmt(Y)}" stroke="black"/>')
            p.append(f'<text x="{LEFT - 6}" y="{_fmt(Y + 4)}" text-anchor="end">{_tick(v)}</text>')
        p.append(f'<text x="{(LEFT + W - RIGHT) / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>')
        p.append(
            f'<text x="14" y="{(TOP + H - BOTTOM) / 2}" text-anchor="middle" transform="rotate(-90 14 {(TOP + H - BOTTOM) / 2})">{escape(self.ylabel)}</text>'
        )

    def render(self) -> str:
        x = W - RIGHT + 12
        for n, (kind, color, label) in enumerate(self.legend[:24]):
            y = TOP + 6 + 14 * n
            if kind == "line":
                self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 16}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            else:
                self.parts.append(f'<rect x="{x}" y="{y - 5}" width="16" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{x + 20}" y="{y + 4}">{escape(label)}</text>')
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _y_range(series: Sequence[Sequence[float]]) -> tuple[float, float]:
    vals = [v for s in series for v in s]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(0.0, min(vals)), max(vals)
    return lo, hi + 0.05 * (hi - lo or 1.0)


def overview_svg(views: Sequence[float], interventions: Sequence[Sequence[str]] = (), commented: Sequence[bool] = (), title: str = "views") -> str:
    """Views per day with a shaded band for each day an intervention is active.

    ``interventions[t-1]`` lists the active intervention kinds on day t;
    several kinds on one day split the band vertically into equal slices.
    """
    T = len(views)
    c = _Canvas((1, max(T, 2)), _y_range([views]), title, "views")
    seen = []
    for t, on in enumerate(commented, start=1):
        if on:
            c.span(t - 0.5, t + 0.5, SPAN_COLORS["Comments"], 1.0)
            if "Comments" not in seen:
                seen.append("Comments")
    for t, kinds in enumerate(interventions, start=1):
        kinds = [k for k in kinds if k in SPAN_COLORS]
        for n, k in enumerate(kinds):
            lo = t - 0.5 + n / len(kinds)
            c.span(lo, lo + 1 / len(kinds), SPAN_COLORS[k])
            if k not in seen:
                seen.append(k)
    for k in seen:
        c.legend.append(("span", SPAN_COLORS[k], k))
    c.axes()
    c.line(range(1, T + 1), views, LINE_COLORS[0], "views")
    return c.render()


def overlay_svg(series: Mapping[str, Sequence[float]], title: str = "views by condition", ylabel: str = "views") -> str:
    T = max((len(s) for s in series.values()), default=1)
    c = _Canvas((1, max(T, 2)), _y_range(list(series.values())), title, ylabel)
    c.axes()
    for n, (name, s) in enumerate(series.items()):
        c.line(range(1, len(s) + 1), s, LINE_COLORS[n % len(LINE_COLORS)], name)
    return c.render()


def attitudes_svg(series: Mapping[str, Sequence[float]], title: str = "attitudes") -> str:
    """Per-agent attitude over time, t = 0..T, on a fixed [-1, 1] axis."""
    T = max((len(s) for s in series.values()), default=1) - 1
    c = _Canvas((0, max(T, 1)), (-1.0, 1.0), title, "attitude")
    c.axes()
    zero = c.py(0.0)
    c.parts.append(f'<line x1="{LEFT}" y1="{_fmt(zero)}" x2="{W - RIGHT}" y2="{_fmt(zero)}" stroke="#999" stroke-dasharray="4 3"/>')
    for n, (name, s) in enumerate(series.items()):
        c.line(range(len(s)), s, LINE_COLORS[n % len(LINE_COLORS)], name)
    return c.render()
