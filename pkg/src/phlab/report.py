"""Experiment reports: aggregate statistics plus deterministic CSV/SVG output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

Z95 = 1.96
Z99 = 2.576


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n: int

    @property
    def ci95(self) -> float:
        return self.half_width(Z95)

    @property
    def ci99(self) -> float:
        return self.half_width(Z99)

    def half_width(self, z: float) -> float:
        return z * self.std / math.sqrt(self.n) if self.n else float("nan")


def summarize(values) -> Aggregate:
    """Mean and sample standard deviation (ddof=1; 0 for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return Aggregate(float("nan"), float("nan"), 0)
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return Aggregate(float(v.mean()), std, int(v.size))


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple
    err: tuple | None = None


@dataclass
class ExperimentReport:
    name: str
    config: dict
    columns: tuple
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    series: list = field(default_factory=list)
    chart: str = "line"
    xlabel: str = ""
    ylabel: str = ""

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def summary_line(self) -> str:
        parts = [f"{self.name}:"]
        for k, a in self.aggregates.items():
            if isinstance(a, Aggregate):
                parts.append(f"{k}={a.mean:.4f}±{a.ci95:.4f}")
            else:
                parts.append(f"{k}={a:.4f}")
        return " ".join(parts)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# SVG

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=160, top=40, bottom=55)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _n(v: float) -> str:
    return f"{v:.2f}"


def _y_bounds(series: Sequence[Series]):
    lo_y, hi_y = [0.0], [1.0]
    for s in series:
        err = s.err or (0.0,) * len(s.y)
        lo_y += [y - e for y, e in zip(s.y, err)]
        hi_y += [y + e for y, e in zip(s.y, err)]
    return min(lo_y), max(hi_y)


def _x_bounds(series: Sequence[Series]):
    xs = [x for s in series for x in s.x]
    if not xs:
        return 0.0, 1.0
    x0, x1 = min(xs), max(xs)
    if x0 == x1:
        x0, x1 = x0 - 0.5, x1 + 0.5
    return x0, x1


def to_svg(report: ExperimentReport) -> str:
    """Self-contained SVG: one polyline per series (or bars), CI whiskers."""
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    series = report.series
    bar = report.chart == "bar"
    y0, y1 = _y_bounds(series)
    if bar:
        n = max((len(s.y) for s in series), default=0)
        x0, x1 = -0.5, n - 0.5 if n else 0.5
    else:
        x0, x1 = _x_bounds(series)

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(report.name)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444"/>',
    ]
    for t in np.linspace(y0, y1, 6):
        out.append(
            f'<text x="{MARGIN["left"] - 6}" y="{_n(sy(t) + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{t:.2f}</text>'
        )
        out.append(
            f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{_n(sy(t))}" '
            f'y2="{_n(sy(t))}" stroke="#ddd"/>'
        )
    if not bar:
        for t in np.linspace(x0, x1, 6):
            out.append(
                f'<text x="{_n(sx(t))}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{t:.2f}</text>'
            )
    out.append(
        f'<text x="{MARGIN["left"] + pw / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(report.xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.0f})">{escape(report.ylabel)}</text>'
    )

    n_series = max(len(series), 1)
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        err = s.err or (None,) * len(s.y)
        if bar:
            width = 0.8 / n_series
            for i, (y, e) in enumerate(zip(s.y, err)):
                left = i - 0.4 + k * width
                out.append(
                    f'<rect class="bar" x="{_n(sx(left))}" y="{_n(min(sy(y), sy(0)))}" '
                    f'width="{_n(sx(left + width) - sx(left))}" height="{_n(abs(sy(0) - sy(y)))}" fill="{color}"/>'
                )
                cx = left + width / 2
                if e is not None:
                    out.append(
                        f'<line class="ci" x1="{_n(sx(cx))}" x2="{_n(sx(cx))}" y1="{_n(sy(y - e))}" '
                        f'y2="{_n(sy(y + e))}" stroke="black"/>'
                    )
            for i, lab in enumerate(s.x if k == 0 else ()):
                out.append(
                    f'<text x="{_n(sx(i))}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="10">{escape(str(lab))}</text>'
                )
        else:
            pts = " ".join(f"{_n(sx(x))},{_n(sy(y))}" for x, y in zip(s.x, s.y))
            out.append(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for x, y, e in zip(s.x, s.y, err):
                if e:
                    out.append(
                        f'<line class="ci" x1="{_n(sx(x))}" x2="{_n(sx(x))}" y1="{_n(sy(y - e))}" '
                        f'y2="{_n(sy(y + e))}" stroke="{color}" stroke-opacity="0.5"/>'
                    )
        ly = MARGIN["top"] + 14 + 18 * k
        lx = MARGIN["left"] + pw + 12
        out.append(f'<rect x="{lx}" y="{ly - 9}" width="12" height="10" fill="{color}"/>')
        out.append(
            f'<text x="{lx + 18}" y="{ly}" font-family="sans-serif" font-size="11">{escape(s.label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: ExperimentReport, out_dir) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and ``<name>.svg`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{report.name}.csv"
    svg_path = out_dir / f"{report.name}.svg"
    csv_path.write_text(to_csv(report))
    svg_path.write_text(to_svg(report))
    return csv_path, svg_path
