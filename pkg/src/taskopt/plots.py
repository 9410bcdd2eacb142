"""Minimal deterministic SVG emitters for the pipeline reports.

Hand-built markup keeps the files byte-stable across runs (no
timestamps, no library-version metadata). Every figure has a CSV twin
written by the caller, so nothing downstream ever parses SVG.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a",
]

_W, _H = 640, 480
_MARGIN = 60.0


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axes(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="#333" stroke-width="1"/>',
        f'<text x="{_W / 2}" y="30" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{_W / 2}" y="{_H - 15}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="20" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 20 {_H / 2})">{ylabel}</text>',
    ]


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _span(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def scatter_svg(
    path: str | Path,
    xs: Sequence[float],
    ys: Sequence[float],
    groups: Sequence[int],
    title: str,
    xlabel: str,
    ylabel: str,
) -> None:
    """Scatter plot with one color per group index."""
    if not len(xs):
        raise ValueError("nothing to plot")
    x_lo, x_hi = _span(xs)
    y_lo, y_hi = _span(ys)
    inner_w = _W - 2 * _MARGIN
    inner_h = _H - 2 * _MARGIN
    body = _axes(title, xlabel, ylabel)
    for x, y, g in zip(xs, ys, groups):
        px = _MARGIN + (x - x_lo) / (x_hi - x_lo) * inner_w
        py = _H - _MARGIN - (y - y_lo) / (y_hi - y_lo) * inner_h
        color = _PALETTE[int(g) % len(_PALETTE)]
        body.append(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" fill="{color}" '
            f'fill-opacity="0.7"/>'
        )
    seen = sorted(set(int(g) for g in groups))
    for i, g in enumerate(seen):
        color = _PALETTE[g % len(_PALETTE)]
        ly = _MARGIN + 14 + i * 16
        body.append(f'<rect x="{_W - _MARGIN - 70}" y="{ly - 9}" width="10" '
                    f'height="10" fill="{color}"/>')
        body.append(f'<text x="{_W - _MARGIN - 55}" y="{ly}" '
                    f'font-size="11">cluster {g}</text>')
    Path(path).write_text(_document(body), encoding="utf-8")


def bar_svg(
    path: str | Path,
    labels: Sequence[str],
    means: Sequence[float],
    stds: Sequence[float],
    points: Sequence[Sequence[float]],
    title: str,
    ylabel: str,
) -> None:
    """Bars with error whiskers and per-fold dots, one bar per label."""
    if not labels:
        raise ValueError("nothing to plot")
    flat = [*means]
    for m, s in zip(means, stds):
        flat += [m - s, m + s]
    for ps in points:
        flat += list(ps)
    flat.append(0.0)
    y_lo, y_hi = _span(flat)
    inner_w = _W - 2 * _MARGIN
    inner_h = _H - 2 * _MARGIN

    def py(v: float) -> float:
        return _H - _MARGIN - (v - y_lo) / (y_hi - y_lo) * inner_h

    slot = inner_w / len(labels)
    bar_w = slot * 0.5
    body = _axes(title, "condition", ylabel)
    zero = py(0.0)
    body.append(f'<line x1="{_MARGIN}" y1="{_fmt(zero)}" x2="{_W - _MARGIN}" '
                f'y2="{_fmt(zero)}" stroke="#999" stroke-width="0.5"/>')
    for i, (label, mean, std) in enumerate(zip(labels, means, stds)):
        cx = _MARGIN + slot * (i + 0.5)
        x0 = cx - bar_w / 2
        top = py(max(mean, 0.0))
        height = abs(py(0.0) - py(mean))
        color = _PALETTE[i % len(_PALETTE)]
        body.append(f'<rect x="{_fmt(x0)}" y="{_fmt(top)}" width="{_fmt(bar_w)}" '
                    f'height="{_fmt(height)}" fill="{color}" fill-opacity="0.6"/>')
        body.append(f'<line x1="{_fmt(cx)}" y1="{_fmt(py(mean - std))}" '
                    f'x2="{_fmt(cx)}" y2="{_fmt(py(mean + std))}" '
                    f'stroke="#222" stroke-width="1.5"/>')
        for v in points[i]:
            body.append(f'<circle cx="{_fmt(cx + bar_w * 0.45)}" cy="{_fmt(py(v))}" '
                        f'r="2.5" fill="#444" fill-opacity="0.8"/>')
        body.append(f'<text x="{_fmt(cx)}" y="{_H - _MARGIN + 20}" '
                    f'text-anchor="middle" font-size="12">{label}</text>')
        body.append(f'<text x="{_fmt(cx)}" y="{_fmt(top - 6)}" text-anchor="middle" '
                    f'font-size="10">{mean:.3f}</text>')
    Path(path).write_text(_document(body), encoding="utf-8")
