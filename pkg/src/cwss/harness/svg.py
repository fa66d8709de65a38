"""Hand-written SVG line chart: mean objective per iteration with a +-1 std band, log-scale y."""

from __future__ import annotations

import math
from typing import List

__all__ = ["render_curves", "PALETTE"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50


def _fmt(v: float) -> str:
    return "%.2f" % v


def _positive_floor(curves) -> float:
    vals = [v for c in curves for v in c if v is not None and v > 0 and math.isfinite(v)]
    return min(vals) if vals else 1e-300


def render_curves(summary: dict, title: str = "objective vs iteration") -> str:
    """Deterministic SVG text for ``summary['strategies'][*]['curve']``.

    Values at or below zero (and the lower edge of a band that crosses
    zero) are drawn at the smallest positive value present.
    """
    strategies = summary["strategies"]
    series = []
    for name, s in strategies.items():
        mean = s["curve"]["mean"]
        std = s["curve"]["std"]
        upper = [m + d for m, d in zip(mean, std)]
        lower = [m - d for m, d in zip(mean, std)]
        series.append((name, mean, lower, upper))
    floor = _positive_floor([c for _, m, _, u in series for c in (m, u)])

    def clamp(v):
        if v is None or not math.isfinite(v):
            return None
        return max(v, floor)

    finite = [clamp(v) for _, m, lo, up in series for c in (m, lo, up) for v in c]
    finite = [v for v in finite if v is not None]
    lo_dec = math.floor(math.log10(min(finite))) if finite else 0
    hi_dec = math.ceil(math.log10(max(finite))) if finite else 1
    if hi_dec == lo_dec:
        hi_dec += 1
    n_iter = max((len(m) for _, m, _, _ in series), default=1)
    x_max = max(n_iter - 1, 1)
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(k):
        return LEFT + pw * k / x_max

    def py(v):
        return TOP + ph * (hi_dec - math.log10(v)) / (hi_dec - lo_dec)

    out: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    step = max(1, math.ceil((hi_dec - lo_dec) / 10))
    for dec in range(lo_dec, hi_dec + 1, step):
        y = py(10.0 ** dec)
        out.append(f'<line x1="{LEFT}" y1="{_fmt(y)}" x2="{LEFT + pw}" y2="{_fmt(y)}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">1e{dec}</text>')
    for j in range(6):
        k = round(x_max * j / 5)
        x = px(k)
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP + ph}" x2="{_fmt(x)}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{k}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" '
               'font-size="12">iteration</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.0f})">objective</text>')

    for idx, (name, mean, lower, upper) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        band_top = [(px(k), py(clamp(v))) for k, v in enumerate(upper) if clamp(v) is not None]
        band_bot = [(px(k), py(clamp(v))) for k, v in enumerate(lower) if clamp(v) is not None]
        if band_top and band_bot:
            pts = band_top + band_bot[::-1]
            out.append(f'<polygon points="{" ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)}" '
                       f'fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = [(px(k), py(clamp(v))) for k, v in enumerate(mean) if clamp(v) is not None]
        if line:
            out.append(f'<polyline points="{" ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in line)}" '
                       f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 16 * idx + 10
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}" font-family="sans-serif" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
