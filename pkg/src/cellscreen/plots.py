"""Deterministic SVG dose-response plots (points, fitted curve, EC50 mark)."""

from __future__ import annotations

import math

import numpy as np

from .analytics import DoseResponse, HillFit, hill_curve

WIDTH, HEIGHT = 560, 360
MARGIN = 56


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def dose_response_svg(dr: DoseResponse, fit: HillFit | None = None) -> str:
    """Render one compound's titration as an SVG document string."""
    concs = np.array([p[0] for p in dr.points], dtype=np.float64)
    responses = np.array([p[1] for p in dr.points], dtype=np.float64)
    log_c = np.log10(concs)

    x_lo, x_hi = float(log_c.min()) - 0.3, float(log_c.max()) + 0.3
    values = list(responses)
    if fit is not None:
        values += [fit.s0, fit.s_inf]
    y_lo, y_hi = min(values), max(values)
    pad = max((y_hi - y_lo) * 0.1, 1e-6)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(lx):
        return MARGIN + (lx - x_lo) / (x_hi - x_lo) * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - 2 * MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">'
        f'log10 concentration [M]</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {HEIGHT // 2})">response</text>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="14">{dr.compound_id}</text>',
    ]

    for tick in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        parts.append(
            f'<text x="{_fmt(sx(tick))}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
            f'font-size="11">{tick}</text>'
        )

    if fit is not None:
        curve_x = np.linspace(x_lo, x_hi, 120)
        curve_y = hill_curve(10.0**curve_x, fit.s0, fit.s_inf, fit.ec50, fit.n)
        pts = " ".join(f"{_fmt(sx(lx))},{_fmt(sy(v))}" for lx, v in zip(curve_x, curve_y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
        ex = sx(math.log10(fit.ec50))
        parts.append(
            f'<line x1="{_fmt(ex)}" y1="{MARGIN}" x2="{_fmt(ex)}" y2="{HEIGHT - MARGIN}" '
            f'stroke="#d62728" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{_fmt(ex + 4)}" y="{MARGIN + 14}" font-size="11" fill="#d62728">'
            f'EC50 = {fit.ec50:.3e} M</text>'
        )

    for lx, v in zip(log_c, responses):
        parts.append(f'<circle cx="{_fmt(sx(lx))}" cy="{_fmt(sy(v))}" r="3.5" fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
