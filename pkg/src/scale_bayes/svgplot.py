"""Minimal log-log rate plot written directly as SVG.

Medians are ``<circle class="median">`` markers; the fitted line and the
theoretical reference are the only ``<line>`` elements, so the file is easy
to check structurally.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT, PAD = 480, 360, 50


def rate_plot_svg(medians, fit, exponent, title: str = "") -> str:
    """Render median radius against ``n`` on log-log axes."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(title)}</title>',
        f'<path class="axes" d="M{PAD},{PAD} V{HEIGHT - PAD} H{WIDTH - PAD}" fill="none" stroke="black"/>',
    ]
    pts = [(math.log10(n), math.log10(m)) for n, m in medians if n > 0 and m > 0]
    if pts:
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        span_y = y1 - y0
        y0, y1 = y0 - 0.1 * span_y, y1 + 0.1 * span_y

        def px(x):
            return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

        def py(y):
            return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

        for x, y in pts:
            parts.append(f'<circle class="median" cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="steelblue"/>')
        if fit is not None:
            ln10 = math.log(10)
            icpt = fit.intercept / ln10  # log10 scale
            parts.append(
                f'<line class="fit" x1="{px(x0):.2f}" y1="{py(icpt + fit.slope * x0):.2f}" '
                f'x2="{px(x1):.2f}" y2="{py(icpt + fit.slope * x1):.2f}" stroke="steelblue"/>'
            )
            xm = sum(xs) / len(xs)
            ym = icpt + fit.slope * xm
            ref = -exponent
            parts.append(
                f'<line class="reference" x1="{px(x0):.2f}" y1="{py(ym + ref * (x0 - xm)):.2f}" '
                f'x2="{px(x1):.2f}" y2="{py(ym + ref * (x1 - xm)):.2f}" stroke="firebrick" '
                'stroke-dasharray="6 4"/>'
            )
            parts.append(
                f'<text x="{PAD + 10}" y="{PAD - 10}" font-size="12">slope {fit.slope:.3f} '
                f'(theory {-exponent:.3f})</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
