"""Plain-text SVG line charts of power against the weighting parameter c."""

from __future__ import annotations

from xml.sax.saxutils import escape

from crossmatch.simulation import METHODS, WEIGHTED

PANEL_W, PANEL_H = 360, 260
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 52, 16, 34, 44
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _panel(x0: float, title: str, curves, levels) -> list[str]:
    """One panel: ``curves`` are (label, c values, power values), ``levels`` are (label, power)."""
    pw = PANEL_W - MARGIN_L - MARGIN_R
    ph = PANEL_H - MARGIN_T - MARGIN_B

    def px(c):
        return x0 + MARGIN_L + c * pw

    def py(p):
        return MARGIN_T + (1.0 - p) * ph

    out = [
        f'<text x="{_f(x0 + PANEL_W / 2)}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{_f(px(0))}" y="{_f(py(1))}" width="{_f(pw)}" height="{_f(ph)}" fill="none" stroke="#444"/>',
    ]
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(f'<line x1="{_f(px(0))}" y1="{_f(py(t))}" x2="{_f(px(1))}" y2="{_f(py(t))}" stroke="#ddd"/>')
        out.append(
            f'<text x="{_f(px(0) - 6)}" y="{_f(py(t) + 4)}" text-anchor="end" font-size="10">{t:.2f}</text>'
        )
        out.append(
            f'<text x="{_f(px(t))}" y="{_f(py(0) + 14)}" text-anchor="middle" font-size="10">{t:.2f}</text>'
        )
    out.append(f'<text x="{_f(px(0.5))}" y="{_f(py(0) + 32)}" text-anchor="middle" font-size="11">c</text>')
    out.append(
        f'<text x="{_f(x0 + 14)}" y="{_f(py(0.5))}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 {_f(x0 + 14)} {_f(py(0.5))})">power</text>'
    )
    legend_y = MARGIN_T + 12
    k = 0
    for label, cs, ps in curves:
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{_f(px(c))},{_f(py(p))}" for c, p in zip(cs, ps))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for c, p in zip(cs, ps):
            out.append(f'<circle cx="{_f(px(c))}" cy="{_f(py(p))}" r="2" fill="{color}"/>')
        out.append(_legend(px(0) + 8, legend_y + 14 * k, color, label, dashed=False))
        k += 1
    for label, p in levels:
        color = COLORS[k % len(COLORS)]
        out.append(
            f'<line x1="{_f(px(0))}" y1="{_f(py(p))}" x2="{_f(px(1))}" y2="{_f(py(p))}" '
            f'stroke="{color}" stroke-dasharray="5,3"/>'
        )
        out.append(_legend(px(0) + 8, legend_y + 14 * k, color, label, dashed=True))
        k += 1
    return out


def _legend(x, y, color, label, dashed):
    dash = ' stroke-dasharray="5,3"' if dashed else ""
    return (
        f'<line x1="{_f(x)}" y1="{_f(y)}" x2="{_f(x + 18)}" y2="{_f(y)}" stroke="{color}"{dash}/>'
        f'<text x="{_f(x + 22)}" y="{_f(y + 4)}" font-size="10">{escape(label)}</text>'
    )


def power_chart(panels) -> str:
    """SVG document with one panel per entry of ``panels``.

    Each entry is ``(title, curves, levels)`` as taken by the panel renderer.
    """
    width = PANEL_W * max(1, len(panels))
    body = []
    for i, (title, curves, levels) in enumerate(panels):
        body += _panel(i * PANEL_W, title, curves, levels)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" '
        f'viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def study_charts(table, gammas, k11_grid, metrics=("replicability", "global")):
    """``{filename: svg_text}`` with one chart per (K11, gamma) cell of a power table."""
    charts = {}
    for k11 in k11_grid:
        for gamma in gammas:
            panels = []
            for metric in metrics:
                rows = table.select(metric=metric, gamma=gamma, k11=k11)
                if not rows:
                    continue
                mu = rows[0].mu
                curves, levels = [], []
                for method in (m for m, kind in METHODS.items() if kind == metric):
                    if method in WEIGHTED:
                        cs, ps, _ = table.curve(metric, method, gamma, k11)
                        if cs.size:
                            curves.append((method, cs, ps))
                    else:
                        found = table.select(metric, method, gamma, k11, c=None)
                        if found:
                            levels.append((method, found[0].power))
                title = f"{metric} power, K11={k11}, gamma={gamma:g}, mu={mu:g}"
                panels.append((title, curves, levels))
            if panels:
                charts[f"power_{k11}_{gamma:g}.svg"] = power_chart(panels)
    return charts
