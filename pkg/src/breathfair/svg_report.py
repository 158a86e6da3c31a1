"""Self-contained SVG bar charts with error bars for run reports.

No external plotting dependency: the figures are archival artifacts, so
they are plain hand-written SVG with inline styles and no scripts. Each
bar sits in its own <g id="bars-<metric>-<series>-<phase>"> element so
reports are easy to post-process.
"""

from __future__ import annotations

from dataclasses import dataclass

_SERIES_COLORS = {
    "female": "#d62728",
    "male": "#1f77b4",
    "value": "#7f7f7f",
}
_PHASE_SHADE = {"before": 1.0, "after": 0.55}

PANEL_W = 300
PANEL_H = 260
MARGIN = 48


@dataclass(frozen=True)
class Bar:
    metric: str
    series: str  # group name, or "value" for scalar metrics
    phase: str   # "before" | "after"
    mean: float
    err: float


@dataclass(frozen=True)
class Panel:
    title: str
    bars: list[Bar]


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _shade(color: str, factor: float) -> str:
    r, g, b = (int(color[i:i + 2], 16) for i in (1, 3, 5))
    mix = lambda c: int(255 - (255 - c) * factor)
    return f"#{mix(r):02x}{mix(g):02x}{mix(b):02x}"


def _panel_svg(panel: Panel, x0: float) -> list[str]:
    top = MARGIN * 0.8
    plot_h = PANEL_H - top - MARGIN
    plot_w = PANEL_W - 2 * MARGIN
    y_max = max((b.mean + b.err for b in panel.bars), default=1.0)
    y_max = max(y_max * 1.15, 1e-9)
    n = len(panel.bars)
    slot = plot_w / max(n, 1)
    bar_w = slot * 0.62

    out = [f'<g transform="translate({x0:.1f},0)">']
    out.append(
        f'<text x="{MARGIN + plot_w / 2:.1f}" y="{top - 10:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" font-weight="bold">{_esc(panel.title)}</text>')
    # axes
    out.append(f'<line x1="{MARGIN}" y1="{top:.1f}" x2="{MARGIN}" y2="{top + plot_h:.1f}" '
               'stroke="#333" stroke-width="1"/>')
    out.append(f'<line x1="{MARGIN}" y1="{top + plot_h:.1f}" x2="{MARGIN + plot_w}" '
               f'y2="{top + plot_h:.1f}" stroke="#333" stroke-width="1"/>')
    for k in range(5):
        val = y_max * k / 4
        y = top + plot_h - plot_h * k / 4
        out.append(f'<line x1="{MARGIN - 4}" y1="{y:.1f}" x2="{MARGIN}" y2="{y:.1f}" '
                   'stroke="#333" stroke-width="1"/>')
        out.append(f'<text x="{MARGIN - 7}" y="{y + 4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{val:.3f}</text>')
    for i, bar in enumerate(panel.bars):
        cx = MARGIN + slot * (i + 0.5)
        h = plot_h * bar.mean / y_max
        y = top + plot_h - h
        color = _shade(_SERIES_COLORS.get(bar.series, "#7f7f7f"),
                       _PHASE_SHADE.get(bar.phase, 1.0))
        gid = f"bars-{bar.metric}-{bar.series}-{bar.phase}"
        out.append(f'<g id="{_esc(gid)}">')
        out.append(f'<rect x="{cx - bar_w / 2:.1f}" y="{y:.1f}" width="{bar_w:.1f}" '
                   f'height="{h:.1f}" fill="{color}" stroke="#333" stroke-width="0.5"/>')
        if bar.err > 0:
            e = plot_h * bar.err / y_max
            out.append(f'<line x1="{cx:.1f}" y1="{y - e:.1f}" x2="{cx:.1f}" '
                       f'y2="{min(y + e, top + plot_h):.1f}" stroke="#000" stroke-width="1"/>')
            for ey in (y - e, min(y + e, top + plot_h)):
                out.append(f'<line x1="{cx - 4:.1f}" y1="{ey:.1f}" x2="{cx + 4:.1f}" '
                           f'y2="{ey:.1f}" stroke="#000" stroke-width="1"/>')
        out.append('</g>')
        tag = bar.phase if bar.series == "value" else f"{bar.series[0]}/{bar.phase[0]}"
        out.append(f'<text x="{cx:.1f}" y="{top + plot_h + 14:.1f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="9">{_esc(tag)}</text>')
    out.append('</g>')
    return out


def render_figure(title: str, panels: list[Panel], path) -> None:
    width = PANEL_W * len(panels)
    height = PANEL_H + 24
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="{PANEL_H + 12:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_esc(title)}</text>',
    ]
    for i, panel in enumerate(panels):
        out.extend(_panel_svg(panel, i * PANEL_W))
    out.append('</svg>')
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
