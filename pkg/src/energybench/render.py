"""Static renderings of force explanations: plain text and SVG.

The SVG is a single horizontal strip: prediction-raising bars in red to the
left of the output marker, prediction-lowering bars in blue to the right,
widths proportional to each attribution's magnitude, labels beneath.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

from .explain import ForceData

RED = "#d62728"
BLUE = "#1f77b4"


def force_text(f: ForceData) -> str:
    lines = [f"base value:   {f.base_value:.4f}",
             f"output value: {f.output_value:.4f}"]
    rows = [("+", name, value, phi) for name, value, phi in f.positive]
    rows += [("-", name, value, phi) for name, value, phi in f.negative]
    rows.sort(key=lambda r: -abs(r[3]))
    for sign, name, value, phi in rows:
        lines.append(f"  {sign} {name} = {value:g}  (phi {phi:+.4f})")
    if not rows:
        lines.append("  (no non-zero contributions)")
    return "\n".join(lines)


def force_svg(f: ForceData, width: int = 720, bar_height: int = 26) -> str:
    total = sum(abs(p) for _, _, p in f.positive) + \
            sum(abs(p) for _, _, p in f.negative)
    pad, label_h = 10, 16
    height = bar_height + 3 * label_h + 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{pad}" y="{label_h}" font-size="12">'
        f'base {f.base_value:.4f} &#8594; output {f.output_value:.4f}</text>',
    ]
    y0 = label_h + pad
    if total == 0:
        x = width / 2
        parts.append(f'<line x1="{x}" y1="{y0}" x2="{x}" y2="{y0 + bar_height}" '
                     f'stroke="black" stroke-width="2"/>')
        parts.append(f'<text x="{x + 4}" y="{y0 + bar_height + label_h}" font-size="11">'
                     f'base = output</text>')
    else:
        usable = width - 2 * pad
        # positives drawn first (pushing right toward the output marker), then negatives
        x = float(pad)
        marker = pad + usable * sum(abs(p) for _, _, p in f.positive) / total
        for color, group in ((RED, f.positive), (BLUE, f.negative)):
            for name, value, phi in group:
                w = usable * abs(phi) / total
                parts.append(
                    f'<rect x="{x:.2f}" y="{y0}" width="{max(w, 0.5):.2f}" '
                    f'height="{bar_height}" fill="{color}" fill-opacity="0.85"/>')
                if w > 30:
                    parts.append(
                        f'<text x="{x + w / 2:.2f}" y="{y0 + bar_height + label_h}" '
                        f'font-size="10" text-anchor="middle">'
                        f'{escape(name)} = {value:g}</text>')
                x += w
        parts.append(f'<line x1="{marker:.2f}" y1="{y0 - 4}" x2="{marker:.2f}" '
                     f'y2="{y0 + bar_height + 4}" stroke="black" stroke-width="2"/>')
        parts.append(f'<text x="{marker:.2f}" y="{y0 + bar_height + 2 * label_h}" '
                     f'font-size="11" text-anchor="middle">output {f.output_value:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
