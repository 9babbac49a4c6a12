/** Force-bar layout and SVG rendering.
 *
 * Red bars push the prediction above the base value, blue bars below; each
 * bar's width is proportional to its attribution magnitude. The base and
 * output values are annotated, and feature name = value labels sit beneath
 * the bars.
 */

import type { ForceBar, ForceData } from './types.js';

export const RED = '#d62728';
export const BLUE = '#1f77b4';

export interface LaidOutBar extends ForceBar {
  x: number;
  width: number;
  color: string;
}

export interface ForceLayout {
  bars: LaidOutBar[];
  baseValue: number;
  outputValue: number;
  /** x position of the output marker (boundary between red and blue runs). */
  outputX: number;
  width: number;
}

/** Sum of every rendered bar contribution plus the base value. */
export function barContributionTotal(f: ForceData): number {
  let total = f.base_value;
  for (const bar of [...f.positive, ...f.negative]) {
    total += bar.phi;
  }
  return total;
}

export function layoutForce(f: ForceData, width = 720, pad = 10): ForceLayout {
  const magnitude = (bars: ForceBar[]) =>
    bars.reduce((acc, b) => acc + Math.abs(b.phi), 0);
  const total = magnitude(f.positive) + magnitude(f.negative);
  const usable = width - 2 * pad;
  const bars: LaidOutBar[] = [];
  let x = pad;
  if (total > 0) {
    for (const [color, group] of [
      [RED, f.positive],
      [BLUE, f.negative],
    ] as const) {
      for (const bar of group) {
        const w = (usable * Math.abs(bar.phi)) / total;
        bars.push({ ...bar, x, width: w, color });
        x += w;
      }
    }
  }
  const outputX =
    total > 0 ? pad + (usable * magnitude(f.positive)) / total : width / 2;
  return {
    bars,
    baseValue: f.base_value,
    outputValue: f.output_value,
    outputX,
    width,
  };
}

const esc = (s: string) =>
  s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');

export function renderForceSvg(f: ForceData, width = 720): string {
  const layout = layoutForce(f, width);
  const barH = 26;
  const labelH = 16;
  const height = barH + 3 * labelH + 20;
  const y0 = labelH + 10;
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">`,
    `<text x="10" y="${labelH}" font-size="12">base ${layout.baseValue.toFixed(2)}` +
      ` &#8594; output ${layout.outputValue.toFixed(2)}</text>`,
  ];
  for (const bar of layout.bars) {
    parts.push(
      `<rect x="${bar.x.toFixed(2)}" y="${y0}" width="${Math.max(bar.width, 0.5).toFixed(2)}"` +
        ` height="${barH}" fill="${bar.color}" fill-opacity="0.85"` +
        ` data-feature="${esc(bar.feature)}" data-phi="${bar.phi}"/>`,
    );
    if (bar.width > 36) {
      parts.push(
        `<text x="${(bar.x + bar.width / 2).toFixed(2)}" y="${y0 + barH + labelH}"` +
          ` font-size="10" text-anchor="middle">${esc(bar.feature)} = ${bar.value}</text>`,
      );
    }
  }
  parts.push(
    `<line x1="${layout.outputX.toFixed(2)}" y1="${y0 - 4}" x2="${layout.outputX.toFixed(2)}"` +
      ` y2="${y0 + barH + 4}" stroke="black" stroke-width="2"/>`,
  );
  if (layout.bars.length === 0) {
    parts.push(
      `<text x="${layout.outputX.toFixed(2)}" y="${y0 + barH + labelH}" font-size="11"` +
        ` text-anchor="middle">base = output</text>`,
    );
  }
  parts.push('</svg>');
  return parts.join('\n');
}
