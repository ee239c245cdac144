/** Scatter layout for the 2-D latent map.
 *
 * The layout functions are pure (data coords ↔ pixel coords, hit
 * testing, legend), so they are unit-testable without a DOM; a thin
 * draw routine paints the result onto a canvas context.
 */

import { PITCH_NAMES, PITCH_COLORS, colorForPitchClass, pitchClassOf } from "./colors.js";
import type { ProjectionPayload } from "./types.js";

export interface Marker {
  index: number;
  x: number;
  y: number;
  pitchClass: number | null;
  color: string;
}

export interface ViewBox {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

export interface LayoutSpec {
  width: number;
  height: number;
  margin: number;
}

export function computeViewBox(coords: readonly [number, number][], pad = 0.06): ViewBox {
  if (coords.length === 0) return { minX: -1, maxX: 1, minY: -1, maxY: 1 };
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const [x, y] of coords) {
    minX = Math.min(minX, x); maxX = Math.max(maxX, x);
    minY = Math.min(minY, y); maxY = Math.max(maxY, y);
  }
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);
  return {
    minX: minX - pad * spanX,
    maxX: maxX + pad * spanX,
    minY: minY - pad * spanY,
    maxY: maxY + pad * spanY,
  };
}

export function dataToPixel(
  box: ViewBox, spec: LayoutSpec, coords: readonly [number, number],
): [number, number] {
  const innerW = spec.width - 2 * spec.margin;
  const innerH = spec.height - 2 * spec.margin;
  const px = spec.margin + ((coords[0] - box.minX) / (box.maxX - box.minX)) * innerW;
  // canvas y grows downward; data y grows upward
  const py = spec.margin + (1 - (coords[1] - box.minY) / (box.maxY - box.minY)) * innerH;
  return [px, py];
}

export function pixelToData(
  box: ViewBox, spec: LayoutSpec, pixel: readonly [number, number],
): [number, number] {
  const innerW = spec.width - 2 * spec.margin;
  const innerH = spec.height - 2 * spec.margin;
  const x = box.minX + ((pixel[0] - spec.margin) / innerW) * (box.maxX - box.minX);
  const y = box.minY + (1 - (pixel[1] - spec.margin) / innerH) * (box.maxY - box.minY);
  return [x, y];
}

/** One marker per projection point, in pixel space. */
export function layoutMarkers(proj: ProjectionPayload, box: ViewBox, spec: LayoutSpec): Marker[] {
  return proj.coords.map((c, index) => {
    const [x, y] = dataToPixel(box, spec, c);
    const pc = pitchClassOf(proj.labels[index]);
    return { index, x, y, pitchClass: pc, color: colorForPitchClass(pc) };
  });
}

/** Closest marker within `radius` pixels, or null. */
export function nearestMarker(
  markers: readonly Marker[], px: number, py: number, radius = 9,
): Marker | null {
  let best: Marker | null = null;
  let bestD = radius * radius;
  for (const m of markers) {
    const d = (m.x - px) * (m.x - px) + (m.y - py) * (m.y - py);
    if (d <= bestD) {
      best = m;
      bestD = d;
    }
  }
  return best;
}

export interface LegendEntry {
  name: string;
  color: string;
}

/** Twelve pitch-class swatches. */
export function legendEntries(): LegendEntry[] {
  return PITCH_NAMES.map((name, i) => ({ name, color: PITCH_COLORS[i] ?? "#999" }));
}

export interface ScatterDecorations {
  cursor?: readonly [number, number] | null;
  anchorIndices?: readonly number[];
  hoverIndex?: number | null;
}

export function drawScatter(
  ctx: CanvasRenderingContext2D,
  markers: readonly Marker[],
  spec: LayoutSpec,
  deco: ScatterDecorations = {},
): void {
  ctx.clearRect(0, 0, spec.width, spec.height);
  ctx.save();
  ctx.strokeStyle = "rgba(255,255,255,0.18)";
  ctx.strokeRect(spec.margin, spec.margin, spec.width - 2 * spec.margin, spec.height - 2 * spec.margin);
  for (const m of markers) {
    ctx.beginPath();
    ctx.fillStyle = m.color;
    ctx.arc(m.x, m.y, m.index === deco.hoverIndex ? 6 : 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  for (const idx of deco.anchorIndices ?? []) {
    const m = markers[idx];
    if (!m) continue;
    ctx.beginPath();
    ctx.strokeStyle = "#fff";
    ctx.lineWidth = 2;
    ctx.arc(m.x, m.y, 8, 0, 2 * Math.PI);
    ctx.stroke();
  }
  if (deco.cursor) {
    const [cx, cy] = deco.cursor;
    ctx.strokeStyle = "#ffd166";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(cx - 7, cy); ctx.lineTo(cx + 7, cy);
    ctx.moveTo(cx, cy - 7); ctx.lineTo(cx, cy + 7);
    ctx.stroke();
  }
  ctx.restore();
}
