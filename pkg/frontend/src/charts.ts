/** Spectrum and probability-bar layouts.
 *
 * All values come straight from service responses; this module only
 * arranges them for rendering and formats the displayed sums.
 */

import { DYNAMICS_NAMES, PITCH_NAMES } from "./colors.js";

export interface BarGroup {
  /** e.g. "pitch — alto_sax" */
  title: string;
  family: string;
  source: number;
  labels: string[];
  values: number[];
  /** Raw sum of the probability vector (≈ 1 by construction). */
  sum: number;
  /** argmax index */
  top: number;
}

export function barLabelsFor(family: string, size: number): string[] {
  if (family === "pitch" && size === PITCH_NAMES.length) return [...PITCH_NAMES];
  if (family === "dynamics" && size === DYNAMICS_NAMES.length) return [...DYNAMICS_NAMES];
  return Array.from({ length: size }, (_, i) => String(i));
}

/** Displayed normalization check: probabilities summed then fixed to 2 dp. */
export function formatShare(sum: number): string {
  return sum.toFixed(2);
}

/** Group the service's 3·M probability vectors for rendering.
 *
 * `families` arrive ordered [pitch, octave, dynamics] per source.
 */
export function familyBarGroups(
  families: readonly number[][],
  familyNames: readonly string[],
  sources: readonly string[],
): BarGroup[] {
  const perSource = familyNames.length;
  if (perSource === 0 || families.length % perSource !== 0) {
    throw new Error(
      `got ${families.length} probability vectors for ${perSource} families`,
    );
  }
  const nSources = families.length / perSource;
  const groups: BarGroup[] = [];
  for (let s = 0; s < nSources; s += 1) {
    for (let f = 0; f < perSource; f += 1) {
      const values = families[s * perSource + f] ?? [];
      const family = familyNames[f] ?? `family ${f}`;
      const who = sources[s] ?? `source ${s + 1}`;
      let sum = 0;
      let top = 0;
      values.forEach((v, i) => {
        sum += v;
        if (v > (values[top] ?? -Infinity)) top = i;
      });
      groups.push({
        title: nSources > 1 ? `${family} — ${who}` : family,
        family,
        source: s,
        labels: barLabelsFor(family, values.length),
        values: [...values],
        sum,
        top,
      });
    }
  }
  return groups;
}

export interface SpectrumPoint {
  x: number;
  y: number;
}

/** Polyline for an F-bin magnitude frame, normalized into the box. */
export function spectrumPath(
  magnitudes: readonly number[],
  width: number,
  height: number,
  pad = 4,
): SpectrumPoint[] {
  const n = magnitudes.length;
  if (n === 0) return [];
  let peak = 0;
  for (const m of magnitudes) peak = Math.max(peak, m);
  const scale = peak > 0 ? (height - 2 * pad) / peak : 0;
  const step = n > 1 ? (width - 2 * pad) / (n - 1) : 0;
  return magnitudes.map((m, i) => ({
    x: pad + i * step,
    y: height - pad - m * scale,
  }));
}

export function drawSpectrum(
  ctx: CanvasRenderingContext2D,
  magnitudes: readonly number[],
  width: number,
  height: number,
  color = "#6ec1ff",
): void {
  ctx.clearRect(0, 0, width, height);
  const pts = spectrumPath(magnitudes, width, height);
  if (pts.length === 0) return;
  ctx.save();
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.25;
  ctx.beginPath();
  pts.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
  ctx.stroke();
  ctx.restore();
}
