/** Pitch-class palette and label helpers shared by scatter and charts. */

import type { PointLabel } from "./types.js";

export const PITCH_NAMES = [
  "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
] as const;

export const DYNAMICS_NAMES = ["pp", "mf", "ff"] as const;

/** One hue per pitch class, evenly spaced around the wheel. */
export const PITCH_COLORS: readonly string[] = PITCH_NAMES.map(
  (_, i) => `hsl(${i * 30}, 72%, 55%)`,
);

export const NEUTRAL_COLOR = "hsl(0, 0%, 62%)";

/** Pitch class of a point's first source, or null for unlabeled points. */
export function pitchClassOf(label: PointLabel | undefined): number | null {
  const pc = label?.triplets?.[0]?.[0];
  return typeof pc === "number" && pc >= 0 && pc < 12 ? pc : null;
}

export function colorForPitchClass(pc: number | null): string {
  return pc === null ? NEUTRAL_COLOR : PITCH_COLORS[pc] ?? NEUTRAL_COLOR;
}

/** Human-readable "<pitch><octave>:<dyn>" per source. */
export function tripletText(triplets: number[][] | null | undefined): string {
  if (!triplets || triplets.length === 0) return "(unlabeled)";
  return triplets
    .map(([pc, oct, dyn]) => {
      const name = typeof pc === "number" ? PITCH_NAMES[pc] ?? "?" : "?";
      const d = typeof dyn === "number" ? DYNAMICS_NAMES[dyn] ?? "?" : "?";
      return `${name}${oct ?? "?"}:${d}`;
    })
    .join(" + ");
}
