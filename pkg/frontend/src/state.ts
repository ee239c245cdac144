/** View state and interaction logic, DOM-free.
 *
 * The navigator holds the loaded projection, the cursor's latent
 * position, up to two pinned anchors, the current morph path, and the
 * playback state. All interactions are idempotent reads of the service;
 * nothing here ever mutates server state. At most one decode request is
 * in flight: starting a new one aborts and supersedes the old
 * (latest-wins), and stale responses are dropped, so the last good view
 * is only ever replaced by a newer successful one.
 */

import { ApiClient } from "./api.js";
import { liftCoords } from "./lift.js";
import type {
  ModelInfo,
  MorphResponse,
  PointLabel,
  ProjectionPayload,
  SignalDecode,
  SymbolDecode,
} from "./types.js";

export interface Anchor {
  /** Dataset point index the anchor was pinned from. */
  index: number;
  coords: [number, number];
  triplets: number[][];
  label: PointLabel | undefined;
}

export interface DecodeView {
  /** Lifted (or encoded) latent the view was decoded from. */
  z: number[];
  coords: [number, number] | null;
  signal: SignalDecode;
  symbol: SymbolDecode;
}

export interface MorphView {
  a: Anchor;
  b: Anchor;
  steps: number;
  response: MorphResponse;
  /** Currently selected slider step, 0-based. */
  step: number;
}

export type Playback = "idle" | "playing";

export interface NavigatorHooks {
  /** Fatal load problem: show a banner with a retry control. */
  onBanner?: (message: string | null) => void;
  /** Non-blocking request failure: toast; last good view stays up. */
  onToast?: (message: string) => void;
  /** State changed: re-render. */
  onRender?: () => void;
}

/** Monotone token source; only the newest request may commit. */
export class LatestWins {
  private seq = 0;
  private controller: AbortController | null = null;

  next(): { token: number; signal: AbortSignal } {
    this.controller?.abort();
    this.controller = new AbortController();
    this.seq += 1;
    return { token: this.seq, signal: this.controller.signal };
  }

  isCurrent(token: number): boolean {
    return token === this.seq;
  }
}

function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}

export class Navigator {
  info: ModelInfo | null = null;
  projection: ProjectionPayload | null = null;
  cursor: { coords: [number, number]; z: number[] } | null = null;
  decode: DecodeView | null = null;
  anchors: Anchor[] = [];
  morph: MorphView | null = null;
  playback: Playback = "idle";

  private readonly decodeRace = new LatestWins();
  private readonly morphRace = new LatestWins();

  constructor(readonly api: ApiClient, private readonly hooks: NavigatorHooks = {}) {}

  private render(): void {
    this.hooks.onRender?.();
  }

  /** Fetch model info + projection; banner (with retry) on failure. */
  async loadProjection(): Promise<boolean> {
    try {
      this.info = await this.api.modelInfo();
      this.projection = await this.api.projection();
      this.hooks.onBanner?.(null);
      this.render();
      return true;
    } catch (err) {
      this.hooks.onBanner?.(`service not reachable: ${(err as Error).message}`);
      this.render();
      return false;
    }
  }

  /** Decode the latent lifted from 2-D map coords (latest-wins). */
  async decodeAt(coords: [number, number]): Promise<DecodeView | null> {
    const proj = this.projection;
    if (!proj) return null;
    const z = liftCoords(proj, coords);
    this.cursor = { coords, z };
    this.render();
    return this.decodeLatent(z, coords);
  }

  /** Decode an explicit latent; used for cursor moves and anchors. */
  async decodeLatent(z: number[], coords: [number, number] | null): Promise<DecodeView | null> {
    const { token, signal } = this.decodeRace.next();
    try {
      const [sig, sym] = await Promise.all([
        this.api.decodeSignal(z, signal),
        this.api.decodeSymbol(z, signal),
      ]);
      if (!this.decodeRace.isCurrent(token)) return null; // superseded
      this.decode = { z, coords, signal: sig, symbol: sym };
      this.render();
      return this.decode;
    } catch (err) {
      if (isAbort(err)) return null;
      if (this.decodeRace.isCurrent(token)) {
        this.hooks.onToast?.(`decode failed: ${(err as Error).message}`);
      }
      return null; // last good view retained
    }
  }

  /** Decode a pinned anchor through its exact symbol latent, so the
   * view matches morph endpoints bit-for-bit. */
  async decodeAnchor(anchor: Anchor): Promise<DecodeView | null> {
    try {
      const enc = await this.api.encodeSymbol(anchor.triplets);
      return await this.decodeLatent(enc.mean, anchor.coords);
    } catch (err) {
      if (!isAbort(err)) this.hooks.onToast?.(`decode failed: ${(err as Error).message}`);
      return null;
    }
  }

  /** Pin a dataset point as a morph anchor (keeps the newest two). */
  pinAnchor(index: number): Anchor | null {
    const proj = this.projection;
    const coords = proj?.coords[index];
    const label = proj?.labels[index];
    const triplets = label?.triplets;
    if (!proj || !coords || !triplets) return null;
    const anchor: Anchor = { index, coords: [coords[0], coords[1]], triplets, label };
    this.anchors = [...this.anchors, anchor].slice(-2);
    this.render();
    return anchor;
  }

  unpinAnchor(index: number): void {
    this.anchors = this.anchors.filter((a) => a.index !== index);
    this.render();
  }

  /** Morph between the two pinned anchors (latest-wins on rebuilds). */
  async buildMorph(steps: number): Promise<MorphView | null> {
    const [a, b] = this.anchors;
    if (!a || !b) {
      this.hooks.onToast?.("pin two anchors before morphing");
      return null;
    }
    const { token, signal } = this.morphRace.next();
    try {
      const response = await this.api.morph(a.triplets, b.triplets, steps, signal);
      if (!this.morphRace.isCurrent(token)) return null;
      this.morph = { a, b, steps, response, step: 0 };
      this.render();
      return this.morph;
    } catch (err) {
      if (!isAbort(err)) this.hooks.onToast?.(`morph failed: ${(err as Error).message}`);
      return null;
    }
  }

  setMorphStep(step: number): void {
    if (!this.morph) return;
    const last = this.morph.response.frames.length - 1;
    this.morph.step = Math.max(0, Math.min(last, Math.round(step)));
    this.render();
  }

  setPlayback(state: Playback): void {
    this.playback = state;
    this.render();
  }
}
