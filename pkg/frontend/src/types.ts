/** Payload shapes of the model service's JSON endpoints. */

export interface VocabInfo {
  instruments: string[];
  octaves: number;
}

export interface ModelInfo {
  service: string;
  version: number;
  latent_dim: number;
  input_dim: number;
  architecture: unknown;
  vocab: VocabInfo;
  families: string[];
  family_sizes: number[];
  n_sources: number;
  sample_rate: number;
  has_projection: boolean;
  endpoints: Record<string, string>;
}

/** One scatter point's metadata. */
export interface PointLabel {
  split: string;
  /** One `[pitchClass, octave, dynamics]` triplet per source, or null. */
  triplets: number[][] | null;
  instruments: string[] | null;
}

/** Rank-2 latent map: `z = center + coords · basis`. */
export interface ProjectionPayload {
  coords: [number, number][];
  basis: number[][];
  center: number[];
  explained: number[];
  labels: PointLabel[];
}

export interface EncodeResponse {
  mean: number[];
  log_var: number[];
  z_sample?: number[];
}

export interface SignalDecode {
  magnitudes: number[];
  log_var: number[];
}

export interface SymbolDecode {
  /** 3·M probability vectors: [pitch, octave, dynamics] per source. */
  families: number[][];
  triplets?: number[][];
  confidences?: number[];
}

export interface MorphResponse {
  frames: number[][];
  latents: number[][];
  wav_base64: string;
  sample_rate: number;
}
