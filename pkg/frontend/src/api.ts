/** Thin typed client for the model service.
 *
 * Every call is an idempotent read or a pure computation on the server;
 * the client only ever issues GET and POST, never anything that could
 * mutate server state. The fetch function is injectable for tests.
 */

import type {
  EncodeResponse,
  ModelInfo,
  MorphResponse,
  ProjectionPayload,
  SignalDecode,
  SymbolDecode,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(readonly baseUrl: string, fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    const init: RequestInit = { method, signal };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError(`service unreachable: ${String(err)}`);
    }
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      throw new ApiError(`non-JSON response from ${path}`, response.status);
    }
    if (!response.ok) {
      const detail =
        payload && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : response.statusText;
      throw new ApiError(detail, response.status);
    }
    return payload as T;
  }

  modelInfo(signal?: AbortSignal): Promise<ModelInfo> {
    return this.request("GET", "/model/info", undefined, signal);
  }

  projection(signal?: AbortSignal): Promise<ProjectionPayload> {
    return this.request("GET", "/latent/projection", undefined, signal);
  }

  encodeSymbol(triplets: number[][], signal?: AbortSignal): Promise<EncodeResponse> {
    return this.request("POST", "/encode/symbol", { triplets }, signal);
  }

  decodeSignal(z: number[], signal?: AbortSignal): Promise<SignalDecode> {
    return this.request("POST", "/decode/signal", { z }, signal);
  }

  decodeSymbol(z: number[], signal?: AbortSignal): Promise<SymbolDecode> {
    return this.request("POST", "/decode/symbol", { z }, signal);
  }

  synthesize(
    triplets: number[][],
    duration: number,
    signal?: AbortSignal,
  ): Promise<{ wav_base64: string; sample_rate: number; frame: number[]; z: number[] }> {
    return this.request("POST", "/synthesize", { triplets, duration }, signal);
  }

  morph(
    a: number[][],
    b: number[][],
    steps: number,
    signal?: AbortSignal,
  ): Promise<MorphResponse> {
    return this.request("POST", "/morph", { a, b, steps }, signal);
  }

  trajectory(
    points: number[][],
    signal?: AbortSignal,
  ): Promise<{ wav_base64: string; sample_rate: number; frames: number[][] }> {
    return this.request("POST", "/trajectory", { points }, signal);
  }
}
