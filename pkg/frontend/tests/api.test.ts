import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, FetchLike } from "../src/api.js";

interface Recorded {
  url: string;
  method: string;
  body: unknown;
}

function recordingFetch(
  respond: (url: string) => { status: number; payload: unknown },
): { fetchFn: FetchLike; calls: Recorded[] } {
  const calls: Recorded[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    });
    const { status, payload } = respond(url);
    return {
      ok: status >= 200 && status < 300,
      status,
      statusText: String(status),
      json: async () => payload,
    } as Response;
  };
  return { fetchFn, calls };
}

describe("ApiClient", () => {
  it("issues the documented method and path per endpoint", async () => {
    const { fetchFn, calls } = recordingFetch(() => ({ status: 200, payload: {} }));
    const api = new ApiClient("http://svc", fetchFn);
    await api.modelInfo();
    await api.projection();
    await api.decodeSignal([1, 2]);
    await api.decodeSymbol([1, 2]);
    await api.encodeSymbol([[0, 4, 1]]);
    await api.morph([[0, 4, 1]], [[7, 3, 2]], 9);
    await api.trajectory([[0.5, -0.5]]);
    expect(calls.map((c) => `${c.method} ${c.url}`)).toEqual([
      "GET http://svc/model/info",
      "GET http://svc/latent/projection",
      "POST http://svc/decode/signal",
      "POST http://svc/decode/symbol",
      "POST http://svc/encode/symbol",
      "POST http://svc/morph",
      "POST http://svc/trajectory",
    ]);
  });

  it("never uses a mutating HTTP method", async () => {
    const { fetchFn, calls } = recordingFetch(() => ({ status: 200, payload: {} }));
    const api = new ApiClient("http://svc", fetchFn);
    await api.modelInfo();
    await api.decodeSignal([0]);
    await api.decodeSymbol([0]);
    await api.encodeSymbol([[0, 0, 0]]);
    await api.morph([[0, 0, 0]], [[1, 1, 1]], 2);
    await api.trajectory([[0]]);
    await api.synthesize([[0, 0, 0]], 1.0);
    for (const call of calls) {
      expect(["GET", "POST"]).toContain(call.method);
    }
  });

  it("sends the exact JSON bodies", async () => {
    const { fetchFn, calls } = recordingFetch(() => ({ status: 200, payload: {} }));
    const api = new ApiClient("http://svc", fetchFn);
    await api.decodeSignal([0.5, -1]);
    await api.morph([[0, 4, 1]], [[7, 3, 2]], 5);
    expect(calls[0]?.body).toEqual({ z: [0.5, -1] });
    expect(calls[1]?.body).toEqual({ a: [[0, 4, 1]], b: [[7, 3, 2]], steps: 5 });
  });

  it("surfaces the server's error message with the status", async () => {
    const { fetchFn } = recordingFetch(() => ({
      status: 400,
      payload: { error: "bad z shape" },
    }));
    const api = new ApiClient("http://svc", fetchFn);
    const err = await api.decodeSignal([1]).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toContain("bad z shape");
    expect((err as ApiError).status).toBe(400);
  });

  it("wraps network failures in ApiError", async () => {
    const api = new ApiClient("http://svc", async () => {
      throw new TypeError("connect ECONNREFUSED");
    });
    const err = await api.modelInfo().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toContain("unreachable");
  });

  it("parses typed payloads through unchanged", async () => {
    const families = [
      [0.9, 0.1],
      [0.2, 0.8],
    ];
    const { fetchFn } = recordingFetch(() => ({
      status: 200,
      payload: { families, triplets: [[0, 4, 1]], confidences: [0.9, 0.8, 0.7] },
    }));
    const api = new ApiClient("http://svc", fetchFn);
    const out = await api.decodeSymbol([0, 0]);
    expect(out.families).toEqual(families);
    expect(out.triplets).toEqual([[0, 4, 1]]);
  });
});
