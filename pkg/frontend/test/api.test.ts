import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

const enrollmentBody = {
  schema: "carkit.enrollment/1",
  trial_id: "t1",
  unit_index: 1,
  arm: 1,
  probability: 0.5,
  u: 0.25,
  imbalance: { n: 1, n1: 1, n2: 0, imb: 1.0 },
};

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
  vi.useRealTimers();
});

describe("ApiClient.enroll", () => {
  it("retries transient failures with the same idempotency key", async () => {
    const bodies: string[] = [];
    const fetchMock = vi
      .fn()
      .mockImplementationOnce(async (_url, init) => {
        bodies.push(init!.body as string);
        throw new TypeError("network down");
      })
      .mockImplementationOnce(async (_url, init) => {
        bodies.push(init!.body as string);
        return jsonResponse(503, { detail: "busy" });
      })
      .mockImplementationOnce(async (_url, init) => {
        bodies.push(init!.body as string);
        return jsonResponse(200, enrollmentBody);
      });
    vi.stubGlobal("fetch", fetchMock);

    const client = new ApiClient("http://x/");
    const out = await client.enroll("t1", [0.4], "KEY-1", { baseDelayMs: 1 });
    expect(out.arm).toBe(1);
    expect(fetchMock).toHaveBeenCalledTimes(3);
    expect(new Set(bodies).size).toBe(1);
    expect(JSON.parse(bodies[0]!)).toEqual({
      covariates: [0.4],
      idempotency_key: "KEY-1",
    });
  });

  it("maps service errors to ApiError with code and field", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse(400, {
          code: "dimension_mismatch",
          field: "covariates",
          message: "expected 2 covariates, got 1",
        }),
      ),
    );
    const client = new ApiClient("http://x");
    const err = await client.enroll("t1", [1], "K").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("dimension_mismatch");
    expect(err.field).toBe("covariates");
    expect(err.status).toBe(400);
  });

  it("does not retry 4xx responses", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse(409, { code: "idempotency_conflict", message: "dup" }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient("http://x");
    await expect(client.enroll("t1", [1], "K")).rejects.toMatchObject({
      code: "idempotency_conflict",
    });
    expect(fetchMock).toHaveBeenCalledTimes(1);
  });

  it("gives up after maxAttempts transient failures", async () => {
    const fetchMock = vi.fn(async () => {
      throw new TypeError("refused");
    });
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient("http://x");
    await expect(
      client.enroll("t1", [1], "K", { maxAttempts: 3, baseDelayMs: 1 }),
    ).rejects.toThrow(/refused/);
    expect(fetchMock).toHaveBeenCalledTimes(3);
  });
});

describe("ApiClient auth and paths", () => {
  it("sends the bearer token and hits the documented endpoints", async () => {
    const calls: { url: string; auth?: string }[] = [];
    vi.stubGlobal(
      "fetch",
      vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
        calls.push({
          url: String(url),
          auth: (init?.headers as Record<string, string>)["Authorization"],
        });
        return jsonResponse(200, { status: "ok" });
      }),
    );
    const client = new ApiClient("http://svc:9", "sekrit");
    await client.health();
    await client.getStatus("abc");
    expect(calls[0]).toEqual({ url: "http://svc:9/healthz", auth: "Bearer sekrit" });
    expect(calls[1]).toEqual({
      url: "http://svc:9/trials/abc/status",
      auth: "Bearer sekrit",
    });
  });

  it("createTrial posts config with optional idempotency token", async () => {
    let posted: unknown;
    vi.stubGlobal(
      "fetch",
      vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
        posted = JSON.parse(init!.body as string);
        return jsonResponse(201, { trial_id: "t9", status: { n: 0 } });
      }),
    );
    const client = new ApiClient("http://svc");
    const config = {
      rho: 0.5,
      gamma: 0.75,
      allocation: { kind: "constant" as const, rho: 0.5 },
      feature_map: { kind: "linear" as const, p: 1 },
    };
    const out = await client.createTrial(config, { idempotencyToken: "tok" });
    expect(out.trial_id).toBe("t9");
    expect(posted).toEqual({ config, seed: null, idempotency_token: "tok" });
  });
});
