// HTTP client for the allocation service.
//
// Every arm shown in the console comes from a service response; the client
// never computes an allocation locally.  Enrollment requests are
// retry-safe: transient failures (network errors, 5xx, timeouts) are
// retried with the *same* idempotency key, so a retry can only replay the
// already-stored assignment, never create a second one.

import type {
  CreateTrialResult,
  EnrollmentResult,
  ErrorBody,
  StatusSnapshot,
  TrialConfigSpec,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly field?: string;
  readonly status: number;

  constructor(status: number, body: ErrorBody) {
    super(body.message ?? `HTTP ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.code = body.code ?? "http_error";
    this.field = body.field;
  }
}

export interface RetryOptions {
  maxAttempts?: number;
  baseDelayMs?: number;
  timeoutMs?: number;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export class ApiClient {
  readonly baseUrl: string;
  private readonly token?: string;

  constructor(baseUrl: string, token?: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = token;
  }

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    opts: RetryOptions = {},
  ): Promise<T> {
    const maxAttempts = opts.maxAttempts ?? 4;
    const baseDelay = opts.baseDelayMs ?? 250;
    const timeoutMs = opts.timeoutMs ?? 10_000;
    let lastError: unknown;

    for (let attempt = 1; attempt <= maxAttempts; attempt++) {
      const controller = new AbortController();
      const timer = setTimeout(() => controller.abort(), timeoutMs);
      try {
        const resp = await fetch(this.baseUrl + path, {
          method,
          headers: this.headers(),
          body: body === undefined ? undefined : JSON.stringify(body),
          signal: controller.signal,
        });
        clearTimeout(timer);
        if (resp.ok) {
          return (await resp.json()) as T;
        }
        if (resp.status >= 500 && attempt < maxAttempts) {
          lastError = new Error(`HTTP ${resp.status}`);
          await sleep(baseDelay * 2 ** (attempt - 1));
          continue;
        }
        const errBody = (await resp
          .json()
          .catch(() => ({ code: "http_error", message: `HTTP ${resp.status}` }))) as ErrorBody;
        throw new ApiError(resp.status, errBody);
      } catch (err) {
        clearTimeout(timer);
        if (err instanceof ApiError) throw err;
        // network failure or timeout: safe to retry, the body (and its
        // idempotency key) is identical on every attempt
        lastError = err;
        if (attempt === maxAttempts) break;
        await sleep(baseDelay * 2 ** (attempt - 1));
      }
    }
    throw lastError instanceof Error ? lastError : new Error(String(lastError));
  }

  createTrial(
    config: TrialConfigSpec,
    opts: { seed?: number; idempotencyToken?: string } & RetryOptions = {},
  ): Promise<CreateTrialResult> {
    return this.request<CreateTrialResult>(
      "POST",
      "/trials",
      {
        config,
        seed: opts.seed ?? null,
        idempotency_token: opts.idempotencyToken ?? null,
      },
      opts,
    );
  }

  enroll(
    trialId: string,
    covariates: number[],
    idempotencyKey: string,
    opts: RetryOptions = {},
  ): Promise<EnrollmentResult> {
    return this.request<EnrollmentResult>(
      "POST",
      `/trials/${trialId}/enrollments`,
      { covariates, idempotency_key: idempotencyKey },
      opts,
    );
  }

  getStatus(trialId: string, opts: RetryOptions = {}): Promise<StatusSnapshot> {
    return this.request<StatusSnapshot>("GET", `/trials/${trialId}/status`, undefined, {
      maxAttempts: 1,
      ...opts,
    });
  }

  health(opts: RetryOptions = {}): Promise<{ status: string }> {
    return this.request<{ status: string }>("GET", "/healthz", undefined, {
      maxAttempts: 1,
      ...opts,
    });
  }
}
