// One coordinator session on one trial: serialized submissions with
// idempotency keys.
//
// Exactly one enrollment may be in flight per trial per session; a second
// submit while the first is pending is rejected synchronously, which is
// the double-submit protection (two rapid clicks produce one enrollment).
// Each submission gets a fresh idempotency key; retries inside the client
// reuse it, so a timed-out-then-retried submission replays the stored
// assignment instead of enrolling twice.

import type { ApiClient, RetryOptions } from "./api.js";
import type { EnrollmentResult } from "./types.js";

export class SubmitBlockedError extends Error {
  constructor() {
    super("an enrollment is already in flight for this trial");
    this.name = "SubmitBlockedError";
  }
}

export interface HistoryEntry {
  key: string;
  covariates: number[];
  result: EnrollmentResult;
}

export function newIdempotencyKey(): string {
  const c = globalThis.crypto as Crypto | undefined;
  if (c?.randomUUID) return c.randomUUID();
  return `key-${Date.now()}-${Math.random().toString(36).slice(2, 12)}`;
}

export class EnrollmentSession {
  readonly history: HistoryEntry[] = [];
  private busy = false;

  constructor(
    private readonly client: ApiClient,
    readonly trialId: string,
    private readonly retry: RetryOptions = {},
  ) {}

  get inFlight(): boolean {
    return this.busy;
  }

  async submit(covariates: number[]): Promise<EnrollmentResult> {
    if (this.busy) throw new SubmitBlockedError();
    this.busy = true;
    const key = newIdempotencyKey();
    try {
      const result = await this.client.enroll(this.trialId, covariates, key, this.retry);
      this.history.push({ key, covariates: [...covariates], result });
      return result;
    } finally {
      this.busy = false;
    }
  }
}
