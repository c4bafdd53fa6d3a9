// Round trip against a live allocation service: create a trial, enroll 50
// units through the console session, then replay the persisted
// (covariates, u) log through the offline engine and require the identical
// arm sequence.  Also exercises double-submit protection and retry-safe
// idempotent enrollment against the real server.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EnrollmentSession, newIdempotencyKey } from "../src/session.js";
import type { TrialConfigSpec } from "../src/types.js";

const PYTHON = process.env.CARKIT_PYTHON ?? "python3";
const PORT = 18731 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

let proc: ChildProcess;
let dataDir: string;

const config: TrialConfigSpec = {
  rho: 0.5,
  gamma: 0.75,
  allocation: { kind: "clamped_linear", rho: 0.5, lambda: 1.0 },
  feature_map: { kind: "linear", p: 2, include_intercept: true },
};

async function waitForHealth(client: ApiClient, timeoutMs = 30_000) {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      await client.health({ timeoutMs: 1000 });
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((r) => setTimeout(r, 250));
    }
  }
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "carkit-e2e-"));
  proc = spawn(
    PYTHON,
    ["-m", "carkit.cli", "serve", "--port", String(PORT), "--data", dataDir],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  proc.stderr?.on("data", (chunk: Buffer) => {
    const text = chunk.toString();
    if (text.includes("Traceback")) console.error(text);
  });
  await waitForHealth(new ApiClient(BASE));
}, 40_000);

afterAll(() => {
  proc?.kill();
  if (dataDir) rmSync(dataDir, { recursive: true, force: true });
});

// deterministic pseudo-covariates so the run is reproducible
function covariateFor(i: number): number[] {
  const a = Math.sin(i * 12.9898) * 43758.5453;
  const b = Math.sin(i * 78.233) * 12543.1234;
  return [
    Math.round((a - Math.floor(a) - 0.5) * 4 * 1e6) / 1e6,
    Math.round((b - Math.floor(b) - 0.5) * 4 * 1e6) / 1e6,
  ];
}

describe("service round trip", () => {
  it("enrolls 50 units and the engine replay reproduces the arm sequence", async () => {
    const client = new ApiClient(BASE);
    const created = await client.createTrial(config, { seed: 424242 });
    const trialId = created.trial_id;
    expect(created.status.n).toBe(0);

    const session = new EnrollmentSession(client, trialId);
    const arms: number[] = [];
    for (let i = 1; i <= 50; i++) {
      const out = await session.submit(covariateFor(i));
      expect(out.unit_index).toBe(i);
      arms.push(out.arm);
    }
    expect(session.history).toHaveLength(50);

    // double-submit: two rapid clicks, exactly one enrollment
    const [first, second] = await Promise.allSettled([
      session.submit(covariateFor(51)),
      session.submit(covariateFor(51)),
    ]);
    const settled = [first, second].filter((r) => r.status === "fulfilled");
    expect(settled).toHaveLength(1);
    const fulfilled = settled[0] as PromiseFulfilledResult<{ unit_index: number; arm: number }>;
    expect(fulfilled.value.unit_index).toBe(51);
    arms.push(fulfilled.value.arm);

    // retry with the same idempotency key: replay, no new enrollment
    const key = newIdempotencyKey();
    const a = await client.enroll(trialId, [0.5, -0.5], key);
    const b = await client.enroll(trialId, [0.5, -0.5], key);
    expect(b.unit_index).toBe(a.unit_index);
    expect(b.arm).toBe(a.arm);
    arms.push(a.arm);

    const status = await client.getStatus(trialId);
    expect(status.n).toBe(52);
    expect(status.n1 + status.n2).toBe(52);

    // offline engine replay of the persisted log must reproduce the arms
    const replay = spawnSync(
      PYTHON,
      ["-m", "carkit.cli", "replay", "--data", dataDir, "--trial", trialId],
      { encoding: "utf-8" },
    );
    expect(replay.status).toBe(0);
    const blob = JSON.parse(replay.stdout) as {
      matches_log: boolean;
      arms: number[];
      n: number;
    };
    expect(blob.matches_log).toBe(true);
    expect(blob.n).toBe(52);
    expect(blob.arms).toEqual(arms);
  }, 120_000);

  it("rejects bad configs with field-level diagnostics", async () => {
    const client = new ApiClient(BASE);
    const bad = {
      ...config,
      rho: 1.2,
      allocation: { kind: "shifted_normal" as const, rho: 1.2 },
    };
    const err = await client.createTrial(bad).catch((e) => e);
    expect(err.code).toBe("invalid_config");
    expect(err.field).toBe("rho");
  });
});
