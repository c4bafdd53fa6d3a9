// Pure view-state for the trial dashboard.
//
// The coordinator sees one gauge (the scalar squared-norm imbalance), arm
// counts against the target proportion, and, for discrete feature maps,
// the marginal and stratum imbalance tables.  Poll results accumulate into
// a bounded trend series; a failed poll keeps the last-known data and
// raises the stale badge.

import type { StatusSnapshot } from "./types.js";

export const TREND_LIMIT = 100;

export interface StratumRow {
  stratum: string;
  imbalance: number;
}

export interface MarginRow {
  covariate: number;
  level: number;
  imbalance: number;
}

export interface DashboardState {
  trialId: string | null;
  n: number;
  armCounts: { arm1: number; arm2: number };
  targetRho: number;
  observedProportion: number | null;
  imb: number;
  trend: { n: number; imb: number }[];
  margins: MarginRow[] | null;
  strata: StratumRow[] | null;
  stale: boolean;
  lastUpdated: string | null;
}

export function emptyDashboard(targetRho: number): DashboardState {
  return {
    trialId: null,
    n: 0,
    armCounts: { arm1: 0, arm2: 0 },
    targetRho,
    observedProportion: null,
    imb: 0,
    trend: [],
    margins: null,
    strata: null,
    stale: false,
    lastUpdated: null,
  };
}

export function renderTrialDashboard(
  status: StatusSnapshot,
  previous?: DashboardState,
): DashboardState {
  const trend = [...(previous?.trend ?? [])];
  const last = trend[trend.length - 1];
  if (!last || last.n !== status.n) {
    trend.push({ n: status.n, imb: status.imb });
    if (trend.length > TREND_LIMIT) trend.splice(0, trend.length - TREND_LIMIT);
  } else {
    trend[trend.length - 1] = { n: status.n, imb: status.imb };
  }

  let margins: MarginRow[] | null = null;
  if (status.margins) {
    margins = [];
    status.margins.forEach((row, l) => {
      row.forEach((d, k) => {
        margins!.push({ covariate: l + 1, level: k + 1, imbalance: d });
      });
    });
  }
  let strata: StratumRow[] | null = null;
  if (status.strata) {
    strata = Object.entries(status.strata)
      .sort(([a], [b]) => a.localeCompare(b))
      .map(([stratum, imbalance]) => ({ stratum, imbalance }));
  }

  return {
    trialId: status.trial_id,
    n: status.n,
    armCounts: { arm1: status.n1, arm2: status.n2 },
    targetRho: status.rho,
    observedProportion: status.n > 0 ? status.n1 / status.n : null,
    imb: status.imb,
    trend,
    margins,
    strata,
    stale: false,
    lastUpdated: status.updated_at,
  };
}

export function markStale(previous: DashboardState): DashboardState {
  return { ...previous, stale: true };
}
