// Wire types for the allocation service (JSON schemas carkit.trial/1,
// carkit.status/1, carkit.enrollment/1).

export interface LinearFeatureMapSpec {
  kind: "linear";
  p: number;
  include_intercept?: boolean;
}

export interface DiscreteFeatureMapSpec {
  kind: "discrete";
  levels: number[];
  weight_overall?: number;
  weight_margins?: number[];
  weight_strata?: number;
}

export type FeatureMapSpec = LinearFeatureMapSpec | DiscreteFeatureMapSpec;

export interface AllocationSpec {
  kind: "truncated_normal" | "shifted_normal" | "clamped_linear" | "constant";
  rho: number;
  lambda?: number;
  clamp?: "normal" | "flat";
  alpha?: number;
}

export interface TrialConfigSpec {
  rho: number;
  gamma: number;
  allocation: AllocationSpec;
  feature_map: FeatureMapSpec;
  normalize?: boolean;
  c1?: number;
  c2?: number;
}

export interface RecentEnrollment {
  index: number;
  covariates: number[];
  probability: number;
  arm: 1 | 2;
}

export interface StatusSnapshot {
  schema: string;
  trial_id: string;
  created_at: string;
  updated_at: string;
  rho: number;
  n: number;
  n1: number;
  n2: number;
  imb: number;
  overall: number;
  feature_map: FeatureMapSpec;
  margins?: number[][];
  strata?: Record<string, number>;
  recent: RecentEnrollment[];
}

export interface EnrollmentResult {
  schema: string;
  trial_id: string;
  unit_index: number;
  arm: 1 | 2;
  probability: number;
  u: number;
  imbalance: { n: number; n1: number; n2: number; imb: number };
}

export interface CreateTrialResult {
  trial_id: string;
  status: StatusSnapshot;
}

export interface ErrorBody {
  code: string;
  field?: string;
  message: string;
}
