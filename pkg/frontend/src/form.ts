// Enrollment form model: field descriptors derived from the trial's
// feature-map spec, plus client-side validation.  Validation only guards
// obvious input mistakes (wrong arity, bad level codes); the service
// remains the authority and its field errors are mapped back onto the
// form.

import type { FeatureMapSpec } from "./types.js";

export type FieldDescriptor =
  | { name: string; kind: "numeric" }
  | { name: string; kind: "level"; levels: number };

export interface EnrollFormModel {
  fields: FieldDescriptor[];
}

export interface ValidationResult {
  ok: boolean;
  errors: (string | null)[];
  covariates?: number[];
}

export function buildFormModel(spec: FeatureMapSpec): EnrollFormModel {
  if (spec.kind === "linear") {
    if (!Number.isInteger(spec.p) || spec.p < 1) {
      throw new Error(`bad linear feature spec: p=${spec.p}`);
    }
    return {
      fields: Array.from({ length: spec.p }, (_, j) => ({
        name: `x${j + 1}`,
        kind: "numeric" as const,
      })),
    };
  }
  if (spec.kind === "discrete") {
    if (!spec.levels.length || spec.levels.some((m) => !Number.isInteger(m) || m < 1)) {
      throw new Error(`bad discrete feature spec: levels=${spec.levels}`);
    }
    return {
      fields: spec.levels.map((m, j) => ({
        name: `x${j + 1}`,
        kind: "level" as const,
        levels: m,
      })),
    };
  }
  throw new Error(`unsupported feature map kind ${(spec as { kind: string }).kind}`);
}

export function levelOptions(field: FieldDescriptor): number[] {
  if (field.kind !== "level") return [];
  return Array.from({ length: field.levels }, (_, k) => k + 1);
}

export function validateForm(model: EnrollFormModel, raw: string[]): ValidationResult {
  if (raw.length !== model.fields.length) {
    return {
      ok: false,
      errors: model.fields.map(() => "form/field count mismatch"),
    };
  }
  const errors: (string | null)[] = [];
  const covariates: number[] = [];
  model.fields.forEach((field, j) => {
    const text = (raw[j] ?? "").trim();
    if (text === "") {
      errors.push("required");
      return;
    }
    const value = Number(text);
    if (!Number.isFinite(value)) {
      errors.push("must be a number");
      return;
    }
    if (field.kind === "level") {
      if (!Number.isInteger(value)) {
        errors.push("level must be an integer");
        return;
      }
      if (value < 1 || value > field.levels) {
        errors.push(`level must be between 1 and ${field.levels}`);
        return;
      }
    }
    errors.push(null);
    covariates.push(value);
  });
  const ok = errors.every((e) => e === null);
  return ok ? { ok, errors, covariates } : { ok, errors };
}
