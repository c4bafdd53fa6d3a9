// Browser wiring for the enrollment console.
//
// Thin DOM layer over the tested modules: connect to a service, create or
// attach to a trial, enroll patients as they arrive, watch the imbalance
// dashboard.  No allocation logic lives here; arms come exclusively from
// service responses.

import { ApiClient, ApiError } from "./api.js";
import {
  DashboardState,
  emptyDashboard,
  markStale,
  renderTrialDashboard,
} from "./dashboard.js";
import { buildFormModel, EnrollFormModel, levelOptions, validateForm } from "./form.js";
import { EnrollmentSession, SubmitBlockedError } from "./session.js";
import type { FeatureMapSpec, TrialConfigSpec } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

let client: ApiClient | null = null;
let session: EnrollmentSession | null = null;
let formModel: EnrollFormModel | null = null;
let dashboard: DashboardState = emptyDashboard(0.5);
let pollTimer: ReturnType<typeof setInterval> | undefined;

function renderDashboard() {
  byId("dash-n").textContent = String(dashboard.n);
  byId("dash-arms").textContent =
    `${dashboard.armCounts.arm1} / ${dashboard.armCounts.arm2}`;
  const prop = dashboard.observedProportion;
  byId("dash-prop").textContent =
    prop === null
      ? "-"
      : `${(100 * prop).toFixed(1)}% (target ${(100 * dashboard.targetRho).toFixed(0)}%)`;
  byId("dash-imb").textContent = dashboard.imb.toFixed(4);
  byId("stale-badge").style.display = dashboard.stale ? "inline" : "none";

  const trend = byId("trend");
  trend.innerHTML = "";
  const maxImb = Math.max(1e-9, ...dashboard.trend.map((p) => p.imb));
  for (const point of dashboard.trend.slice(-60)) {
    const bar = document.createElement("div");
    bar.className = "bar";
    bar.title = `n=${point.n}: ${point.imb.toFixed(3)}`;
    bar.style.height = `${4 + (56 * point.imb) / maxImb}px`;
    trend.appendChild(bar);
  }

  const tables = byId("tables");
  tables.innerHTML = "";
  if (dashboard.strata) {
    const table = document.createElement("table");
    table.innerHTML = "<tr><th>stratum</th><th>imbalance</th></tr>";
    for (const row of dashboard.strata) {
      const tr = document.createElement("tr");
      tr.innerHTML = `<td>(${row.stratum})</td><td>${row.imbalance.toFixed(2)}</td>`;
      table.appendChild(tr);
    }
    tables.appendChild(table);
  }
  if (dashboard.margins) {
    const table = document.createElement("table");
    table.innerHTML = "<tr><th>covariate</th><th>level</th><th>imbalance</th></tr>";
    for (const row of dashboard.margins) {
      const tr = document.createElement("tr");
      tr.innerHTML =
        `<td>x${row.covariate}</td><td>${row.level}</td><td>${row.imbalance.toFixed(2)}</td>`;
      table.appendChild(tr);
    }
    tables.appendChild(table);
  }
}

async function poll() {
  if (!client || !session) return;
  try {
    const status = await client.getStatus(session.trialId);
    dashboard = renderTrialDashboard(status, dashboard);
  } catch {
    dashboard = markStale(dashboard);
  }
  renderDashboard();
}

function renderForm(spec: FeatureMapSpec) {
  formModel = buildFormModel(spec);
  const host = byId("covariates");
  host.innerHTML = "";
  formModel.fields.forEach((field, j) => {
    const label = document.createElement("label");
    label.textContent = `${field.name} `;
    let input: HTMLElement;
    if (field.kind === "level") {
      const select = document.createElement("select");
      select.id = `cov-${j}`;
      for (const level of levelOptions(field)) {
        const opt = document.createElement("option");
        opt.value = String(level);
        opt.textContent = `level ${level}`;
        select.appendChild(opt);
      }
      input = select;
    } else {
      const text = document.createElement("input");
      text.id = `cov-${j}`;
      text.inputMode = "decimal";
      input = text;
    }
    const err = document.createElement("span");
    err.className = "field-error";
    err.id = `cov-err-${j}`;
    label.appendChild(input);
    label.appendChild(err);
    host.appendChild(label);
  });
}

function showFieldErrors(errors: (string | null)[]) {
  errors.forEach((message, j) => {
    const el = document.getElementById(`cov-err-${j}`);
    if (el) el.textContent = message ?? "";
  });
}

async function connect() {
  const base = byId<HTMLInputElement>("base-url").value || "http://127.0.0.1:8000";
  const token = byId<HTMLInputElement>("token").value || undefined;
  client = new ApiClient(base, token);

  const existing = byId<HTMLInputElement>("trial-id").value.trim();
  try {
    let trialId: string;
    let spec: FeatureMapSpec;
    if (existing) {
      const status = await client.getStatus(existing);
      trialId = status.trial_id;
      spec = status.feature_map;
      dashboard = renderTrialDashboard(status, emptyDashboard(status.rho));
    } else {
      const config = JSON.parse(byId<HTMLTextAreaElement>("config").value) as TrialConfigSpec;
      const created = await client.createTrial(config);
      trialId = created.trial_id;
      spec = created.status.feature_map;
      byId<HTMLInputElement>("trial-id").value = trialId;
      dashboard = renderTrialDashboard(created.status, emptyDashboard(config.rho));
    }
    session = new EnrollmentSession(client, trialId);
    renderForm(spec);
    renderDashboard();
    byId("connect-state").textContent = `connected to ${trialId}`;
    if (pollTimer !== undefined) clearInterval(pollTimer);
    pollTimer = setInterval(() => void poll(), 3000);
  } catch (err) {
    byId("connect-state").textContent = err instanceof Error ? err.message : String(err);
  }
}

async function submit() {
  if (!session || !formModel) return;
  const raw = formModel.fields.map(
    (_f, j) => byId<HTMLInputElement | HTMLSelectElement>(`cov-${j}`).value,
  );
  const validated = validateForm(formModel, raw);
  showFieldErrors(validated.errors);
  byId("form-error").textContent = "";
  if (!validated.ok || !validated.covariates) return;

  const button = byId<HTMLButtonElement>("submit");
  button.disabled = true;
  try {
    const result = await session.submit(validated.covariates);
    const badge = byId("arm-badge");
    badge.textContent = `Treatment ${result.arm}`;
    badge.className = `arm arm-${result.arm}`;
    byId("arm-detail").textContent =
      `unit ${result.unit_index}, probability ${result.probability.toFixed(4)}, ` +
      `imbalance ${result.imbalance.imb.toFixed(4)}`;
    const item = document.createElement("li");
    item.textContent =
      `#${result.unit_index} (${validated.covariates.join(", ")}) -> arm ${result.arm}`;
    byId("history").prepend(item);
    await poll();
  } catch (err) {
    if (err instanceof SubmitBlockedError) return;
    byId("form-error").textContent =
      err instanceof ApiError && err.field
        ? `${err.field}: ${err.message}`
        : err instanceof Error
          ? err.message
          : String(err);
  } finally {
    button.disabled = false;
  }
}

export function start() {
  byId("connect").addEventListener("click", () => void connect());
  byId("submit").addEventListener("click", () => void submit());
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  start();
}
