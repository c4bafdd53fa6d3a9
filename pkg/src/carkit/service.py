"""Persistent HTTP allocation service.

Wraps the sequential engine for a live trial: create a trial, enroll units
one at a time, inspect imbalance state.  Endpoints (JSON bodies):

* ``POST /trials``                     create; body ``{config, seed?, idempotency_token?}``
* ``POST /trials/{id}/enrollments``    body ``{covariates, idempotency_key?}``
* ``GET  /trials/{id}/status``         read-only snapshot
* ``GET  /healthz``                    liveness probe

Errors are ``{code, field?, message}`` with a 4xx status.

Durability and replay
---------------------
Each trial persists as ``trials/{id}/meta.json`` (config, seed, creation
time) plus an append-only ``log.jsonl`` holding the engine's assignment
records (covariates, probability, uniform draw, arm) with the idempotency
key.  A log line is flushed and fsynced before the response is sent, and a
restart rebuilds state by strict engine replay, so the served state is
always reconstructable from disk.

The service draws its own uniforms from a seeded, logged stream: the draw
for unit index ``i`` (1-based) is the first double of a Philox4x64
generator keyed by ``(trial_seed, i)``, so an auditor can recompute every
probability/arm pair from the persisted seed and log.

Enrollments on one trial are strictly serialized (per-trial lock): unit
indices are gapless and each is assigned exactly once.  Reads and
cross-trial operations run concurrently.  Mid-trial config changes are
rejected by construction (there is no update endpoint).
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .allocation import check_allocation
from .engine import AssignmentRecord, Trial, TrialConfig

__all__ = ["ServiceError", "TrialStore", "create_app", "uniform_for_unit"]

TRIAL_SCHEMA = "carkit.trial/1"
STATUS_SCHEMA = "carkit.status/1"
ENROLLMENT_SCHEMA = "carkit.enrollment/1"
RECENT_LIMIT = 20

_FIELD_HINTS = ("rho", "gamma", "slope", "alpha", "c1", "c2", "levels",
                "weight", "covariates", "kind", "p")


class ServiceError(Exception):
    """Domain error carried to the HTTP layer as {code, field?, message}."""

    def __init__(self, code: str, message: str, field: Optional[str] = None,
                 status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.field = field
        self.status = status

    def body(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.field:
            out["field"] = self.field
        return out


def uniform_for_unit(seed: int, index: int) -> float:
    """Uniform draw for the index-th enrollment (1-based); pure in (seed, index)."""
    key = np.array([np.uint64(seed % (1 << 64)), np.uint64(index)], dtype=np.uint64)
    return float(np.random.Generator(np.random.Philox(key=key)).random())


def _field_hint(message: str) -> Optional[str]:
    for name in _FIELD_HINTS:
        if name in message:
            return name
    return None


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass
class _Runtime:
    """In-memory state of one trial."""

    trial_id: str
    config: TrialConfig
    seed: int
    created_at: str
    updated_at: str
    trial: Trial
    lock: threading.Lock = field(default_factory=threading.Lock)
    responses_by_key: dict = field(default_factory=dict)
    payloads_by_key: dict = field(default_factory=dict)
    idempotency_token: Optional[str] = None
    config_spec: dict = field(default_factory=dict)


class TrialStore:
    """Disk-backed registry of trials with per-trial write serialization."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        (self.data_dir / "trials").mkdir(parents=True, exist_ok=True)
        self._trials: dict[str, _Runtime] = {}
        self._tokens: dict[str, str] = {}
        self._create_lock = threading.Lock()
        self._load()

    # -- persistence -------------------------------------------------------

    def _trial_dir(self, trial_id: str) -> Path:
        return self.data_dir / "trials" / trial_id

    def _load(self):
        for meta_path in sorted(self.data_dir.glob("trials/*/meta.json")):
            meta = json.loads(meta_path.read_text())
            config = TrialConfig.from_spec(meta["config"])
            trial = Trial(config)
            rt = _Runtime(
                trial_id=meta["trial_id"],
                config=config,
                seed=int(meta["seed"]),
                created_at=meta["created_at"],
                updated_at=meta["created_at"],
                trial=trial,
                idempotency_token=meta.get("idempotency_token"),
                config_spec=meta["config"],
            )
            log_path = meta_path.parent / "log.jsonl"
            if log_path.exists():
                for line in log_path.read_text().splitlines():
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    rec = AssignmentRecord.from_json_dict(entry)
                    arm = trial.assign(rec.covariates, rec.u)
                    if arm != rec.arm:
                        raise RuntimeError(
                            f"trial {rt.trial_id}: log replay diverged at "
                            f"unit {rec.index}")
                    rt.updated_at = entry.get("at", rt.updated_at)
                    key = entry.get("key")
                    if key:
                        rt.responses_by_key[key] = self._enroll_response(rt, rec)
                        rt.payloads_by_key[key] = list(rec.covariates)
            self._trials[rt.trial_id] = rt
            if rt.idempotency_token:
                self._tokens[rt.idempotency_token] = rt.trial_id

    def _write_meta(self, rt: _Runtime):
        d = self._trial_dir(rt.trial_id)
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "schema": TRIAL_SCHEMA,
            "trial_id": rt.trial_id,
            "config": rt.config_spec,
            "seed": rt.seed,
            "created_at": rt.created_at,
        }
        if rt.idempotency_token:
            meta["idempotency_token"] = rt.idempotency_token
        tmp = d / "meta.json.tmp"
        with open(tmp, "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.flush()
            os.fsync(fh.fileno())
        tmp.replace(d / "meta.json")

    def _append_log(self, rt: _Runtime, record: AssignmentRecord,
                    key: Optional[str], at: str):
        entry = record.to_json_dict()
        entry["key"] = key
        entry["at"] = at
        path = self._trial_dir(rt.trial_id) / "log.jsonl"
        with open(path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- operations ----------------------------------------------------------

    def create_trial(self, config_spec: dict, seed: Optional[int] = None,
                     idempotency_token: Optional[str] = None) -> dict:
        try:
            config = TrialConfig.from_spec(config_spec)
        except (KeyError, TypeError) as exc:
            raise ServiceError("invalid_config", f"malformed config: {exc}") from exc
        except ValueError as exc:
            raise ServiceError("invalid_config", str(exc),
                               field=_field_hint(str(exc))) from exc
        report = check_allocation(config.allocation, config.rho,
                                  np.linspace(-10.0, 10.0, 2001))
        if not report.passed:
            raise ServiceError(
                "invalid_config",
                f"allocation function failed validation: level_error="
                f"{report.level_error:.2e}, monotone_violations="
                f"{report.monotone_violations}, derivative_at_zero="
                f"{report.derivative_at_zero:.4g}",
                field="allocation")

        with self._create_lock:
            if idempotency_token and idempotency_token in self._tokens:
                existing = self._trials[self._tokens[idempotency_token]]
                if existing.config_spec != config_spec:
                    raise ServiceError(
                        "idempotency_conflict",
                        "token already used with a different config",
                        status=409)
                return self._created_response(existing)
            trial_id = uuid.uuid4().hex[:12]
            if seed is None:
                seed = secrets.randbits(63)
            now = _now()
            rt = _Runtime(
                trial_id=trial_id, config=config, seed=int(seed),
                created_at=now, updated_at=now, trial=Trial(config),
                idempotency_token=idempotency_token, config_spec=config_spec,
            )
            self._write_meta(rt)
            self._trials[trial_id] = rt
            if idempotency_token:
                self._tokens[idempotency_token] = trial_id
            return self._created_response(rt)

    def _created_response(self, rt: _Runtime) -> dict:
        return {"trial_id": rt.trial_id, "status": self.status(rt.trial_id)}

    def _get(self, trial_id: str) -> _Runtime:
        rt = self._trials.get(trial_id)
        if rt is None:
            raise ServiceError("unknown_trial", f"no trial {trial_id!r}",
                               status=404)
        return rt

    def _enroll_response(self, rt: _Runtime, record: AssignmentRecord) -> dict:
        trial = rt.trial
        return {
            "schema": ENROLLMENT_SCHEMA,
            "trial_id": rt.trial_id,
            "unit_index": record.index,
            "arm": record.arm,
            "probability": record.prob,
            "u": record.u,
            # called immediately after the assign, so this is the
            # post-enrollment snapshot (trial.n == record.index here)
            "imbalance": {
                "n": trial.n,
                "n1": trial.n1,
                "n2": trial.n2,
                "imb": trial.imbalance(),
            },
        }

    def enroll(self, trial_id: str, covariates,
               idempotency_key: Optional[str] = None) -> dict:
        rt = self._get(trial_id)
        with rt.lock:
            if idempotency_key and idempotency_key in rt.responses_by_key:
                if rt.payloads_by_key[idempotency_key] != list(covariates):
                    raise ServiceError(
                        "idempotency_conflict",
                        "key already used with different covariates",
                        status=409)
                return rt.responses_by_key[idempotency_key]
            p = rt.config.feature_map.p
            if len(covariates) != p:
                raise ServiceError(
                    "dimension_mismatch",
                    f"expected {p} covariates, got {len(covariates)}",
                    field="covariates")
            index = rt.trial.n + 1
            u = uniform_for_unit(rt.seed, index)
            try:
                rt.trial.assign(covariates, u)
            except ValueError as exc:
                raise ServiceError("invalid_covariates", str(exc),
                                   field="covariates") from exc
            record = rt.trial.log[-1]
            now = _now()
            self._append_log(rt, record, idempotency_key, now)
            rt.updated_at = now
            response = self._enroll_response(rt, record)
            if idempotency_key:
                rt.responses_by_key[idempotency_key] = response
                rt.payloads_by_key[idempotency_key] = list(covariates)
            return response

    def status(self, trial_id: str) -> dict:
        rt = self._get(trial_id)
        trial = rt.trial
        report = trial.imbalance_report()
        out = {
            "schema": STATUS_SCHEMA,
            "trial_id": rt.trial_id,
            "created_at": rt.created_at,
            "updated_at": rt.updated_at,
            "rho": rt.config.rho,
            "n": trial.n,
            "n1": trial.n1,
            "n2": trial.n2,
            "imb": trial.imbalance(),
            "overall": report.overall,
            "feature_map": rt.config_spec.get("feature_map", {}),
            "recent": [
                {"index": r.index, "covariates": list(r.covariates),
                 "probability": r.prob, "arm": r.arm}
                for r in trial.log[-RECENT_LIMIT:]
            ],
        }
        if report.margins is not None:
            out["margins"] = report.margins
            out["strata"] = {
                ",".join(str(v) for v in k): d for k, d in report.strata.items()
            }
        return out


# -- HTTP layer ---------------------------------------------------------------

class CreateTrialRequest(BaseModel):
    config: dict
    seed: Optional[int] = None
    idempotency_token: Optional[str] = None


class EnrollRequest(BaseModel):
    covariates: list[float]
    idempotency_key: Optional[str] = None


def create_app(store: TrialStore, token: Optional[str] = None) -> FastAPI:
    """Build the FastAPI app around a store; ``token`` enables bearer auth."""
    app = FastAPI(title="carkit allocation service", version="1")

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    def _check_auth(request: Request):
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise ServiceError("unauthorized", "missing or bad bearer token",
                               status=401)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/trials", status_code=201)
    def create_trial(body: CreateTrialRequest, request: Request):
        _check_auth(request)
        return store.create_trial(body.config, seed=body.seed,
                                  idempotency_token=body.idempotency_token)

    @app.post("/trials/{trial_id}/enrollments")
    def enroll(trial_id: str, body: EnrollRequest, request: Request):
        _check_auth(request)
        return store.enroll(trial_id, body.covariates, body.idempotency_key)

    @app.get("/trials/{trial_id}/status")
    def status(trial_id: str, request: Request):
        _check_auth(request)
        return store.status(trial_id)

    return app
