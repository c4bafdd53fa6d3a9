"""Monte Carlo harness: seeded replications, aggregation, and exact oracles.

Randomness contract
-------------------
Replication ``r`` of a scenario with base seed ``s`` consumes one uniform
stream from a Philox4x64 counter-based generator keyed by

    key(s, r) = (s + r * 0x9E3779B97F4A7C15) mod 2**64

All variates are inverse-CDF transforms of that stream, consumed in this
fixed block order (only blocks the scenario actually configures):

1. iid covariates, one length-n block per coordinate (skipped for fixed
   covariate matrices),
2. assignment uniforms (length n),
3. outcome noise, arm 1 then arm 2 (length n each),
4. one length-n block per W stream, in declared order.

Because each replication is a pure function of ``(s, r)``, executions are
embarrassingly parallel, chunked batch execution reproduces the serial
path bit for bit, and summaries do not depend on worker count or chunk
size.

Oracles
-------
:func:`exact_enumeration` walks all ``2**n`` assignment paths of a
fixed-covariate scenario (n <= 12) and returns the exact path law, against
which Monte Carlo estimates are gated in the acceptance suite.
"""

from __future__ import annotations

import csv as _csv
import io
import itertools
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .allocation import eval_allocation
from .analysis import batch_two_sample_tests, classical_test, adjusted_test
from .engine import Trial, TrialConfig
from .features import apply_feature_matrix, scale_normalizer
from .scenario import ScenarioConfig, scenario_hash

__all__ = [
    "rep_key",
    "rep_rng",
    "ReplicationRecord",
    "run_replication",
    "per_replication_stats",
    "run_experiment",
    "ExperimentSummary",
    "SummaryAtN",
    "export_summary",
    "import_summary",
    "save_summary",
    "load_summary",
    "ExactLaw",
    "exact_enumeration",
    "rate_fit",
]

GOLDEN64 = 0x9E3779B97F4A7C15
SUMMARY_SCHEMA = "carkit.summary/1"
ENUMERATION_CAP = 12


def rep_key(base_seed: int, rep_index: int) -> int:
    """Philox key for one replication (documented counter scheme)."""
    return (int(base_seed) + rep_index * GOLDEN64) % (1 << 64)


def rep_rng(base_seed: int, rep_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=rep_key(base_seed, rep_index)))


# -- stream drawing ---------------------------------------------------------

def _draw_streams(scenario: ScenarioConfig, rep_index: int):
    """Draw every random block for one replication, in the documented order."""
    n = scenario.n_max
    rng = rep_rng(scenario.base_seed, rep_index)
    cov = scenario.covariates
    if cov.kind == "fixed":
        X = np.asarray(cov.matrix, dtype=float)[:n]
    else:
        p = cov.p()
        X = np.empty((n, p))
        for j in range(p):
            X[:, j] = cov.coords[j].transform(rng.random(n))
    u = rng.random(n)
    eps = None
    if scenario.outcome is not None:
        eps = np.stack([
            scenario.outcome.noise[0].transform(rng.random(n)),
            scenario.outcome.noise[1].transform(rng.random(n)),
        ])
    w_values = {}
    for w in scenario.w_streams:
        block = rng.random(n)
        if w.kind == "independent":
            w_values[w.name] = w.dist.transform(block)
        else:
            w_values[w.name] = w.scale.evaluate(X) * w.noise.transform(block)
    return X, u, eps, w_values


def _outcomes(scenario: ScenarioConfig, Phi: np.ndarray, eps: np.ndarray,
              arm1_mask: np.ndarray, n: int) -> np.ndarray:
    """Observed outcomes for the first n units (local alternatives scale
    with the evaluation n)."""
    om = scenario.outcome
    mu = om.effective_mu(n)
    q = Phi.shape[-1]
    lin = [np.zeros(Phi.shape[:-1]), np.zeros(Phi.shape[:-1])]
    if om.beta is not None:
        for t in range(2):
            lin[t] = Phi @ np.asarray(om.beta[t], dtype=float)
    y1 = mu[0] + lin[0] + eps[0]
    y2 = mu[1] + lin[1] + eps[1]
    return np.where(arm1_mask, y1, y2)


def _strata_block(config: TrialConfig):
    """(offset, count, weight) of the stratum block, or None."""
    fmap = config.feature_map
    if fmap.kind != "discrete" or fmap.weight_strata <= 0:
        return None
    _, _, strata_off = fmap._discrete_layout()
    return strata_off, int(np.prod(fmap.levels)), fmap.weight_strata


# -- reference single-replication path --------------------------------------

@dataclass
class ReplicationRecord:
    """One replication, evaluated at every grid n."""

    rep_index: int
    seed_key: int
    arms: np.ndarray
    at: dict = field(default_factory=dict)   # n -> dict of scalar stats
    trial: Optional[Trial] = None


def run_replication(scenario: ScenarioConfig, rep_index: int,
                    keep_trial: bool = False) -> ReplicationRecord:
    """Run one full trial through the sequential engine.

    Deterministic in (scenario, rep_index).  This is the reference path:
    the vectorized :func:`per_replication_stats` must agree with it
    replication by replication.
    """
    X, u, eps, w_values = _draw_streams(scenario, rep_index)
    config = scenario.design
    trial = Trial(config)
    n_max = scenario.n_max
    grid = set(int(v) for v in scenario.n_grid)
    lam_snap = {}
    for i in range(n_max):
        trial.assign(X[i], u[i])
        if trial.n in grid:
            lam_snap[trial.n] = trial.lambda_vec.copy()

    arms = np.array([r.arm for r in trial.log])
    sign = (arms == 1).astype(float) - config.rho
    Phi = np.array([r.phi for r in trial.log])
    m_vals = {f.name: f.expr.evaluate(X) for f in scenario.features_unspecified}
    strata = _strata_block(config)

    record = ReplicationRecord(
        rep_index=rep_index,
        seed_key=rep_key(scenario.base_seed, rep_index),
        arms=arms,
        trial=trial if keep_trial else None,
    )
    for n in sorted(grid):
        lam = lam_snap[n]
        stats = {
            "imb": float(lam @ lam),
            "lambda_norm": float(np.sqrt(lam @ lam)),
            "n1": int((arms[:n] == 1).sum()),
        }
        stats["m_sums"] = {
            name: float((sign[:n] * vals[:n]).sum()) for name, vals in m_vals.items()
        }
        stats["w_sums"] = {
            name: float(vals[:n].sum()) for name, vals in w_values.items()
        }
        if strata is not None:
            off, count, ws = strata
            stats["strata_d"] = (lam[off:off + count] / np.sqrt(ws)).tolist()
        if scenario.outcome is not None:
            y = _outcomes(scenario, Phi[:n], eps[:, :n], arms[:n] == 1, n)
            stats["classical"] = classical_test(y, arms[:n], scenario.alpha)
            stats["adjusted"] = adjusted_test(y, arms[:n], Phi[:n], config.rho,
                                              scenario.alpha)
        record.at[n] = stats
    return record


# -- vectorized chunked path -------------------------------------------------

def _auto_chunk(scenario: ScenarioConfig) -> int:
    n = scenario.n_max
    p = scenario.covariates.p()
    q = scenario.design.feature_map.q
    cols = p + q + len(scenario.features_unspecified) + len(scenario.w_streams)
    cols += 3 + (2 if scenario.outcome is not None else 0)
    per_rep = 8.0 * n * cols
    return int(min(4096, max(32, 2.5e8 // per_rep)))


def _simulate_chunk(scenario: ScenarioConfig, lo: int, hi: int) -> dict:
    """Per-replication statistics for replications lo..hi-1 (vectorized)."""
    C = hi - lo
    n_max = scenario.n_max
    config = scenario.design
    fmap = config.feature_map
    rho, gamma = config.rho, config.gamma
    p, q = fmap.p, fmap.q
    grid = [int(v) for v in scenario.n_grid]

    X = np.empty((C, n_max, p))
    u = np.empty((C, n_max))
    eps = np.empty((2, C, n_max)) if scenario.outcome is not None else None
    w_values = {w.name: np.empty((C, n_max)) for w in scenario.w_streams}
    for c, r in enumerate(range(lo, hi)):
        Xr, ur, er, wr = _draw_streams(scenario, r)
        X[c] = Xr
        u[c] = ur
        if er is not None:
            eps[:, c, :] = er
        for name, vals in wr.items():
            w_values[name][c] = vals

    Phi = apply_feature_matrix(fmap, X.reshape(C * n_max, p)).reshape(C, n_max, q)

    lam = np.zeros((C, q))
    sum_sq = np.zeros(C)
    arms1 = np.empty((C, n_max), dtype=bool)
    lam_snap = {}
    grid_set = set(grid)
    for i in range(n_max):
        phi_i = Phi[:, i, :]
        if i == 0:
            prob = np.full(C, rho)
        else:
            inner = np.einsum("cq,cq->c", lam, phi_i)
            if config.normalize:
                s = np.clip(np.sqrt(sum_sq / i), config.c1, config.c2)
                inner = inner / (s * s)
            prob = eval_allocation(config.allocation, inner / float(i) ** gamma)
        t1 = u[:, i] < prob
        lam = lam + (t1 - rho)[:, None] * phi_i
        sum_sq = sum_sq + np.einsum("cq,cq->c", phi_i, phi_i)
        arms1[:, i] = t1
        if i + 1 in grid_set:
            lam_snap[i + 1] = lam.copy()

    sign = arms1.astype(float) - rho
    m_vals = {
        f.name: f.expr.evaluate(X.reshape(C * n_max, p)).reshape(C, n_max)
        for f in scenario.features_unspecified
    }
    strata = _strata_block(config)

    out = {"arms1": arms1}
    G = len(grid)
    out["imb"] = np.empty((C, G))
    out["lambda_norm"] = np.empty((C, G))
    out["n1"] = np.empty((C, G), dtype=int)
    out["m_sums"] = {name: np.empty((C, G)) for name in m_vals}
    out["w_sums"] = {name: np.empty((C, G)) for name in w_values}
    if strata is not None:
        out["strata_d"] = np.empty((C, G, strata[1]))
    if scenario.outcome is not None:
        for key in ("classical_stat", "adjusted_stat",
                    "adjusted_var1", "adjusted_var2"):
            out[key] = np.empty((C, G))
        for key in ("classical_reject", "adjusted_reject"):
            out[key] = np.empty((C, G), dtype=bool)

    for g, n in enumerate(grid):
        lam_n = lam_snap[n]
        out["imb"][:, g] = np.einsum("cq,cq->c", lam_n, lam_n)
        out["lambda_norm"][:, g] = np.sqrt(out["imb"][:, g])
        out["n1"][:, g] = arms1[:, :n].sum(axis=1)
        for name, vals in m_vals.items():
            out["m_sums"][name][:, g] = (sign[:, :n] * vals[:, :n]).sum(axis=1)
        for name, vals in w_values.items():
            out["w_sums"][name][:, g] = vals[:, :n].sum(axis=1)
        if strata is not None:
            off, count, ws = strata
            out["strata_d"][:, g, :] = lam_n[:, off:off + count] / np.sqrt(ws)
        if scenario.outcome is not None:
            Y = _outcomes(scenario, Phi[:, :n, :], eps[:, :, :n], arms1[:, :n], n)
            tests = batch_two_sample_tests(Y, arms1[:, :n], Phi[:, :n, :],
                                           rho, scenario.alpha)
            out["classical_stat"][:, g] = tests["classical_stat"]
            out["classical_reject"][:, g] = tests["classical_reject"]
            out["adjusted_stat"][:, g] = tests["adjusted_stat"]
            out["adjusted_reject"][:, g] = tests["adjusted_reject"]
            out["adjusted_var1"][:, g] = tests["adjusted_var1"]
            out["adjusted_var2"][:, g] = tests["adjusted_var2"]
    return out


def per_replication_stats(scenario: ScenarioConfig, workers: int = 1,
                          chunk_size: Optional[int] = None) -> dict:
    """Per-replication statistic arrays for all R replications.

    The result is identical for any worker count or chunk size: chunks map
    to fixed replication-index ranges and are reassembled in index order.
    """
    R = scenario.replications
    chunk = chunk_size or _auto_chunk(scenario)
    ranges = [(lo, min(lo + chunk, R)) for lo in range(0, R, chunk)]
    if workers > 1 and len(ranges) > 1:
        from joblib import Parallel, delayed
        parts = Parallel(n_jobs=workers)(
            delayed(_simulate_chunk)(scenario, lo, hi) for lo, hi in ranges)
    else:
        parts = [_simulate_chunk(scenario, lo, hi) for lo, hi in ranges]

    def _stack(getter):
        return np.concatenate([getter(p) for p in parts], axis=0)

    out = {"n_grid": [int(v) for v in scenario.n_grid]}
    first = parts[0]
    for key in first:
        if key in ("m_sums", "w_sums"):
            out[key] = {name: _stack(lambda p, nm=name: p[key][nm])
                        for name in first[key]}
        else:
            out[key] = _stack(lambda p: p[key])
    return out


# -- summaries ---------------------------------------------------------------

@dataclass(frozen=True)
class SummaryAtN:
    """Aggregates at one grid n; every metric is (value, standard error)."""

    n: int
    imb: tuple
    lambda_norm: tuple
    arm1_prop: tuple
    shift: dict = field(default_factory=dict)        # name -> (mean of S/n, se)
    norm_var: dict = field(default_factory=dict)     # name -> (Var(S/sqrt n), se)
    w_corr: dict = field(default_factory=dict)       # "m|w" -> (corr, se)
    stratum_norm_var: Optional[dict] = None          # "k1,k2" -> (var, se)
    classical_reject: Optional[tuple] = None
    adjusted_reject: Optional[tuple] = None
    adjusted_var1: Optional[tuple] = None
    adjusted_var2: Optional[tuple] = None


@dataclass(frozen=True)
class ExperimentSummary:
    name: str
    scenario_hash: str
    base_seed: int
    replications: int
    alpha: float
    rows: tuple
    wall_time: float = 0.0


def _mean_se(values: np.ndarray) -> tuple:
    values = np.asarray(values, dtype=float)
    R = values.size
    se = float(values.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0
    return (float(values.mean()), se)


def _var_se(values: np.ndarray) -> tuple:
    """Sample variance and its asymptotic standard error (via 4th moments)."""
    values = np.asarray(values, dtype=float)
    R = values.size
    v = float(values.var(ddof=1))
    if R < 4:
        return (v, float("nan"))
    centered = values - values.mean()
    m4 = float(np.mean(centered ** 4))
    se = float(np.sqrt(max(m4 - v * v, 0.0) / R))
    return (v, se)


def _corr_se(a: np.ndarray, b: np.ndarray) -> tuple:
    R = a.size
    r = float(np.corrcoef(a, b)[0, 1])
    se = float((1.0 - r * r) / np.sqrt(R - 3)) if R > 3 else float("nan")
    return (r, se)


def _rate_se(flags: np.ndarray) -> tuple:
    R = flags.size
    rate = float(np.mean(flags))
    return (rate, float(np.sqrt(rate * (1.0 - rate) / R)))


def run_experiment(scenario: ScenarioConfig, workers: int = 1,
                   chunk_size: Optional[int] = None) -> ExperimentSummary:
    """Aggregate R replications into an :class:`ExperimentSummary`."""
    if scenario.replications < 2:
        raise ValueError("run_experiment needs at least 2 replications")
    t0 = time.perf_counter()
    stats = per_replication_stats(scenario, workers=workers, chunk_size=chunk_size)
    rows = []
    has_outcome = scenario.outcome is not None
    for g, n in enumerate(stats["n_grid"]):
        sqrt_n = np.sqrt(n)
        shift = {}
        norm_var = {}
        w_corr = {}
        for name, sums in stats["m_sums"].items():
            shift[name] = _mean_se(sums[:, g] / n)
            norm_var[name] = _var_se(sums[:, g] / sqrt_n)
            for wname, wsums in stats["w_sums"].items():
                w_corr[f"{name}|{wname}"] = _corr_se(
                    sums[:, g] / sqrt_n, wsums[:, g] / sqrt_n)
        stratum_norm_var = None
        if "strata_d" in stats:
            stratum_norm_var = {}
            for s in range(stats["strata_d"].shape[2]):
                stratum_norm_var[str(s)] = _var_se(stats["strata_d"][:, g, s] / sqrt_n)
        rows.append(SummaryAtN(
            n=int(n),
            imb=_mean_se(stats["imb"][:, g]),
            lambda_norm=_mean_se(stats["lambda_norm"][:, g]),
            arm1_prop=_mean_se(stats["n1"][:, g] / n),
            shift=shift,
            norm_var=norm_var,
            w_corr=w_corr,
            stratum_norm_var=stratum_norm_var,
            classical_reject=_rate_se(stats["classical_reject"][:, g]) if has_outcome else None,
            adjusted_reject=_rate_se(stats["adjusted_reject"][:, g]) if has_outcome else None,
            adjusted_var1=_mean_se(stats["adjusted_var1"][:, g]) if has_outcome else None,
            adjusted_var2=_mean_se(stats["adjusted_var2"][:, g]) if has_outcome else None,
        ))
    return ExperimentSummary(
        name=scenario.name,
        scenario_hash=scenario_hash(scenario),
        base_seed=scenario.base_seed,
        replications=scenario.replications,
        alpha=scenario.alpha,
        rows=tuple(rows),
        wall_time=time.perf_counter() - t0,
    )


def _pair(v) -> Optional[tuple]:
    return None if v is None else (float(v[0]), float(v[1]))


def _row_to_spec(row: SummaryAtN) -> dict:
    return {
        "n": row.n,
        "imb": list(row.imb),
        "lambda_norm": list(row.lambda_norm),
        "arm1_prop": list(row.arm1_prop),
        "shift": {k: list(v) for k, v in row.shift.items()},
        "norm_var": {k: list(v) for k, v in row.norm_var.items()},
        "w_corr": {k: list(v) for k, v in row.w_corr.items()},
        "stratum_norm_var": (
            None if row.stratum_norm_var is None
            else {k: list(v) for k, v in row.stratum_norm_var.items()}),
        "classical_reject": None if row.classical_reject is None else list(row.classical_reject),
        "adjusted_reject": None if row.adjusted_reject is None else list(row.adjusted_reject),
        "adjusted_var1": None if row.adjusted_var1 is None else list(row.adjusted_var1),
        "adjusted_var2": None if row.adjusted_var2 is None else list(row.adjusted_var2),
    }


def _row_from_spec(d: dict) -> SummaryAtN:
    return SummaryAtN(
        n=int(d["n"]),
        imb=_pair(d["imb"]),
        lambda_norm=_pair(d["lambda_norm"]),
        arm1_prop=_pair(d["arm1_prop"]),
        shift={k: _pair(v) for k, v in d["shift"].items()},
        norm_var={k: _pair(v) for k, v in d["norm_var"].items()},
        w_corr={k: _pair(v) for k, v in d["w_corr"].items()},
        stratum_norm_var=(
            None if d.get("stratum_norm_var") is None
            else {k: _pair(v) for k, v in d["stratum_norm_var"].items()}),
        classical_reject=_pair(d.get("classical_reject")),
        adjusted_reject=_pair(d.get("adjusted_reject")),
        adjusted_var1=_pair(d.get("adjusted_var1")),
        adjusted_var2=_pair(d.get("adjusted_var2")),
    )


def export_summary(summary: ExperimentSummary, format: str = "json") -> str:
    """Serialize a summary; JSON round-trips losslessly, CSV is one row per
    (n, metric)."""
    if format == "json":
        spec = {
            "schema": SUMMARY_SCHEMA,
            "name": summary.name,
            "scenario_hash": summary.scenario_hash,
            "base_seed": summary.base_seed,
            "replications": summary.replications,
            "alpha": summary.alpha,
            "wall_time": summary.wall_time,
            "rows": [_row_to_spec(r) for r in summary.rows],
        }
        return json.dumps(spec, sort_keys=True, indent=2)
    if format == "csv":
        buf = io.StringIO()
        writer = _csv.writer(buf)
        writer.writerow(["scenario_hash", "n", "metric", "value", "se"])
        for row in summary.rows:
            spec = _row_to_spec(row)
            flat = [("imb", spec["imb"]), ("lambda_norm", spec["lambda_norm"]),
                    ("arm1_prop", spec["arm1_prop"])]
            for group in ("shift", "norm_var", "w_corr"):
                flat += [(f"{group}:{k}", v) for k, v in spec[group].items()]
            if spec["stratum_norm_var"]:
                flat += [(f"stratum_norm_var:{k}", v)
                         for k, v in spec["stratum_norm_var"].items()]
            for key in ("classical_reject", "adjusted_reject",
                        "adjusted_var1", "adjusted_var2"):
                if spec[key] is not None:
                    flat.append((key, spec[key]))
            for metric, (value, se) in flat:
                writer.writerow([summary.scenario_hash, row.n, metric,
                                 repr(value), repr(se)])
        return buf.getvalue()
    raise ValueError(f"unknown format {format!r}")


def import_summary(text: str) -> ExperimentSummary:
    spec = json.loads(text)
    if spec.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"unsupported summary schema {spec.get('schema')!r}")
    return ExperimentSummary(
        name=spec["name"],
        scenario_hash=spec["scenario_hash"],
        base_seed=int(spec["base_seed"]),
        replications=int(spec["replications"]),
        alpha=float(spec["alpha"]),
        rows=tuple(_row_from_spec(r) for r in spec["rows"]),
        wall_time=float(spec["wall_time"]),
    )


def save_summary(summary: ExperimentSummary, path, format: str = "json"):
    with open(path, "w") as fh:
        fh.write(export_summary(summary, format))


def load_summary(path) -> ExperimentSummary:
    with open(path) as fh:
        return import_summary(fh.read())


# -- exact enumeration oracle -------------------------------------------------

@dataclass
class ExactLaw:
    """Exact distribution over all 2^n assignment paths of a fixed-covariate
    trial."""

    n: int
    paths: np.ndarray            # (2^n, n) arms in {1, 2}, lexicographic
    probabilities: np.ndarray    # (2^n,), sums to 1
    e_imb: float
    e_lambda: np.ndarray
    n1_distribution: np.ndarray  # (n+1,), P(N_{n,1} = k)


def exact_enumeration(scenario: ScenarioConfig, n: Optional[int] = None,
                      max_n: int = ENUMERATION_CAP) -> ExactLaw:
    """Exhaustively enumerate the assignment chain for fixed covariates.

    Path probabilities multiply the per-step assignment probabilities the
    engine would use; the walk shares the engine's probability rule, so this
    is an independent check of the sampled chain, not of the rule itself.
    """
    if scenario.covariates.kind != "fixed":
        raise ValueError("exact enumeration requires a fixed covariate sequence")
    n = int(n if n is not None else scenario.n_max)
    if n > max_n:
        raise ValueError(f"n={n} exceeds the enumeration cap {max_n}")
    config = scenario.design
    fmap = config.feature_map
    X = np.asarray(scenario.covariates.matrix, dtype=float)[:n]
    Phi = apply_feature_matrix(fmap, X)
    rho, gamma = config.rho, config.gamma

    paths = np.array(list(itertools.product((1, 2), repeat=n)), dtype=np.int8)
    probs = np.empty(paths.shape[0])
    e_lambda = np.zeros(fmap.q)
    e_imb = 0.0
    n1_dist = np.zeros(n + 1)
    for idx, path in enumerate(paths):
        lam = np.zeros(fmap.q)
        sum_sq = 0.0
        prob = 1.0
        for i in range(n):
            phi_i = Phi[i]
            if i == 0:
                p1 = rho
            else:
                inner = float(np.einsum("j,j->", lam, phi_i))
                if config.normalize:
                    s = scale_normalizer(sum_sq, i, config.c1, config.c2)
                    inner /= s * s
                p1 = float(eval_allocation(config.allocation,
                                           inner / float(i) ** gamma))
            arm = path[i]
            prob *= p1 if arm == 1 else (1.0 - p1)
            lam = lam + ((1.0 if arm == 1 else 0.0) - rho) * phi_i
            sum_sq += float(np.einsum("j,j->", phi_i, phi_i))
        probs[idx] = prob
        e_lambda += prob * lam
        e_imb += prob * float(lam @ lam)
        n1_dist[int((path == 1).sum())] += prob
    return ExactLaw(
        n=n, paths=paths, probabilities=probs,
        e_imb=float(e_imb), e_lambda=e_lambda, n1_distribution=n1_dist,
    )


def rate_fit(points) -> float:
    """OLS slope of log(mean) vs log(n) over >= 3 points with increasing n."""
    pts = sorted((float(n), float(v)) for n, v in points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    ns = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    if np.any(np.diff(ns) <= 0):
        raise ValueError("n values must be strictly increasing")
    if np.any(vs <= 0):
        raise ValueError("means must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(ns), np.log(vs), 1)
    return float(slope)
