"""Serializable simulation scenarios for the Monte Carlo harness.

A scenario bundles a trial design with the data-generating process:
covariate law, optional unspecified features m(X) to monitor, optional
exogenous streams W (mean zero by contract), and an optional outcome model
``Y(t) = mu_t + <phi(X), beta_t> + eps_t``.

Everything is declarative JSON (schema ``carkit.scenario/1``) rather than
arbitrary code, so scenarios hash stably, replicate across languages, and
can be cross-checked by exact enumeration.  The expression language for
m(X) and W scalings is deliberately tiny: sums of terms, each a coefficient
times a monomial in the covariates (total degree <= 4) times threshold /
equality indicators.

Sampling is inverse-CDF on a single uniform stream per replication (see
``harness`` for the stream layout), which keeps every draw a pure function
of (base seed, replication index, position).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .engine import TrialConfig

__all__ = [
    "DistSpec",
    "Term",
    "Expression",
    "NamedFeature",
    "WStream",
    "OutcomeModel",
    "CovariateLaw",
    "ScenarioConfig",
    "scenario_hash",
]

SCENARIO_SCHEMA = "carkit.scenario/1"

MAX_TERM_DEGREE = 4

_INDICATOR_OPS = {
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "eq": lambda a, b: np.abs(a - b) < 1e-12,
}


@dataclass(frozen=True)
class DistSpec:
    """One scalar distribution; sampled by inverse CDF from uniforms.

    kinds: ``normal(mean, sd)``, ``uniform(low, high)``, ``bernoulli(p)``
    (values 0/1), ``categorical(probs)`` (values 1..m, aligning with the
    discrete feature-map level coding).
    """

    kind: str
    mean_: float = 0.0
    sd: float = 1.0
    low: float = 0.0
    high: float = 1.0
    p: float = 0.5
    probs: tuple = ()

    def mean(self) -> float:
        if self.kind == "normal":
            return self.mean_
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        if self.kind == "bernoulli":
            return self.p
        if self.kind == "categorical":
            return float(sum(pr * (k + 1) for k, pr in enumerate(self.probs)))
        raise ValueError(self.kind)

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to samples."""
        if self.kind == "normal":
            return self.mean_ + self.sd * ndtri(u)
        if self.kind == "uniform":
            return self.low + (self.high - self.low) * u
        if self.kind == "bernoulli":
            return (u < self.p).astype(float)
        if self.kind == "categorical":
            cum = np.cumsum(self.probs)
            return (np.searchsorted(cum, u, side="right") + 1).astype(float)
        raise ValueError(self.kind)

    def validate(self):
        if self.kind == "normal":
            if self.sd <= 0:
                raise ValueError("normal sd must be positive")
        elif self.kind == "uniform":
            if not self.high > self.low:
                raise ValueError("uniform needs high > low")
        elif self.kind == "bernoulli":
            if not (0.0 <= self.p <= 1.0):
                raise ValueError("bernoulli p must be in [0, 1]")
        elif self.kind == "categorical":
            if len(self.probs) < 1 or any(pr < 0 for pr in self.probs):
                raise ValueError("categorical needs nonnegative probs")
            if abs(sum(self.probs) - 1.0) > 1e-9:
                raise ValueError("categorical probs must sum to 1")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    def to_spec(self) -> dict:
        if self.kind == "normal":
            return {"kind": "normal", "mean": float(self.mean_), "sd": float(self.sd)}
        if self.kind == "uniform":
            return {"kind": "uniform", "low": float(self.low), "high": float(self.high)}
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": float(self.p)}
        return {"kind": "categorical", "probs": [float(v) for v in self.probs]}

    @staticmethod
    def from_spec(spec: dict) -> "DistSpec":
        kind = spec["kind"]
        d = DistSpec(
            kind=kind,
            mean_=float(spec.get("mean", 0.0)),
            sd=float(spec.get("sd", 1.0)),
            low=float(spec.get("low", 0.0)),
            high=float(spec.get("high", 1.0)),
            p=float(spec.get("p", 0.5)),
            probs=tuple(float(v) for v in spec.get("probs", ())),
        )
        d.validate()
        return d


def normal(mean: float = 0.0, sd: float = 1.0) -> DistSpec:
    return DistSpec(kind="normal", mean_=float(mean), sd=float(sd))


def uniform(low: float, high: float) -> DistSpec:
    return DistSpec(kind="uniform", low=float(low), high=float(high))


def bernoulli(p: float) -> DistSpec:
    return DistSpec(kind="bernoulli", p=float(p))


def categorical(probs: Sequence[float]) -> DistSpec:
    return DistSpec(kind="categorical", probs=tuple(float(v) for v in probs))


@dataclass(frozen=True)
class Indicator:
    var: int
    op: str
    value: float

    def to_spec(self) -> dict:
        return {"var": int(self.var), "op": self.op, "value": float(self.value)}


@dataclass(frozen=True)
class Term:
    """coef * prod_j x_j^powers[j] * prod indicators; total degree <= 4."""

    coef: float
    powers: tuple = ()
    indicators: tuple = ()

    def validate(self, p: int):
        if len(self.powers) > p:
            raise ValueError(f"term has {len(self.powers)} powers for p={p}")
        if any(int(e) != e or e < 0 for e in self.powers):
            raise ValueError("powers must be nonnegative integers")
        if sum(self.powers) > MAX_TERM_DEGREE:
            raise ValueError(f"term degree {sum(self.powers)} exceeds {MAX_TERM_DEGREE}")
        for ind in self.indicators:
            if ind.op not in _INDICATOR_OPS:
                raise ValueError(f"unknown indicator op {ind.op!r}")
            if not (0 <= ind.var < p):
                raise ValueError(f"indicator var {ind.var} out of range for p={p}")

    def to_spec(self) -> dict:
        out = {"coef": float(self.coef)}
        if self.powers:
            out["powers"] = [int(e) for e in self.powers]
        if self.indicators:
            out["indicators"] = [i.to_spec() for i in self.indicators]
        return out


@dataclass(frozen=True)
class Expression:
    """Sum of terms evaluated column-wise on an (N, p) covariate matrix."""

    terms: tuple

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for t in self.terms:
            val = np.full(X.shape[0], t.coef)
            for j, e in enumerate(t.powers):
                if e:
                    val = val * X[:, j] ** e
            for ind in t.indicators:
                val = val * _INDICATOR_OPS[ind.op](X[:, ind.var], ind.value)
            out += val
        return out

    def validate(self, p: int):
        for t in self.terms:
            t.validate(p)

    def to_spec(self) -> list:
        return [t.to_spec() for t in self.terms]

    @staticmethod
    def from_spec(spec: list) -> "Expression":
        terms = []
        for t in spec:
            terms.append(Term(
                coef=float(t["coef"]),
                powers=tuple(int(e) for e in t.get("powers", ())),
                indicators=tuple(
                    Indicator(int(i["var"]), str(i["op"]), float(i["value"]))
                    for i in t.get("indicators", ())
                ),
            ))
        return Expression(terms=tuple(terms))


def monomial(coef: float, *powers: int) -> Expression:
    """Shorthand: monomial(1, 2) is x_0^2; monomial(2, 1, 3) is 2*x_0*x_1^3."""
    return Expression(terms=(Term(coef=coef, powers=tuple(powers)),))


def threshold_indicator(var: int, value: float, op: str = "gt") -> Expression:
    return Expression(terms=(Term(coef=1.0, indicators=(Indicator(var, op, value),)),))


@dataclass(frozen=True)
class NamedFeature:
    name: str
    expr: Expression


@dataclass(frozen=True)
class WStream:
    """Exogenous mean-zero stream.

    ``independent``: W_i ~ dist, iid, E[W] = 0 enforced analytically.
    ``scaled_noise``: W_i = scale(X_i) * eps_i with mean-zero noise, which
    is dependent on the covariates but still mean zero.
    """

    name: str
    kind: str
    dist: Optional[DistSpec] = None
    scale: Optional[Expression] = None
    noise: Optional[DistSpec] = None

    def validate(self, p: int):
        if self.kind == "independent":
            if self.dist is None:
                raise ValueError("independent W stream needs a dist")
            self.dist.validate()
            if abs(self.dist.mean()) > 1e-12:
                raise ValueError(
                    f"W stream {self.name!r} must have mean 0, got {self.dist.mean()}")
        elif self.kind == "scaled_noise":
            if self.scale is None or self.noise is None:
                raise ValueError("scaled_noise W stream needs scale and noise")
            self.scale.validate(p)
            self.noise.validate()
            if abs(self.noise.mean()) > 1e-12:
                raise ValueError(
                    f"W stream {self.name!r} noise must have mean 0")
        else:
            raise ValueError(f"unknown W stream kind {self.kind!r}")

    def to_spec(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.dist is not None:
            out["dist"] = self.dist.to_spec()
        if self.scale is not None:
            out["scale"] = self.scale.to_spec()
        if self.noise is not None:
            out["noise"] = self.noise.to_spec()
        return out

    @staticmethod
    def from_spec(spec: dict) -> "WStream":
        return WStream(
            name=str(spec["name"]),
            kind=str(spec["kind"]),
            dist=DistSpec.from_spec(spec["dist"]) if "dist" in spec else None,
            scale=Expression.from_spec(spec["scale"]) if "scale" in spec else None,
            noise=DistSpec.from_spec(spec["noise"]) if "noise" in spec else None,
        )


@dataclass(frozen=True)
class OutcomeModel:
    """Potential outcomes Y(t) = mu_t + <phi(X), beta_t> + eps_t.

    ``tau`` shifts arm 1 by a fixed amount; ``delta`` shifts it by
    delta/sqrt(n) (the local-alternative scaling).  Both default to zero;
    use one at a time.
    """

    mu: tuple = (0.0, 0.0)
    beta: Optional[tuple] = None      # (beta_1, beta_2), each length q
    noise: tuple = ()                 # per-arm DistSpec
    tau: float = 0.0
    delta: float = 0.0

    def validate(self, q: int):
        if len(self.mu) != 2:
            raise ValueError("mu must have two entries")
        if self.beta is not None:
            if len(self.beta) != 2 or any(len(b) != q for b in self.beta):
                raise ValueError(f"beta must be two length-{q} vectors")
        if len(self.noise) != 2:
            raise ValueError("noise must have one distribution per arm")
        for d in self.noise:
            d.validate()
            if abs(d.mean()) > 1e-12:
                raise ValueError("outcome noise must have mean 0")
        if self.tau != 0.0 and self.delta != 0.0:
            raise ValueError("set tau or delta, not both")

    def effective_mu(self, n: int) -> tuple:
        shift = self.tau + (self.delta / math.sqrt(n) if self.delta else 0.0)
        return (self.mu[0] + shift, self.mu[1])

    def to_spec(self) -> dict:
        out = {
            "mu": [float(v) for v in self.mu],
            "noise": [d.to_spec() for d in self.noise],
            "tau": float(self.tau),
            "delta": float(self.delta),
        }
        if self.beta is not None:
            out["beta"] = [[float(v) for v in b] for b in self.beta]
        return out

    @staticmethod
    def from_spec(spec: dict) -> "OutcomeModel":
        beta = spec.get("beta")
        return OutcomeModel(
            mu=tuple(float(v) for v in spec["mu"]),
            beta=tuple(tuple(float(v) for v in b) for b in beta) if beta else None,
            noise=tuple(DistSpec.from_spec(d) for d in spec["noise"]),
            tau=float(spec.get("tau", 0.0)),
            delta=float(spec.get("delta", 0.0)),
        )


@dataclass(frozen=True)
class CovariateLaw:
    """Either iid per-coordinate distributions or a fixed covariate matrix."""

    kind: str                      # "iid" | "fixed"
    coords: tuple = ()             # DistSpec per coordinate (iid)
    matrix: Optional[tuple] = None  # tuple of row tuples (fixed)

    def p(self) -> int:
        if self.kind == "iid":
            return len(self.coords)
        return len(self.matrix[0])

    def validate(self, n_max: int):
        if self.kind == "iid":
            if not self.coords:
                raise ValueError("iid covariate law needs at least one coordinate")
            for d in self.coords:
                d.validate()
        elif self.kind == "fixed":
            if not self.matrix:
                raise ValueError("fixed covariate law needs a matrix")
            widths = {len(r) for r in self.matrix}
            if len(widths) != 1:
                raise ValueError("fixed covariate rows must have equal length")
            if len(self.matrix) < n_max:
                raise ValueError(
                    f"fixed covariate matrix has {len(self.matrix)} rows, "
                    f"scenario needs {n_max}")
        else:
            raise ValueError(f"unknown covariate law kind {self.kind!r}")

    def to_spec(self) -> dict:
        if self.kind == "iid":
            return {"kind": "iid", "coords": [d.to_spec() for d in self.coords]}
        return {"kind": "fixed", "matrix": [list(r) for r in self.matrix]}

    @staticmethod
    def from_spec(spec: dict) -> "CovariateLaw":
        if spec["kind"] == "iid":
            return CovariateLaw(
                kind="iid",
                coords=tuple(DistSpec.from_spec(d) for d in spec["coords"]),
            )
        return CovariateLaw(
            kind="fixed",
            matrix=tuple(tuple(float(v) for v in row) for row in spec["matrix"]),
        )


def iid_covariates(*coords: DistSpec) -> CovariateLaw:
    return CovariateLaw(kind="iid", coords=tuple(coords))


def fixed_covariates(matrix) -> CovariateLaw:
    return CovariateLaw(kind="fixed",
                        matrix=tuple(tuple(float(v) for v in row) for row in matrix))


@dataclass(frozen=True)
class ScenarioConfig:
    """One complete, hashable simulation setup."""

    design: TrialConfig
    n_grid: tuple                  # ascending unit counts; stats snapshot at each
    covariates: CovariateLaw
    features_unspecified: tuple = ()   # NamedFeature
    w_streams: tuple = ()
    outcome: Optional[OutcomeModel] = None
    replications: int = 1
    base_seed: int = 0
    alpha: float = 0.05
    name: str = ""

    def __post_init__(self):
        if not self.n_grid or any(int(n) != n or n < 1 for n in self.n_grid):
            raise ValueError("n_grid must hold positive integers")
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ValueError("n_grid must be strictly ascending")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        p = self.covariates.p()
        if p != self.design.feature_map.p:
            raise ValueError(
                f"covariate law has p={p} but the feature map expects "
                f"p={self.design.feature_map.p}")
        self.covariates.validate(self.n_max)
        for f in self.features_unspecified:
            f.expr.validate(p)
        names = [f.name for f in self.features_unspecified]
        if len(set(names)) != len(names):
            raise ValueError("unspecified feature names must be unique")
        for w in self.w_streams:
            w.validate(p)
        wnames = [w.name for w in self.w_streams]
        if len(set(wnames)) != len(wnames):
            raise ValueError("W stream names must be unique")
        if self.outcome is not None:
            self.outcome.validate(self.design.feature_map.q)

    @property
    def n_max(self) -> int:
        return int(self.n_grid[-1])

    def to_spec(self) -> dict:
        out = {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "design": self.design.to_spec(),
            "n": list(int(n) for n in self.n_grid),
            "covariates": self.covariates.to_spec(),
            "features_unspecified": [
                {"name": f.name, "terms": f.expr.to_spec()}
                for f in self.features_unspecified
            ],
            "w_streams": [w.to_spec() for w in self.w_streams],
            "outcome": self.outcome.to_spec() if self.outcome else None,
            "replications": self.replications,
            "base_seed": self.base_seed,
            "alpha": self.alpha,
        }
        return out

    @staticmethod
    def from_spec(spec: dict) -> "ScenarioConfig":
        schema = spec.get("schema", SCENARIO_SCHEMA)
        if schema != SCENARIO_SCHEMA:
            raise ValueError(f"unsupported scenario schema {schema!r}")
        n = spec["n"]
        n_grid = tuple(int(v) for v in (n if isinstance(n, (list, tuple)) else [n]))
        outcome = spec.get("outcome")
        return ScenarioConfig(
            design=TrialConfig.from_spec(spec["design"]),
            n_grid=n_grid,
            covariates=CovariateLaw.from_spec(spec["covariates"]),
            features_unspecified=tuple(
                NamedFeature(str(f["name"]), Expression.from_spec(f["terms"]))
                for f in spec.get("features_unspecified", ())
            ),
            w_streams=tuple(WStream.from_spec(w) for w in spec.get("w_streams", ())),
            outcome=OutcomeModel.from_spec(outcome) if outcome else None,
            replications=int(spec.get("replications", 1)),
            base_seed=int(spec.get("base_seed", 0)),
            alpha=float(spec.get("alpha", 0.05)),
            name=str(spec.get("name", "")),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_spec(), sort_keys=True, **kwargs)

    @staticmethod
    def from_json(text: str) -> "ScenarioConfig":
        return ScenarioConfig.from_spec(json.loads(text))


def scenario_hash(scenario: ScenarioConfig) -> str:
    """Stable short hash of the canonical scenario JSON."""
    digest = hashlib.sha256(scenario.to_json().encode()).hexdigest()
    return digest[:12]
