"""Sequential covariate-adaptive randomization engine.

A :class:`Trial` assigns units one at a time.  It maintains the imbalance
vector ``Lambda_n = sum_{i<=n} (T_i - rho) * phi(X_i)`` (``T_i`` is 1 for
treatment 1 and 0 for treatment 2) and hands the n-th unit to treatment 1
with probability

    rho                                      for n = 1,
    l( <Lambda_{n-1}, phi(x_n)> / (n-1)^gamma )   for n > 1,

where ``l`` is the configured allocation function and ``gamma`` in [0, 1)
damps the imbalance signal as the trial grows.  With ``normalize`` on,
``Lambda`` and ``phi`` are each divided by the clamped running RMS feature
norm before the inner product, which removes sensitivity to the overall
feature scale.

Uniform draws are supplied by the caller, never generated here; a trial is
a deterministic function of its (covariates, u) stream, which is what makes
bit-exact replay and exhaustive small-n verification possible.  A trial is
strictly sequential (one assign at a time); distinct trials may run fully
in parallel.

The assignment log serializes to JSON lines, one record per unit with keys
``index, covariates, phi, prob, u, arm``; floats round-trip exactly through
``json`` (repr-based), so replaying a serialized log reproduces the same
state bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .allocation import AllocationFunction, build_allocation, eval_allocation
from .features import FeatureMap, apply_feature, build_feature_map, scale_normalizer

__all__ = [
    "TrialConfig",
    "Trial",
    "AssignmentRecord",
    "ImbalanceReport",
    "init_trial",
]


@dataclass(frozen=True)
class TrialConfig:
    """Immutable design parameters for one trial."""

    rho: float
    allocation: AllocationFunction
    feature_map: FeatureMap
    gamma: float = 0.75
    normalize: bool = False
    c1: float = 1e-3
    c2: float = 1e3

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not (0.0 < self.c1 < self.c2):
            raise ValueError(f"need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")
        if abs(self.allocation.rho - self.rho) > 1e-12:
            raise ValueError(
                f"allocation function has rho={self.allocation.rho}, "
                f"config has rho={self.rho}; they must match")

    def to_spec(self) -> dict:
        return {
            "rho": float(self.rho),
            "gamma": float(self.gamma),
            "allocation": self.allocation.to_spec(),
            "feature_map": self.feature_map.to_spec(),
            "normalize": bool(self.normalize),
            "c1": float(self.c1),
            "c2": float(self.c2),
        }

    @staticmethod
    def from_spec(spec: dict) -> "TrialConfig":
        return TrialConfig(
            rho=float(spec["rho"]),
            gamma=float(spec["gamma"]),
            allocation=AllocationFunction.from_spec(spec["allocation"]),
            feature_map=build_feature_map(spec["feature_map"]),
            normalize=bool(spec.get("normalize", False)),
            c1=float(spec.get("c1", 1e-3)),
            c2=float(spec.get("c2", 1e3)),
        )


@dataclass(frozen=True)
class AssignmentRecord:
    """One unit of the append-only trial log."""

    index: int          # 1-based unit index
    covariates: tuple
    phi: tuple
    prob: float         # treatment-1 probability used
    u: float            # uniform draw consumed
    arm: int            # 1 or 2

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "covariates": list(self.covariates),
            "phi": list(self.phi),
            "prob": self.prob,
            "u": self.u,
            "arm": self.arm,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "AssignmentRecord":
        return AssignmentRecord(
            index=int(d["index"]),
            covariates=tuple(d["covariates"]),
            phi=tuple(d["phi"]),
            prob=float(d["prob"]),
            u=float(d["u"]),
            arm=int(d["arm"]),
        )


@dataclass
class ImbalanceReport:
    """Imbalance snapshot: squared norm plus count-style decompositions.

    ``margins`` / ``strata`` are populated for discrete feature maps only
    (they are derived from the raw assignment log, independent of weights);
    for other maps they are None, which is not an error.
    """

    imb: float
    overall: float
    margins: Optional[list] = None     # margins[l][k-1] = D_n(l; k)
    strata: Optional[dict] = None      # {(k_1,..,k_p): D_n(k_1,..,k_p)}


class Trial:
    """Mutable state of one sequential trial."""

    def __init__(self, config: TrialConfig):
        self.config = config
        self.n = 0
        self.n1 = 0
        self.lambda_vec = np.zeros(config.feature_map.q)
        self.sum_sq_phi = 0.0
        self.log: list[AssignmentRecord] = []

    @property
    def n2(self) -> int:
        return self.n - self.n1

    def next_probability(self, x) -> float:
        """Treatment-1 probability for the next unit with covariates x."""
        phi = apply_feature(self.config.feature_map, x)
        return self._probability_for_phi(phi)

    def _probability_for_phi(self, phi: np.ndarray) -> float:
        if self.n == 0:
            return self.config.rho
        inner = float(np.einsum("j,j->", self.lambda_vec, phi))
        if self.config.normalize:
            s = scale_normalizer(self.sum_sq_phi, self.n, self.config.c1, self.config.c2)
            inner /= s * s
        damp = float(self.n) ** self.config.gamma
        return float(eval_allocation(self.config.allocation, inner / damp))

    def assign(self, x, u: float) -> int:
        """Assign one unit given its covariates and a uniform draw in [0, 1).

        Returns the arm (1 or 2) and appends to the log.  Deterministic in
        (state, x, u).
        """
        if not (0.0 <= u < 1.0):
            raise ValueError(f"uniform draw must be in [0, 1), got {u}")
        phi = apply_feature(self.config.feature_map, x)
        prob = self._probability_for_phi(phi)
        arm = 1 if u < prob else 2
        indicator = 1.0 if arm == 1 else 0.0
        self.lambda_vec = self.lambda_vec + (indicator - self.config.rho) * phi
        self.sum_sq_phi += float(np.einsum("j,j->", phi, phi))
        self.n += 1
        self.n1 += int(indicator)
        self.log.append(AssignmentRecord(
            index=self.n,
            covariates=tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float))),
            phi=tuple(float(v) for v in phi),
            prob=prob,
            u=float(u),
            arm=arm,
        ))
        return arm

    def imbalance(self) -> float:
        """Imb_n, the squared Euclidean norm of the imbalance vector."""
        return float(np.einsum("j,j->", self.lambda_vec, self.lambda_vec))

    def imbalance_report(self) -> ImbalanceReport:
        rho = self.config.rho
        signs = np.array([(1.0 if r.arm == 1 else 0.0) - rho for r in self.log])
        overall = float(signs.sum())
        report = ImbalanceReport(imb=self.imbalance(), overall=overall)
        fmap = self.config.feature_map
        if fmap.kind == "discrete" and self.n > 0:
            codes = np.array([r.covariates for r in self.log], dtype=int)
            margins = []
            for l, m in enumerate(fmap.levels):
                margins.append([
                    float(signs[codes[:, l] == k].sum()) for k in range(1, m + 1)
                ])
            strata = {}
            for key in np.unique(codes, axis=0):
                mask = np.all(codes == key, axis=1)
                strata[tuple(int(v) for v in key)] = float(signs[mask].sum())
            report.margins = margins
            report.strata = strata
        elif fmap.kind == "discrete":
            report.margins = [[0.0] * m for m in fmap.levels]
            report.strata = {}
        return report

    def recompute_lambda(self) -> np.ndarray:
        """Rebuild Lambda_n from the log (consistency check helper)."""
        lam = np.zeros(self.config.feature_map.q)
        for r in self.log:
            indicator = 1.0 if r.arm == 1 else 0.0
            lam += (indicator - self.config.rho) * np.asarray(r.phi)
        return lam

    # -- log serialization ------------------------------------------------

    def log_to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json_dict()) + "\n" for r in self.log)

    @classmethod
    def replay(cls, config: TrialConfig, records: Iterable[AssignmentRecord],
               strict: bool = True) -> "Trial":
        """Rebuild a trial by re-running assign over a logged (x, u) stream.

        With ``strict`` the replayed arm must match the logged arm at every
        step (the bit-exact replay contract).
        """
        trial = cls(config)
        for rec in records:
            arm = trial.assign(rec.covariates, rec.u)
            if strict and arm != rec.arm:
                raise ValueError(
                    f"replay diverged at unit {rec.index}: got arm {arm}, "
                    f"log says {rec.arm}")
        return trial

    @classmethod
    def replay_jsonl(cls, config: TrialConfig, text: str, strict: bool = True) -> "Trial":
        records = [AssignmentRecord.from_json_dict(json.loads(line))
                   for line in text.splitlines() if line.strip()]
        return cls.replay(config, records, strict=strict)


def init_trial(config: TrialConfig) -> Trial:
    """Fresh trial: n = 0, Lambda = 0, empty log."""
    return Trial(config)
