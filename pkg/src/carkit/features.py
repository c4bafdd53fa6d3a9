"""Covariate feature maps: the space in which imbalance is measured.

A feature map ``phi: R^p -> R^q`` turns a raw covariate vector into the
feature vector whose weighted running sum ``Lambda_n = sum (T_i - rho) *
phi(X_i)`` the randomization engine tries to keep near zero.

Kinds
-----
``linear``
    ``phi(x) = (1, x_1, ..., x_p)`` (intercept optional).
``discrete``
    For p categorical covariates with ``m_l`` levels each (levels are coded
    1..m_l), the blocks are, in this fixed order:

    * overall:   ``sqrt(w_o)``                                (1 entry)
    * marginals: ``sqrt(w_m[l]) * I{x_l == k}``  for each covariate l and
      level k                                                 (sum m_l entries)
    * strata:    ``sqrt(w_s) * I{x == (k_1..k_p)}`` in row-major level order
                                                              (prod m_l entries)

    Blocks with a zero weight are dropped.  Weights are nonnegative and at
    least one must be positive.  Squared norms and inner products of these
    features therefore decompose into the familiar overall / marginal /
    within-stratum imbalance counts with weights ``w_o``, ``w_m[l]``, ``w_s``.
``custom``
    A user-supplied callable with a declared output length; code-level only
    (not JSON-serializable).

Maps are immutable after construction and safe to share across threads or
replications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "FeatureMap",
    "linear_map",
    "discrete_map",
    "custom_map",
    "build_feature_map",
    "apply_feature",
    "apply_feature_matrix",
    "scale_normalizer",
]


@dataclass(frozen=True)
class FeatureMap:
    """An immutable feature map with input dimension p and output length q."""

    kind: str
    p: int
    q: int
    include_intercept: bool = True
    levels: tuple = ()
    weight_overall: float = 0.0
    weight_margins: tuple = ()
    weight_strata: float = 0.0
    fn: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __call__(self, x):
        return apply_feature(self, x)

    def to_spec(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "p": int(self.p),
                    "include_intercept": bool(self.include_intercept)}
        if self.kind == "discrete":
            return {
                "kind": "discrete",
                "levels": [int(m) for m in self.levels],
                "weight_overall": float(self.weight_overall),
                "weight_margins": [float(w) for w in self.weight_margins],
                "weight_strata": float(self.weight_strata),
            }
        raise ValueError("custom feature maps are not JSON-serializable")

    @staticmethod
    def from_spec(spec: dict) -> "FeatureMap":
        return build_feature_map(spec)

    # Offsets of the discrete blocks inside the emitted vector, or None for
    # a dropped (zero-weight) block.
    def _discrete_layout(self):
        assert self.kind == "discrete"
        off = 0
        overall = None
        if self.weight_overall > 0:
            overall = off
            off += 1
        margins = []
        for l, m in enumerate(self.levels):
            if self.weight_margins[l] > 0:
                margins.append(off)
                off += m
            else:
                margins.append(None)
        strata = None
        if self.weight_strata > 0:
            strata = off
            off += int(np.prod(self.levels))
        assert off == self.q
        return overall, margins, strata


def linear_map(p: int, include_intercept: bool = True) -> FeatureMap:
    """phi(x) = (1, x) or just x; q = p + intercept."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return FeatureMap(kind="linear", p=p, q=p + (1 if include_intercept else 0),
                      include_intercept=include_intercept)


def discrete_map(
    levels: Sequence[int],
    weight_overall: float = 0.0,
    weight_margins=None,
    weight_strata: float = 0.0,
) -> FeatureMap:
    """Stratified/marginal map for categorical covariates (levels 1..m_l).

    ``weight_margins`` may be a scalar (shared across covariates) or one
    value per covariate.  With ``weight_overall == weight_strata == 0`` and
    positive marginal weights this is the marginal-balancing flavor; with
    only ``weight_strata > 0`` it is pure stratified balancing.
    """
    levels = tuple(int(m) for m in levels)
    if len(levels) == 0:
        raise ValueError("need at least one covariate (p = 0)")
    if any(m < 1 for m in levels):
        raise ValueError(f"level counts must be >= 1, got {levels}")
    p = len(levels)
    if weight_margins is None:
        weight_margins = 0.0
    if np.ndim(weight_margins) == 0:
        weight_margins = (float(weight_margins),) * p
    else:
        weight_margins = tuple(float(w) for w in weight_margins)
        if len(weight_margins) != p:
            raise ValueError(
                f"weight_margins has {len(weight_margins)} entries for p={p}")
    if weight_overall < 0 or weight_strata < 0 or any(w < 0 for w in weight_margins):
        raise ValueError("weights must be nonnegative")
    if weight_overall == 0 and weight_strata == 0 and all(w == 0 for w in weight_margins):
        raise ValueError("at least one weight must be positive")
    q = (
        (1 if weight_overall > 0 else 0)
        + sum(m for m, w in zip(levels, weight_margins) if w > 0)
        + (int(np.prod(levels)) if weight_strata > 0 else 0)
    )
    return FeatureMap(
        kind="discrete", p=p, q=q,
        levels=levels,
        weight_overall=float(weight_overall),
        weight_margins=weight_margins,
        weight_strata=float(weight_strata),
    )


def custom_map(p: int, q: int, fn: Callable) -> FeatureMap:
    """Wrap a user evaluation callback with a declared output length q.

    ``fn`` maps a length-p 1-D array to a length-q 1-D array; the declared
    q is enforced at every evaluation.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be >= 1")
    return FeatureMap(kind="custom", p=p, q=q, fn=fn)


def build_feature_map(spec: dict) -> FeatureMap:
    """Build a map from its JSON spec (kinds ``linear`` and ``discrete``)."""
    kind = spec.get("kind")
    if kind == "linear":
        return linear_map(int(spec["p"]), bool(spec.get("include_intercept", True)))
    if kind == "discrete":
        return discrete_map(
            spec["levels"],
            weight_overall=spec.get("weight_overall", 0.0),
            weight_margins=spec.get("weight_margins", 0.0),
            weight_strata=spec.get("weight_strata", 0.0),
        )
    raise ValueError(f"unknown feature map kind {kind!r}")


def _check_discrete_levels(fmap: FeatureMap, X: np.ndarray):
    if not np.issubdtype(X.dtype, np.number):
        raise ValueError("discrete covariates must be numeric level codes")
    rounded = np.rint(X)
    if not np.all(np.abs(X - rounded) < 1e-9):
        raise ValueError("discrete covariates must be integer level codes")
    levels = np.asarray(fmap.levels)
    if np.any(rounded < 1) or np.any(rounded > levels):
        raise ValueError(
            f"level out of range for levels={fmap.levels}: got {X.tolist()}")
    return rounded.astype(int)


def apply_feature(fmap: FeatureMap, x) -> np.ndarray:
    """Evaluate phi at one covariate vector; returns a length-q array."""
    out = apply_feature_matrix(fmap, np.asarray(x, dtype=float).reshape(1, -1))
    return out[0]


def apply_feature_matrix(fmap: FeatureMap, X) -> np.ndarray:
    """Evaluate phi row-wise on an (N, p) covariate matrix -> (N, q)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != fmap.p:
        raise ValueError(f"expected shape (N, {fmap.p}), got {X.shape}")
    n = X.shape[0]

    if fmap.kind == "linear":
        if fmap.include_intercept:
            return np.hstack([np.ones((n, 1)), X])
        return X.copy()

    if fmap.kind == "custom":
        rows = np.empty((n, fmap.q))
        for i in range(n):
            row = np.asarray(fmap.fn(X[i]), dtype=float).ravel()
            if row.shape[0] != fmap.q:
                raise ValueError(
                    f"custom map declared q={fmap.q} but emitted {row.shape[0]}")
            rows[i] = row
        return rows

    # discrete
    codes = _check_discrete_levels(fmap, X)
    out = np.zeros((n, fmap.q))
    overall, margins, strata = fmap._discrete_layout()
    if overall is not None:
        out[:, overall] = np.sqrt(fmap.weight_overall)
    for l, off in enumerate(margins):
        if off is not None:
            out[np.arange(n), off + codes[:, l] - 1] = np.sqrt(fmap.weight_margins[l])
    if strata is not None:
        # row-major stratum index over (k_1, ..., k_p)
        strides = np.cumprod((fmap.levels + (1,))[::-1])[::-1][1:]
        idx = ((codes - 1) * strides).sum(axis=1)
        out[np.arange(n), strata + idx] = np.sqrt(fmap.weight_strata)
    return out


def scale_normalizer(sum_sq_norms: float, count: int, c1: float, c2: float) -> float:
    """Clamp of the root mean squared feature norm: c1 v sqrt(mean) ^ c2.

    Used to rescale the imbalance signal so that allocation behaves the same
    across feature scalings; callers must not normalize before the first
    unit (count >= 1).
    """
    if count < 1:
        raise ValueError("scale normalizer needs at least one prior unit")
    if not (0.0 < c1 < c2):
        raise ValueError(f"need 0 < c1 < c2, got c1={c1}, c2={c2}")
    if sum_sq_norms < 0:
        raise ValueError("sum of squared norms must be nonnegative")
    return float(min(max(np.sqrt(sum_sq_norms / count), c1), c2))
