"""Allocation functions: nonincreasing maps from the imbalance signal to a
treatment-1 probability.

An allocation function ``l`` takes the (damped) inner product between the
running imbalance vector and the incoming unit's features and returns the
probability of assigning that unit to treatment 1.  Every built-in kind
satisfies ``l(0) == rho`` (the target allocation proportion) and is
nonincreasing, so positive imbalance along the incoming feature direction
pushes the assignment toward treatment 2 and vice versa.

Built-in kinds
--------------
``truncated_normal``
    ``([2*rho*Phi(-x)] ^ 1 + 1 - [2*(1-rho)*Phi(x)] ^ 1) / 2`` where ``^``
    is min.  Smooth near 0 with slope ``-1/sqrt(2*pi)`` and zero curvature.
``shifted_normal``
    ``Phi(-x + u_rho)`` with ``u_rho`` the rho-quantile of the standard
    normal.
``clamped_linear``
    ``rho - slope*x`` clamped into the band
    ``[Phi(-x + u_{rho/2}), Phi(-x + u_{(rho+1)/2})]`` (or into a flat band
    ``[alpha*rho, 1-(1-alpha)*rho]`` when ``clamp="flat"``).  Exactly linear
    near 0, which gives the strongest damping guarantees for every damping
    exponent.
``constant``
    ``l(x) == rho`` everywhere: simple randomization.  Baseline only; it
    deliberately violates the negative-slope requirement.

The standard-normal CDF/quantile used throughout is SciPy's erf-based
``ndtr``/``ndtri`` pair (double precision, abs error well below 1e-15).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "AllocationFunction",
    "ValidationReport",
    "build_allocation",
    "eval_allocation",
    "check_allocation",
    "norm_cdf",
    "norm_quantile",
    "parse_allocation_arg",
]

KINDS = ("truncated_normal", "shifted_normal", "clamped_linear", "constant")

_PROB_FLOOR = 1e-300
_PROB_CEIL = float(np.nextafter(1.0, 0.0))


def norm_cdf(x):
    """Standard normal CDF Phi (erf-based, double precision)."""
    return ndtr(x)


def norm_quantile(p):
    """Standard normal quantile u_p with Phi(u_p) = p."""
    return ndtri(p)


@dataclass(frozen=True)
class AllocationFunction:
    """A validated allocation function; immutable and safe to share.

    ``slope``, ``clamp`` and ``clamp_alpha`` only matter for the
    ``clamped_linear`` kind.  Instances are callable and accept scalars or
    numpy arrays.
    """

    kind: str
    rho: float
    slope: float = 1.0
    clamp: str = "normal"
    clamp_alpha: float = 0.5

    def __call__(self, x):
        return eval_allocation(self, x)

    def to_spec(self) -> dict:
        spec = {"kind": self.kind, "rho": float(self.rho)}
        if self.kind == "clamped_linear":
            spec["lambda"] = float(self.slope)
            if self.clamp != "normal":
                spec["clamp"] = self.clamp
                spec["alpha"] = float(self.clamp_alpha)
        return spec

    @staticmethod
    def from_spec(spec: dict) -> "AllocationFunction":
        return build_allocation(
            spec["kind"],
            spec["rho"],
            slope=spec.get("lambda", spec.get("slope", 1.0)),
            clamp=spec.get("clamp", "normal"),
            clamp_alpha=spec.get("alpha", 0.5),
        )


def build_allocation(
    kind: str,
    rho: float,
    slope: float = 1.0,
    clamp: str = "normal",
    clamp_alpha: float = 0.5,
) -> AllocationFunction:
    """Construct and validate an allocation function.

    Raises ValueError for rho outside (0,1), a nonpositive slope for
    ``clamped_linear``, or a flat-clamp band that does not contain rho
    strictly (which would break ``l(0) == rho``).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown allocation kind {kind!r}; expected one of {KINDS}")
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if kind == "clamped_linear":
        if slope is None or not slope > 0.0:
            raise ValueError(f"clamped_linear requires slope > 0, got {slope}")
        if clamp not in ("normal", "flat"):
            raise ValueError(f"clamp must be 'normal' or 'flat', got {clamp!r}")
        if clamp == "flat":
            if not (0.0 < clamp_alpha < 1.0):
                raise ValueError(f"clamp alpha must be in (0, 1), got {clamp_alpha}")
            lo, hi = clamp_alpha * rho, 1.0 - (1.0 - clamp_alpha) * rho
            if not (lo < rho < hi):
                raise ValueError(
                    f"flat clamp band [{lo}, {hi}] must contain rho={rho} strictly"
                )
    return AllocationFunction(kind=kind, rho=float(rho), slope=float(slope),
                              clamp=clamp, clamp_alpha=float(clamp_alpha))


def eval_allocation(f: AllocationFunction, x):
    """Evaluate ``f`` at ``x`` (scalar or array). NaN inputs are rejected."""
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any():
        raise ValueError("allocation argument must not be NaN")
    rho = f.rho
    if f.kind == "constant":
        out = np.full_like(arr, rho)
        if np.ndim(x) == 0:
            return float(out)
        return out
    elif f.kind == "shifted_normal":
        out = ndtr(-arr + ndtri(rho))
    elif f.kind == "truncated_normal":
        left = np.minimum(2.0 * rho * ndtr(-arr), 1.0)
        right = np.minimum(2.0 * (1.0 - rho) * ndtr(arr), 1.0)
        out = (left + 1.0 - right) / 2.0
    elif f.kind == "clamped_linear":
        if f.clamp == "normal":
            lo = ndtr(-arr + ndtri(rho / 2.0))
            hi = ndtr(-arr + ndtri((rho + 1.0) / 2.0))
        else:
            lo = f.clamp_alpha * rho
            hi = 1.0 - (1.0 - f.clamp_alpha) * rho
        out = np.clip(rho - f.slope * arr, lo, hi)
    else:  # pragma: no cover - guarded by build_allocation
        raise ValueError(f.kind)
    # doubles saturate to exactly 0 or 1 in the far tails; pull the result
    # back into the open interval so strict-range contracts hold
    out = np.clip(out, _PROB_FLOOR, _PROB_CEIL)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass
class ValidationReport:
    """Result of checking the allocation-function contract on a grid.

    The check never raises; failures are carried in the report.  The
    ``constant`` kind is exempt from the negative-slope requirement
    (``baseline_exempt``) because it is the simple-randomization baseline.
    """

    kind: str
    rho: float
    level_error: float
    monotone_violations: int
    worst_violation: float
    derivative_at_zero: float
    derivative_negative: bool
    baseline_exempt: bool
    values_in_open_unit: bool
    passed: bool
    notes: list = field(default_factory=list)


def check_allocation(
    f: AllocationFunction,
    rho: float,
    grid,
    h: float = 1e-5,
    level_tol: float = 1e-9,
) -> ValidationReport:
    """Check ``l(0)=rho``, monotonicity on ``grid``, and the sign of l'(0).

    ``grid`` must be nonempty and sorted ascending; ``h`` is the central
    finite-difference step for the derivative estimate.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")

    level_error = abs(eval_allocation(f, 0.0) - rho)
    vals = eval_allocation(f, grid)
    jumps = np.diff(vals)
    bad = jumps > 1e-12
    monotone_violations = int(np.count_nonzero(bad))
    worst = float(jumps[bad].max()) if monotone_violations else 0.0
    deriv = (eval_allocation(f, h) - eval_allocation(f, -h)) / (2.0 * h)
    in_unit = bool(np.all(vals > 0.0) and np.all(vals < 1.0))
    exempt = f.kind == "constant"

    notes = []
    if exempt and not deriv < 0:
        notes.append("constant kind: zero slope at 0 is the baseline exemption")

    passed = (
        level_error <= level_tol
        and monotone_violations == 0
        and (deriv < 0 or exempt)
        and in_unit
    )
    return ValidationReport(
        kind=f.kind,
        rho=rho,
        level_error=float(level_error),
        monotone_violations=monotone_violations,
        worst_violation=worst,
        derivative_at_zero=float(deriv),
        derivative_negative=bool(deriv < 0),
        baseline_exempt=exempt,
        values_in_open_unit=in_unit,
        passed=bool(passed),
        notes=notes,
    )


def parse_allocation_arg(text: str) -> AllocationFunction:
    """Parse the CLI form ``kind:rho[:slope]``, e.g. ``clamped_linear:0.5:1``."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"expected kind:rho[:slope], got {text!r}")
    kind = parts[0]
    try:
        rho = float(parts[1])
        slope = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError as exc:
        raise ValueError(f"bad numeric field in {text!r}") from exc
    if math.isnan(rho) or math.isnan(slope):
        raise ValueError(f"bad numeric field in {text!r}")
    return build_allocation(kind, rho, slope=slope)
