"""Inference layer: projections, design variances, and two-sample tests.

The randomization design keeps features balanced, which changes the
asymptotic variance of the difference-in-means estimator: the part of an
outcome explained by the balanced features no longer contributes design
noise.  Concretely, with ``Pj[Z|phi]`` the population least-squares
projection of Z onto the feature span, the normalized imbalance of any
variable Z has asymptotic variance ``rho*(1-rho)*E[(Z - Pj[Z|phi])^2]``.

Two tests of the treatment effect are provided:

* :func:`classical_test` - the usual unpooled two-sample z statistic with
  per-arm sample variances (``N_t - 1`` divisors).  Under this design it is
  asymptotically conservative whenever the features explain outcome
  variation.
* :func:`adjusted_test` - same numerator but with variance estimators from
  within-arm regressions on the features (:func:`adjusted_variances`),
  which restores exact asymptotic size and improves power.

Degrees of freedom deliberately use ``N_t - 1`` and ``n - 2`` (rather than
``n - q``) to reproduce the estimator definitions exactly; at the sample
sizes this package targets the difference is immaterial.

All functions are pure; ``batch_*`` variants vectorize across many
replications for the Monte Carlo harness and are tested for equality
against the scalar path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "ProjectionFit",
    "TestResult",
    "TheoreticalVariances",
    "project",
    "design_variance",
    "classical_test",
    "adjusted_variances",
    "adjusted_test",
    "theoretical_variances",
    "asymptotic_power",
    "batch_two_sample_tests",
    "analyze_log",
]

# Singular values below RANK_TOL * largest are treated as zero.
RANK_TOL = 1e-10


@dataclass
class ProjectionFit:
    """Least-squares projection of a sample vector onto feature columns."""

    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    rank: int


def project(z, phi) -> ProjectionFit:
    """Project z (length n) onto the columns of phi (n x q).

    Uses a rank-revealing SVD solve; rank-deficient feature matrices get the
    minimum-norm solution, so duplicated columns change coefficients but not
    fitted values.
    """
    z = np.asarray(z, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi.reshape(-1, 1)
    if z.size == 0 or phi.shape[0] == 0:
        raise ValueError("empty input")
    if phi.shape[0] != z.size:
        raise ValueError(f"phi has {phi.shape[0]} rows for {z.size} samples")
    coef, _, rank, _ = np.linalg.lstsq(phi, z, rcond=RANK_TOL)
    fitted = phi @ coef
    return ProjectionFit(coefficients=coef, fitted=fitted,
                         residuals=z - fitted, rank=int(rank))


def design_variance(z, phi, rho: float) -> float:
    """Plug-in estimate of rho*(1-rho)*E[(Z - Pj[Z|phi])^2].

    This is the asymptotic variance of ``sum (T_i - rho) Z_i / sqrt(n)``
    under the imbalance-damping design; it is zero exactly when Z lies in
    the feature span and equals ``rho*(1-rho)*E[Z^2]`` when Z is orthogonal
    to every feature.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    fit = project(z, phi)
    return float(rho * (1.0 - rho) * np.mean(fit.residuals ** 2))


@dataclass
class TestResult:
    """A two-sided two-sample test outcome, normal reference distribution."""

    statistic: float
    tau_hat: float
    variances: tuple          # per-arm variance estimates used
    group_sizes: tuple
    alpha: float
    reject: bool
    p_value: float
    kind: str = "classical"

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statistic": self.statistic,
            "tau_hat": self.tau_hat,
            "variances": list(self.variances),
            "group_sizes": list(self.group_sizes),
            "alpha": self.alpha,
            "reject": self.reject,
            "p_value": self.p_value,
        }


def _split_arms(y, arms):
    y = np.asarray(y, dtype=float).ravel()
    arms = np.asarray(arms).ravel()
    if y.shape != arms.shape:
        raise ValueError("y and arms must have equal length")
    if not np.all((arms == 1) | (arms == 2)):
        raise ValueError("arms must contain only 1 and 2")
    mask1 = arms == 1
    return y, mask1


def _two_sample_result(tau_hat, v1, n1, v2, n2, alpha, kind) -> TestResult:
    se = np.sqrt(v1 / n1 + v2 / n2)
    if se == 0.0:
        raise ValueError("zero pooled variance; statistic undefined")
    stat = float(tau_hat / se)
    crit = float(ndtri(1.0 - alpha / 2.0))
    p = float(2.0 * ndtr(-abs(stat)))
    return TestResult(
        statistic=stat, tau_hat=float(tau_hat), variances=(float(v1), float(v2)),
        group_sizes=(int(n1), int(n2)), alpha=float(alpha),
        reject=bool(abs(stat) >= crit), p_value=p, kind=kind,
    )


def classical_test(y, arms, alpha: float = 0.05) -> TestResult:
    """Unpooled two-sample z test of equal means.

    ``arms`` holds 1/2 labels; both arms need at least two observations for
    the ``N_t - 1`` sample variances.
    """
    y, mask1 = _split_arms(y, arms)
    y1, y2 = y[mask1], y[~mask1]
    if y1.size < 2 or y2.size < 2:
        raise ValueError(
            f"each arm needs >= 2 observations, got {y1.size} and {y2.size}")
    tau_hat = y1.mean() - y2.mean()
    v1 = y1.var(ddof=1)
    v2 = y2.var(ddof=1)
    return _two_sample_result(tau_hat, v1, y1.size, v2, y2.size, alpha, "classical")


@dataclass
class AdjustedVariances:
    """Feature-adjusted per-arm variance estimates.

    ``residual`` is the within-arm regression mean squared residual
    (``N_t - 1`` divisor); ``effect_spread`` is the shared
    ``rho*(1-rho)/(n-2) * sum_i (phi_i (a_1 - a_2))^2`` term that accounts
    for heterogeneous feature effects across arms.  ``value`` sums the two.
    """

    value: tuple
    residual: tuple
    effect_spread: float
    coefficients: tuple
    singular_fallback: bool = False


def adjusted_variances(y, arms, phi, rho: float) -> AdjustedVariances:
    """Within-arm feature regressions -> adjusted variance estimates.

    For each arm t, regress the centered outcomes of that arm on its feature
    rows; the first variance component is the mean squared residual, and the
    second (shared) component sums ``(phi_i (a_1 - a_2))^2`` over all n
    units.  Singular within-arm designs fall back to the minimum-norm fit
    and are flagged.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    y, mask1 = _split_arms(y, arms)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi.reshape(-1, 1)
    if phi.shape[0] != y.size:
        raise ValueError("phi must have one row per unit")
    n = y.size
    if n < 3:
        raise ValueError("need n >= 3 for the n - 2 divisor")

    coefs, ssr, sizes = [], [], []
    fallback = False
    for mask in (mask1, ~mask1):
        yt = y[mask]
        pt = phi[mask]
        if yt.size < 2:
            raise ValueError("each arm needs >= 2 observations")
        fit = project(yt - yt.mean(), pt)
        if fit.rank < min(pt.shape):
            fallback = True
        coefs.append(fit.coefficients)
        ssr.append(float(np.sum(fit.residuals ** 2)))
        sizes.append(yt.size)

    diff = phi @ (coefs[0] - coefs[1])
    spread = float(rho * (1.0 - rho) / (n - 2) * np.sum(diff ** 2))
    resid = (ssr[0] / (sizes[0] - 1), ssr[1] / (sizes[1] - 1))
    return AdjustedVariances(
        value=(resid[0] + spread, resid[1] + spread),
        residual=resid,
        effect_spread=spread,
        coefficients=(coefs[0], coefs[1]),
        singular_fallback=fallback,
    )


def adjusted_test(y, arms, phi, rho: float, alpha: float = 0.05) -> TestResult:
    """Two-sample test with the feature-adjusted variance estimators."""
    y_arr, mask1 = _split_arms(y, arms)
    adj = adjusted_variances(y, arms, phi, rho)
    y1, y2 = y_arr[mask1], y_arr[~mask1]
    tau_hat = y1.mean() - y2.mean()
    return _two_sample_result(tau_hat, adj.value[0], y1.size,
                              adj.value[1], y2.size, alpha, "adjusted")


@dataclass
class TheoreticalVariances:
    """Population (asymptotic) variance components of the two tests."""

    sigma_tau_sq: float       # avar of sqrt(n) * (mean diff)
    sigma_e_sq: float         # s1^2/rho + s2^2/(1-rho), classical denominator limit
    sigma_pj_sq: float        # E(Pj[e1/rho + e2/(1-rho) | phi])^2
    sigma_tilde_sq: tuple     # per-arm adjusted variance limits
    sigma_stat_sq: float      # sigma_tau_sq / sigma_e_sq, in (0, 1]


def theoretical_variances(
    sigma_sq: Sequence[float],
    pj_sq: Sequence[float],
    pj_cross: float,
    rho: float,
) -> TheoreticalVariances:
    """Assemble the closed-form variance components from population moments.

    Inputs: per-arm error variances ``sigma_sq = (s1^2, s2^2)``, projection
    second moments ``pj_sq = (E(Pj[e1|phi])^2, E(Pj[e2|phi])^2)`` and the
    cross moment ``pj_cross = E(Pj[e1|phi] Pj[e2|phi])``, where
    ``e_t = Y(t) - mu_t``.  The two algebraically equivalent expressions

        sigma_tau^2 = s1^2/rho + s2^2/(1-rho) - rho(1-rho) sigma_pj^2
                    = tilde_s1^2/rho + tilde_s2^2/(1-rho)

    are both computed; they agree to rounding for any consistent inputs.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    s1, s2 = (float(v) for v in sigma_sq)
    a1, a2 = (float(v) for v in pj_sq)
    c = float(pj_cross)
    tol = 1e-9 * max(1.0, s1, s2)
    if a1 < -tol or a2 < -tol:
        raise ValueError("projection second moments must be nonnegative")
    if a1 > s1 + tol or a2 > s2 + tol:
        raise ValueError("projection second moment cannot exceed the error variance")
    if c * c > a1 * a2 + tol:
        raise ValueError("cross moment violates Cauchy-Schwarz against pj_sq")

    sigma_e_sq = s1 / rho + s2 / (1.0 - rho)
    sigma_pj_sq = a1 / rho**2 + a2 / (1.0 - rho) ** 2 + 2.0 * c / (rho * (1.0 - rho))
    sigma_tau_sq = sigma_e_sq - rho * (1.0 - rho) * sigma_pj_sq
    diff_sq = a1 + a2 - 2.0 * c   # E(Pj[e1 - e2 | phi])^2
    tilde = tuple(
        (s - a) + rho * (1.0 - rho) * diff_sq for s, a in ((s1, a1), (s2, a2))
    )
    if sigma_tau_sq < -tol:
        raise ValueError("inputs imply a negative sigma_tau^2")
    sigma_tau_sq = max(sigma_tau_sq, 0.0)
    return TheoreticalVariances(
        sigma_tau_sq=float(sigma_tau_sq),
        sigma_e_sq=float(sigma_e_sq),
        sigma_pj_sq=float(sigma_pj_sq),
        sigma_tilde_sq=tilde,
        sigma_stat_sq=float(sigma_tau_sq / sigma_e_sq),
    )


def asymptotic_power(
    delta: float,
    sigma_e: float,
    sigma_tau: float,
    alpha: float,
    variant: str = "derived",
) -> float:
    """Limiting rejection probability under the local alternative delta/sqrt(n).

    The statistic converges to a normal with standard deviation
    ``sigma_tau/sigma_e`` and a noncentrality that depends on the variant:

    * ``"derived"`` - mean ``|delta|/sigma_e``, i.e. power
      ``P(| |delta|/sigma_tau + N(0,1) | >= u_{1-alpha/2} * sigma_e/sigma_tau)``.
      This is what the difference-in-means CLT gives and what the Monte
      Carlo harness reproduces.
    * ``"display"`` - same with ``|delta|/(2*sigma_tau)``: a halved
      noncentrality kept for comparison (see README on the factor-2
      discrepancy); it does not match simulation for this statistic.

    For the adjusted test pass ``sigma_e == sigma_tau`` (its variance
    estimator targets ``sigma_tau^2``), which reduces the threshold to
    ``u_{1-alpha/2}``.
    """
    if sigma_e <= 0 or sigma_tau <= 0:
        raise ValueError("standard deviations must be positive")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if variant not in ("derived", "display"):
        raise ValueError(f"unknown variant {variant!r}")
    mean = abs(delta) / sigma_tau
    if variant == "display":
        mean /= 2.0
    threshold = float(ndtri(1.0 - alpha / 2.0)) * sigma_e / sigma_tau
    return float(ndtr(mean - threshold) + ndtr(-threshold - mean))


# -- vectorized replication-level tests ------------------------------------

def batch_two_sample_tests(Y, T1, Phi, rho: float, alpha: float):
    """Both tests for many replications at once.

    ``Y`` is (R, n) outcomes, ``T1`` (R, n) booleans (treatment-1 flags),
    ``Phi`` (R, n, q) features.  Returns a dict of length-R arrays:
    ``classical_stat``, ``classical_reject``, ``adjusted_stat``,
    ``adjusted_reject``, ``adjusted_var1``, ``adjusted_var2``.  Agrees with
    :func:`classical_test` / :func:`adjusted_test` applied per replication.
    """
    Y = np.asarray(Y, dtype=float)
    T1 = np.asarray(T1, dtype=bool)
    Phi = np.asarray(Phi, dtype=float)
    R, n = Y.shape
    q = Phi.shape[2]
    crit = float(ndtri(1.0 - alpha / 2.0))

    n1 = T1.sum(axis=1)
    n2 = n - n1
    if np.any(n1 < max(2, q)) or np.any(n2 < max(2, q)):
        raise ValueError("every replication needs >= max(2, q) units per arm")
    w1 = T1.astype(float)
    w2 = 1.0 - w1
    ybar1 = (Y * w1).sum(axis=1) / n1
    ybar2 = (Y * w2).sum(axis=1) / n2
    tau_hat = ybar1 - ybar2

    yc1 = (Y - ybar1[:, None]) * w1
    yc2 = (Y - ybar2[:, None]) * w2
    s1 = (yc1 ** 2).sum(axis=1) / (n1 - 1)
    s2 = (yc2 ** 2).sum(axis=1) / (n2 - 1)
    classical_stat = tau_hat / np.sqrt(s1 / n1 + s2 / n2)

    # within-arm regressions via batched normal equations (pinv handles the
    # rare singular Gram matrix with the same minimum-norm solution as the
    # scalar path)
    stats = {}
    coefs = []
    ssrs = []
    for w, yc in ((w1, yc1), (w2, yc2)):
        G = np.einsum("rn,rnq,rnk->rqk", w, Phi, Phi, optimize=True)
        b = np.einsum("rnq,rn->rq", Phi, yc, optimize=True)
        try:
            a = np.linalg.solve(G, b[..., None])[..., 0]
            if not np.all(np.isfinite(a)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            a = np.einsum("rqk,rk->rq", np.linalg.pinv(G, rcond=RANK_TOL), b)
        fit = np.einsum("rnq,rq->rn", Phi, a)
        ssrs.append((((yc - fit * w)) ** 2 * w).sum(axis=1))
        coefs.append(a)
    diff = np.einsum("rnq,rq->rn", Phi, coefs[0] - coefs[1])
    spread = rho * (1.0 - rho) / (n - 2) * (diff ** 2).sum(axis=1)
    v1 = ssrs[0] / (n1 - 1) + spread
    v2 = ssrs[1] / (n2 - 1) + spread
    adjusted_stat = tau_hat / np.sqrt(v1 / n1 + v2 / n2)

    stats["classical_stat"] = classical_stat
    stats["classical_reject"] = np.abs(classical_stat) >= crit
    stats["adjusted_stat"] = adjusted_stat
    stats["adjusted_reject"] = np.abs(adjusted_stat) >= crit
    stats["adjusted_var1"] = v1
    stats["adjusted_var2"] = v2
    return stats


def analyze_log(records, y, rho: float, alpha: float = 0.05,
                   adjusted: bool = True):
    """Run the tests on an engine assignment log plus an outcome column.

    ``records`` is an iterable of AssignmentRecord (or dicts with ``phi``
    and ``arm``); ``y`` is one outcome per logged unit, in log order.
    Returns ``(classical, adjusted)``; the second entry is None when
    ``adjusted`` is off.
    """
    recs = list(records)
    phi = np.array([r["phi"] if isinstance(r, dict) else r.phi for r in recs],
                   dtype=float)
    arms = np.array([r["arm"] if isinstance(r, dict) else r.arm for r in recs])
    y = np.asarray(y, dtype=float)
    if y.size != arms.size:
        raise ValueError("need one outcome per logged unit")
    classical = classical_test(y, arms, alpha)
    adj = adjusted_test(y, arms, phi, rho, alpha) if adjusted else None
    return classical, adj
