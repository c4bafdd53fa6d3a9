"""Allocation-function contracts.

Expected values below were computed with the mpmath oracle (30 digits) and
frozen; the oracle fixture re-derives them at run time as a cross-check.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carkit.allocation import (AllocationFunction, build_allocation,
                               check_allocation, eval_allocation,
                               parse_allocation_arg)

KINDS = ("truncated_normal", "shifted_normal", "clamped_linear", "constant")
RHOS = (0.3, 0.5, 0.7)

# frozen mpmath values
PHI_M1 = 0.15865525393145705        # Phi(-1)
PHI_M05 = 0.3085375387259869        # Phi(-0.5)
U_075 = 0.67448975019608174         # 0.75-quantile
INV_SQRT_2PI = 0.39894228040143268
CLAMPED_AT_10 = 6.6995812314177047e-27   # Phi(-10 + u_{0.25}), rho=.5, slope=1


def test_reference_cdf_is_high_precision(norm_oracle):
    cdf, quantile = norm_oracle
    f = build_allocation("shifted_normal", 0.5)
    for x in (-3.0, -1.0, -0.25, 0.0, 0.5, 2.0):
        assert eval_allocation(f, x) == pytest.approx(cdf(-x), abs=1e-14)
    assert eval_allocation(f, 1.0) == pytest.approx(PHI_M1, abs=1e-12)
    assert quantile(0.75) == pytest.approx(U_075, abs=1e-14)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("rho", RHOS)
def test_level_at_zero(kind, rho):
    f = build_allocation(kind, rho)
    assert abs(eval_allocation(f, 0.0) - rho) <= 1e-12


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("rho", RHOS)
def test_nonincreasing_and_open_range(kind, rho):
    f = build_allocation(kind, rho)
    grid = np.linspace(-20, 20, 10_000)
    vals = eval_allocation(f, grid)
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.all(vals > 0.0) and np.all(vals < 1.0)


def test_truncated_normal_reduces_to_plain_cdf_at_half():
    f = build_allocation("truncated_normal", 0.5)
    g = build_allocation("shifted_normal", 0.5)   # Phi(-x) since u_.5 = 0
    grid = np.linspace(-12, 12, 2001)
    assert np.max(np.abs(eval_allocation(f, grid) - eval_allocation(g, grid))) <= 1e-12
    assert eval_allocation(f, 1.0) == pytest.approx(PHI_M1, abs=1e-12)


def test_shifted_normal_examples():
    f = build_allocation("shifted_normal", 0.3)
    assert eval_allocation(f, 0.0) == pytest.approx(0.3, abs=1e-12)


def test_constant_is_simple_randomization():
    f = build_allocation("constant", 0.7)
    vals = eval_allocation(f, np.array([-5.0, 0.0, 3.0]))
    assert np.all(vals == 0.7)


def test_clamped_linear_formula_and_envelopes(norm_oracle):
    cdf, quantile = norm_oracle
    f = build_allocation("clamped_linear", 0.5, slope=0.25)
    # interior: the linear segment itself
    assert eval_allocation(f, 0.4) == pytest.approx(0.5 - 0.25 * 0.4, abs=1e-12)
    # far out the linear part leaves the band and the lower envelope
    # Phi(-x + u_{rho/2}) takes over
    f1 = build_allocation("clamped_linear", 0.5, slope=1.0)
    assert eval_allocation(f1, 10.0) == pytest.approx(CLAMPED_AT_10, rel=1e-12)
    assert eval_allocation(f1, 10.0) == pytest.approx(cdf(-10 + quantile(0.25)), rel=1e-9)
    # envelope sandwich holds pointwise
    grid = np.linspace(-15, 15, 4001)
    for rho in RHOS:
        fl = build_allocation("clamped_linear", rho, slope=2.0)
        vals = eval_allocation(fl, grid)
        lo = eval_allocation(build_allocation("shifted_normal", rho / 2), grid)
        hi = eval_allocation(build_allocation("shifted_normal", (rho + 1) / 2), grid)
        assert np.all(vals >= lo - 1e-15) and np.all(vals <= hi + 1e-15)


def test_flat_clamp_variant():
    f = build_allocation("clamped_linear", 0.5, slope=1.0, clamp="flat",
                         clamp_alpha=0.5)
    assert eval_allocation(f, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert eval_allocation(f, 100.0) == pytest.approx(0.25, abs=1e-12)
    assert eval_allocation(f, -100.0) == pytest.approx(0.75, abs=1e-12)
    # bands that cannot contain rho strictly are rejected at build time
    with pytest.raises(ValueError, match="band"):
        build_allocation("clamped_linear", 0.7, slope=1.0, clamp="flat",
                         clamp_alpha=0.5)


def test_build_validation_errors():
    with pytest.raises(ValueError, match="rho"):
        build_allocation("shifted_normal", 1.2)
    with pytest.raises(ValueError, match="rho"):
        build_allocation("constant", 0.0)
    with pytest.raises(ValueError, match="slope"):
        build_allocation("clamped_linear", 0.5, slope=0.0)
    with pytest.raises(ValueError, match="slope"):
        build_allocation("clamped_linear", 0.5, slope=None)
    with pytest.raises(ValueError, match="kind"):
        build_allocation("biased_coin", 0.5)
    with pytest.raises(ValueError, match="NaN"):
        eval_allocation(build_allocation("constant", 0.5), float("nan"))


def test_check_allocation_reports():
    grid = np.linspace(-10, 10, 4001)
    rep = check_allocation(build_allocation("shifted_normal", 0.5), 0.5, grid)
    assert rep.passed
    assert rep.derivative_at_zero == pytest.approx(-INV_SQRT_2PI, abs=1e-4)

    rep = check_allocation(build_allocation("constant", 0.5), 0.5, grid)
    assert rep.passed and rep.baseline_exempt
    assert rep.derivative_at_zero == pytest.approx(0.0, abs=1e-12)
    assert not rep.derivative_negative
    assert rep.notes

    rep = check_allocation(build_allocation("clamped_linear", 0.5, slope=2.0),
                           0.5, grid)
    assert rep.derivative_at_zero == pytest.approx(-2.0, abs=1e-6)

    with pytest.raises(ValueError, match="nonempty"):
        check_allocation(build_allocation("constant", 0.5), 0.5, [])
    with pytest.raises(ValueError, match="sorted"):
        check_allocation(build_allocation("constant", 0.5), 0.5, [1.0, -1.0])
    with pytest.raises(ValueError, match="positive"):
        check_allocation(build_allocation("constant", 0.5), 0.5, [0.0], h=0.0)


@settings(max_examples=200, deadline=None)
@given(
    kind=st.sampled_from(KINDS),
    rho=st.floats(min_value=0.05, max_value=0.95),
    x1=st.floats(min_value=-30, max_value=30),
    x2=st.floats(min_value=-30, max_value=30),
)
def test_property_level_and_monotone(kind, rho, x1, x2):
    f = build_allocation(kind, rho)
    assert abs(eval_allocation(f, 0.0) - rho) <= 1e-12
    lo_x, hi_x = sorted((x1, x2))
    assert eval_allocation(f, lo_x) >= eval_allocation(f, hi_x) - 1e-12


def test_vectorized_eval_matches_scalar():
    f = build_allocation("truncated_normal", 0.3)
    xs = np.linspace(-4, 4, 17)
    vec = eval_allocation(f, xs)
    assert vec.shape == xs.shape
    for x, v in zip(xs, vec):
        assert eval_allocation(f, float(x)) == v


def test_spec_round_trip_and_cli_parse():
    f = build_allocation("clamped_linear", 0.4, slope=2.5)
    assert AllocationFunction.from_spec(f.to_spec()) == f
    g = parse_allocation_arg("clamped_linear:0.4:2.5")
    assert g == f
    assert parse_allocation_arg("constant:0.7").kind == "constant"
    with pytest.raises(ValueError):
        parse_allocation_arg("clamped_linear")
    with pytest.raises(ValueError):
        parse_allocation_arg("shifted_normal:abc")
