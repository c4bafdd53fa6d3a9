"""Feature-map construction, evaluation, and the imbalance decompositions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carkit.features import (FeatureMap, apply_feature, apply_feature_matrix,
                             build_feature_map, custom_map, discrete_map,
                             linear_map, scale_normalizer)


def brute_force_counts(codes, signs, levels):
    """Independent oracle for the overall/marginal/stratum imbalance counts."""
    overall = signs.sum()
    margins = [
        [signs[codes[:, l] == k].sum() for k in range(1, m + 1)]
        for l, m in enumerate(levels)
    ]
    strata = {}
    for key in {tuple(row) for row in codes.tolist()}:
        mask = np.all(codes == np.array(key), axis=1)
        strata[key] = signs[mask].sum()
    return overall, margins, strata


def test_linear_map_shapes_and_values():
    fm = linear_map(2)
    assert fm.q == 3
    assert np.array_equal(apply_feature(fm, [1.5, -2.0]), [1.0, 1.5, -2.0])
    bare = linear_map(1, include_intercept=False)
    assert bare.q == 1
    assert np.array_equal(apply_feature(bare, [3.5]), [3.5])
    with_i = linear_map(1)
    assert np.array_equal(apply_feature(with_i, [3.5]), [1.0, 3.5])


def test_discrete_map_lengths():
    fm = discrete_map([2], weight_overall=1, weight_margins=1, weight_strata=1)
    assert fm.q == 1 + 2 + 2
    marginal_only = discrete_map([2, 3], weight_margins=1.0)
    assert marginal_only.q == 5
    stratified = discrete_map([2, 2], weight_strata=1.0)
    assert stratified.q == 4


def test_discrete_apply_block_order():
    fm = discrete_map([2, 2], weight_overall=1, weight_margins=1, weight_strata=1)
    out = apply_feature(fm, [1, 2])
    assert np.array_equal(out, [1, 1, 0, 0, 1, 0, 1, 0, 0])
    # row-major stratum order (1,1),(1,2),(2,1),(2,2)
    assert np.array_equal(apply_feature(fm, [2, 1])[-4:], [0, 0, 1, 0])


def test_weights_enter_as_square_roots():
    fm = discrete_map([2], weight_overall=4.0, weight_margins=1.0)
    assert apply_feature(fm, [1])[0] == 2.0


def test_zero_weight_blocks_dropped():
    fm = discrete_map([2, 2], weight_overall=0, weight_margins=(1.0, 0.0),
                      weight_strata=0)
    assert fm.q == 2
    assert np.array_equal(apply_feature(fm, [2, 1]), [0, 1])


def test_build_errors():
    with pytest.raises(ValueError, match="at least one weight"):
        discrete_map([2, 2])
    with pytest.raises(ValueError, match="level counts"):
        discrete_map([0])
    with pytest.raises(ValueError, match="p = 0"):
        discrete_map([])
    with pytest.raises(ValueError, match="p must be >= 1"):
        linear_map(0)
    with pytest.raises(ValueError, match="nonnegative"):
        discrete_map([2], weight_overall=-1.0, weight_margins=1.0)
    fm = discrete_map([2], weight_margins=1.0)
    with pytest.raises(ValueError, match="out of range"):
        apply_feature(fm, [3])
    with pytest.raises(ValueError, match="out of range"):
        apply_feature(fm, [0])
    with pytest.raises(ValueError, match="integer level"):
        apply_feature(fm, [1.5])
    with pytest.raises(ValueError, match="expected shape"):
        apply_feature(linear_map(2), [1.0])


def test_apply_is_pure():
    fm = discrete_map([3, 2], weight_overall=0.5, weight_margins=(1.0, 2.0),
                      weight_strata=0.25)
    a = apply_feature(fm, [2, 1])
    b = apply_feature(fm, [2, 1])
    assert np.array_equal(a, b)


def test_custom_map_contract():
    fm = custom_map(1, 2, lambda x: np.array([x[0], x[0] ** 2]))
    assert np.array_equal(apply_feature(fm, [3.0]), [3.0, 9.0])
    bad = custom_map(1, 3, lambda x: np.array([x[0]]))
    with pytest.raises(ValueError, match="declared q=3"):
        apply_feature(bad, [1.0])
    with pytest.raises(ValueError, match="not JSON-serializable"):
        fm.to_spec()


def test_spec_round_trip():
    for fm in (linear_map(3, include_intercept=False),
               discrete_map([2, 3], weight_overall=1.5, weight_margins=(1, 2),
                            weight_strata=0.5)):
        assert build_feature_map(fm.to_spec()) == fm
    with pytest.raises(ValueError, match="kind"):
        build_feature_map({"kind": "fourier"})


@pytest.mark.parametrize("seed", range(4))
def test_imbalance_decompositions(seed):
    """||Lambda||^2 and <Lambda, phi(x)> split into weighted overall /
    marginal / stratum counts (checked against a brute-force oracle)."""
    rng = np.random.default_rng(seed)
    levels = tuple(int(m) for m in rng.integers(2, 4, size=rng.integers(1, 4)))
    w_o, w_s = rng.uniform(0, 2, size=2)
    w_m = tuple(rng.uniform(0, 2, size=len(levels)))
    if w_o + w_s + sum(w_m) == 0:
        w_o = 1.0
    fm = discrete_map(levels, weight_overall=w_o, weight_margins=w_m,
                      weight_strata=w_s)
    rho = rng.uniform(0.2, 0.8)
    n = 40
    codes = np.column_stack([rng.integers(1, m + 1, size=n) for m in levels])
    arms = rng.integers(1, 3, size=n)
    signs = (arms == 1).astype(float) - rho

    Phi = apply_feature_matrix(fm, codes.astype(float))
    lam = (signs[:, None] * Phi).sum(axis=0)
    overall, margins, strata = brute_force_counts(codes, signs, levels)

    expected_sq = w_o * overall ** 2
    expected_sq += sum(
        w_m[l] * sum(d * d for d in margins[l]) for l in range(len(levels)))
    expected_sq += w_s * sum(d * d for d in strata.values())
    assert lam @ lam == pytest.approx(expected_sq, rel=1e-9, abs=1e-9)

    x_new = np.array([rng.integers(1, m + 1) for m in levels])
    inner = lam @ apply_feature(fm, x_new.astype(float))
    expected_inner = w_o * overall
    expected_inner += sum(w_m[l] * margins[l][x_new[l] - 1]
                          for l in range(len(levels)))
    expected_inner += w_s * strata.get(tuple(int(v) for v in x_new), 0.0)
    assert inner == pytest.approx(expected_inner, rel=1e-9, abs=1e-9)


def test_scale_normalizer_examples():
    assert scale_normalizer(4.0, 1, 1e-3, 1e3) == 2.0
    assert scale_normalizer(1e-12, 1, 1e-3, 1e3) == 1e-3
    assert scale_normalizer(1e10, 1, 1e-3, 1e3) == 1e3
    with pytest.raises(ValueError, match="at least one"):
        scale_normalizer(4.0, 0, 1e-3, 1e3)
    with pytest.raises(ValueError, match="c1 < c2"):
        scale_normalizer(4.0, 1, 1.0, 0.5)
    with pytest.raises(ValueError, match="nonnegative"):
        scale_normalizer(-1.0, 1, 1e-3, 1e3)


@settings(max_examples=200, deadline=None)
@given(
    total=st.floats(min_value=0, max_value=1e12),
    count=st.integers(min_value=1, max_value=10_000),
    c1=st.floats(min_value=1e-6, max_value=0.5),
    c2=st.floats(min_value=1.0, max_value=1e6),
)
def test_scale_normalizer_stays_clamped(total, count, c1, c2):
    s = scale_normalizer(total, count, c1, c2)
    assert c1 <= s <= c2
