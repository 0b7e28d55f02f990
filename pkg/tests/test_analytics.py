import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from optic.analytics import (
    REFERENCE_ROWS,
    ClassBreakdown,
    RandomModelParams,
    Variant,
    class_expected,
    draw_sets,
    expected_distinct,
    lower_bound,
    median_of,
    median_set_size,
    monte_carlo_distinct,
    occupancy,
    p_n,
    prob_set_occupied,
    size_distribution,
    sweep_delta,
    sweep_gateways,
    reference_rows,
    write_csv,
)
from optic.errors import ParameterError

VARIANTS = [Variant.PLAIN, Variant.OPTIMIZED]


def test_companion_size_three_probabilities():
    assert p_n(100, 100, 3, "plain") == pytest.approx(0.267, abs=1e-3)
    assert p_n(100, 100, 3, "optimized") == pytest.approx(0.097, abs=1e-3)


def test_companion_size_three_counts():
    plain = expected_distinct(100, 800_000, 100, 100, "plain").by_size[3]
    opt = expected_distinct(100, 800_000, 100, 100, "optimized").by_size[3]
    assert plain == pytest.approx(118_618, rel=0.01)
    assert opt == pytest.approx(61_645, rel=0.01)


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("b", [2, 3, 7])
def test_no_spreading_means_everyone_ties(variant, b):
    dist = size_distribution(b, 1, variant)
    assert dist[b] == 1
    assert all(v == 0 for n, v in dist.items() if n != b)


def test_p_n_rejects_out_of_range_sizes():
    with pytest.raises(ParameterError):
        p_n(5, 5, 1)
    with pytest.raises(ParameterError):
        p_n(5, 5, 6)
    with pytest.raises(ParameterError):
        p_n(5, 0, 2)
    with pytest.raises(ParameterError):
        p_n(5, 5, 2, "fancy")


def test_occupancy_edge_cases():
    assert prob_set_occupied(10, 0, 5, 3, b=5) == 0
    assert prob_set_occupied(4, 10, 1, 4) == 1
    assert occupancy(math.comb(100, 3), 213_600) == pytest.approx(0.7335, abs=1e-3)
    assert occupancy(0, 10) == 0
    with pytest.raises(ParameterError):
        prob_set_occupied(3, 10, 2, 4)


def test_occupancy_survives_huge_bin_counts():
    bins = math.comb(5000, 2)
    assert occupancy(bins, 1) == pytest.approx(1 / bins, rel=1e-9)
    assert 0 < occupancy(math.comb(5000, 5), 1e5) < 1e-6


def test_no_prefixes_no_sets():
    assert expected_distinct(20, 0, 5, 5).total == 0
    assert class_expected(ClassBreakdown((10, 20), (0, 0))).total == 0


def test_expected_distinct_rejects_b_above_B():
    with pytest.raises(ParameterError):
        expected_distinct(4, 10, 5, 5)


@pytest.mark.parametrize("name", list(REFERENCE_ROWS))
def test_reference_rows(name):
    ref = REFERENCE_ROWS[name]
    est = class_expected(ref.breakdown, "optimized")
    assert est.total == pytest.approx(ref.distinct, rel=0.01)
    assert lower_bound(ref.breakdown) == pytest.approx(ref.lower, rel=0.01)
    assert median_set_size(ref.breakdown, "optimized") == ref.median


def test_reference_rows_report_errors():
    rows = reference_rows()
    assert [r["name"] for r in rows] == ["stub", "tier4", "tier3", "large-tier3", "tier2", "tier1"]
    assert all(r["distinct_err"] < 0.01 and r["lower_err"] < 0.01 for r in rows)


def test_stub_lower_bound_is_two_saturated_classes():
    assert lower_bound(REFERENCE_ROWS["stub"].breakdown) == pytest.approx(45 + 190, abs=1e-6)


def test_lower_bound_trivia():
    assert lower_bound(ClassBreakdown.single(2, 1)) == 1
    with pytest.raises(ParameterError):
        lower_bound(ClassBreakdown((1, 5), (10, 10)))


def test_median_with_full_ties():
    assert median_set_size(ClassBreakdown.single(7, 1000, ps=1, b=7)) == 7
    with pytest.raises(ParameterError):
        median_of({2: 0.0})


def test_breakdown_validation():
    with pytest.raises(ParameterError):
        ClassBreakdown((1, 2), (3,))
    with pytest.raises(ParameterError):
        ClassBreakdown((-1,), (3,))
    with pytest.raises(ParameterError):
        ClassBreakdown.from_delta(500, 0.5)


@given(st.integers(10, 5000), st.floats(1, 20))
def test_delta_split_preserves_totals(B, delta):
    cb = ClassBreakdown.from_delta(B, delta)
    assert cb.B == B
    assert cb.P == pytest.approx(800_000)
    assert cb.prefixes[0] >= cb.prefixes[1] >= cb.prefixes[2]


def test_unit_ratio_gives_equal_classes():
    cb = ClassBreakdown.from_delta(600, 1)
    assert cb.gateways == (200, 200, 200)
    assert cb.prefixes[0] == pytest.approx(cb.prefixes[2])


def test_ratio_sweep_shape():
    rows = sweep_delta(500, [1, 2, 5, 8, 10, 15])
    for _, plain, opt, lb in rows:
        assert lb <= opt <= plain
    opts = [r[2] for r in rows]
    gaps = [r[2] - r[3] for r in rows]
    assert opts == sorted(opts, reverse=True)
    assert gaps == sorted(gaps, reverse=True)


def test_sweep_refuses_a_single_gateway_class():
    with pytest.raises(ParameterError):
        sweep_delta(500, [20])


def test_gateway_sweep_at_four_thousand():
    (_, _, opt, lb), = sweep_gateways([4000], delta=5)
    assert opt == pytest.approx(200_000, rel=0.05)
    assert lb == pytest.approx(125_000, rel=0.05)
    rows = sweep_gateways(range(500, 5001, 500))
    assert [r[2] for r in rows] == sorted(r[2] for r in rows)


# -- properties ----------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_size_distribution_sums_to_one_on_grid(variant):
    for b in range(2, 11):
        for ps in range(1, 21):
            dist = size_distribution(b, ps, variant)
            assert abs(math.fsum(dist.values()) - 1) <= 1e-12
            assert all(0 <= v <= 1 for v in dist.values())


params = st.tuples(st.integers(2, 60), st.integers(0, 10**6), st.integers(1, 30), st.integers(2, 8)).filter(
    lambda t: t[3] <= t[0]
)


@given(params, st.sampled_from(VARIANTS))
def test_contribution_bounds(p, variant):
    B, P, ps, b = p
    est = expected_distinct(B, P, ps, b, variant)
    for n, v in est.by_size.items():
        if p_n(b, ps, n, variant) * P < 1:
            # fewer than one expected ball: the occupancy formula is concave there
            continue
        assert v <= min(math.comb(B, n), p_n(b, ps, n, variant) * P) * (1 + 1e-9) + 1e-9


@given(params, st.integers(1, 10**5), st.sampled_from(VARIANTS))
def test_monotone_in_prefix_count(p, extra, variant):
    B, P, ps, b = p
    assert expected_distinct(B, P + extra, ps, b, variant).total >= expected_distinct(B, P, ps, b, variant).total


@given(params.filter(lambda t: t[1] >= 1000))
def test_optimized_never_exceeds_plain(p):
    B, P, ps, b = p
    assert expected_distinct(B, P, ps, b, "optimized").total <= expected_distinct(B, P, ps, b, "plain").total + 1e-9


def test_grid_optimized_below_plain():
    for b in range(2, 11):
        for ps in range(1, 21):
            opt = expected_distinct(2 * b, 1e5, ps, b, "optimized").total
            plain = expected_distinct(2 * b, 1e5, ps, b, "plain").total
            assert opt <= plain + 1e-9


@pytest.mark.parametrize("cb", [r.breakdown for r in REFERENCE_ROWS.values()] + [ClassBreakdown.from_delta(500, d) for d in (1, 3, 9)])
def test_both_variants_above_lower_bound(cb):
    lb = lower_bound(cb)
    assert class_expected(cb, "plain").total >= class_expected(cb, "optimized").total >= lb


@pytest.mark.parametrize("variant", VARIANTS)
def test_wide_spreading_concentrates_on_pairs(variant):
    p2 = [p_n(5, ps, 2, variant) for ps in (5, 50, 500, 5000)]
    assert p2 == sorted(p2)
    assert p2[-1] > 0.999


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("c", [0.5, 1, 2])
def test_proportional_spreading_keeps_distribution_stable(variant, c):
    for B in (100, 200):
        for n in (2, 3, 4):
            a = p_n(B, int(c * B), n, variant)
            b = p_n(2 * B, int(c * 2 * B), n, variant)
            assert abs(a - b) < 5e-3


# -- Monte Carlo ---------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_monte_carlo_matches_closed_form(variant):
    mc = monte_carlo_distinct(RandomModelParams(20, 10_000, 5, 5, seed=1), 60, variant)
    model = expected_distinct(20, 10_000, 5, 5, variant).total
    assert abs(mc.mean - model) <= 2 * mc.stderr
    for n, f in mc.size_freq.items():
        p = p_n(5, 5, n, variant)
        assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / mc.samples)


def test_monte_carlo_without_spreading():
    mc = monte_carlo_distinct(RandomModelParams(6, 500, 1, 6), 5)
    assert mc.counts == (1,) * 5 and mc.stderr == 0
    assert mc.size_freq == {6: 1.0}


def test_monte_carlo_with_classes():
    params = RandomModelParams(15, 300, 3, 3, classes=((5, 200), (10, 100)), seed=3)
    mc = monte_carlo_distinct(params, 3)
    assert mc.samples == 900
    assert all(c <= math.comb(5, 2) + math.comb(5, 3) + 100 for c in mc.counts)


def test_monte_carlo_is_deterministic_and_validates():
    params = RandomModelParams(10, 100, 3, 4, seed=8)
    assert monte_carlo_distinct(params, 3) == monte_carlo_distinct(params, 3)
    with pytest.raises(ParameterError):
        monte_carlo_distinct(params, 0)
    assert math.isnan(monte_carlo_distinct(params, 1).stderr)


def test_drawn_sets_follow_the_variant_rule():
    import numpy as np

    rng = np.random.default_rng(0)
    sets = draw_sets(rng, 12, 2000, 4, 5, "optimized")
    sizes = (sets < 12).sum(axis=1)
    assert sizes.min() >= 2
    assert (np.diff(sets, axis=1) >= 0).all()


def test_csv_output():
    buf = io.StringIO()
    write_csv(buf, ("x", "y"), [(1, 2.5), ("a", 3)])
    assert buf.getvalue() == "x,y\n1,2.5000\na,3\n"
