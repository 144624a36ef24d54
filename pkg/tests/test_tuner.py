import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ieinsum.tuner import (OccProfile, brute_force_optimal, candidates, cost_exact, cost_relaxed,
                           cost_relaxed_slope, g_star, profile_from_occ, select)

EXAMPLE = profile_from_occ([3, 1, 1, 2])
occs = st.lists(st.integers(0, 40), min_size=1, max_size=30).filter(lambda o: sum(o) > 0)


@pytest.mark.parametrize("g, F", [(1, 14), (2, 15), (3, 16)])
def test_cost_exact_example(g, F):
    assert cost_exact(EXAMPLE, g) == F


def test_cost_exact_rejects_bad_g():
    with pytest.raises(ValueError):
        cost_exact(EXAMPLE, 0)


def test_cost_relaxed_example():
    assert cost_relaxed(EXAMPLE, 1) == 22
    assert cost_relaxed(EXAMPLE, 2) == 22.5
    assert cost_relaxed(EXAMPLE, g_star(EXAMPLE)) == pytest.approx(21.583, abs=1e-3)


def test_g_star():
    assert g_star(EXAMPLE) == pytest.approx(math.sqrt(7 / 4))
    assert g_star(profile_from_occ([9] * 5)) == pytest.approx(3.0)
    assert g_star(profile_from_occ([1])) == 1.0
    assert g_star(profile_from_occ([0, 0])) == 1.0


def test_literal_n_counts_empty_rows():
    p = profile_from_occ([4, 0, 0, 4], literal_n=True)
    assert p.n == 4 and profile_from_occ([4, 0, 0, 4]).n == 2
    assert g_star(p) == pytest.approx(math.sqrt(2))


def test_candidates():
    assert candidates(EXAMPLE) == [1, 2]
    assert candidates(profile_from_occ([16] * 4)) == [4]
    assert candidates(profile_from_occ([16, 1]), gs=100.0) == [16]


def test_brute_force():
    assert brute_force_optimal(EXAMPLE) == (1, 14)
    p = profile_from_occ([8, 8, 8, 8])
    assert brute_force_optimal(p) == (8, 36) and cost_exact(p, 1) == 64
    assert brute_force_optimal(profile_from_occ([0, 0])) == (1, 0)


@pytest.mark.parametrize("k", [2, 3, 4, 6, 12])
def test_uniform_profile_optimum_among_divisors(k):
    p = profile_from_occ([k] * 5)
    divisors = [d for d in range(1, k + 1) if k % d == 0]
    best = min(divisors, key=lambda d: (cost_exact(p, d), d))
    assert best == k
    assert brute_force_optimal(p)[1] == min(cost_exact(p, g) for g in range(1, k + 1))


def test_select():
    r = select(EXAMPLE)
    assert r.chosen == 1 and r.brute_optimal == (1, 14)
    assert [g for g, _ in r.candidates] == [1, 2]
    r = select(EXAMPLE, evaluator=lambda g: 0.0 if g == 2 else 1.0)
    assert r.chosen == 2 and r.measured
    r = select(profile_from_occ([0, 0, 0]))
    assert r.chosen == 1 and r.brute_table == []


def test_from_matrix(small_matrix):
    from ieinsum.formats import dense_to_coo
    np.testing.assert_array_equal(OccProfile.from_matrix(dense_to_coo(small_matrix)).occ, [3, 1, 1, 2])


def test_negative_occ_rejected():
    with pytest.raises(ValueError):
        profile_from_occ([1, -1])


@settings(max_examples=100, deadline=None)
@given(occs)
def test_relaxed_properties(occ):
    p = profile_from_occ(occ)
    gs = g_star(p)
    assert cost_relaxed_slope(p, gs - 1e-6) < 0 < cost_relaxed_slope(p, gs + 1e-6)
    for g in (1, 2, 3.5, 7):
        assert cost_relaxed(p, g) >= p.S + p.n * g
        assert cost_relaxed(p, g) >= cost_relaxed(p, gs) - 1e-9


@settings(max_examples=100, deadline=None)
@given(occs)
def test_select_is_best_candidate(occ):
    p = profile_from_occ(occ)
    r = select(p)
    assert all(g & (g - 1) == 0 for g, _ in r.candidates)
    assert r.chosen in [g for g, _ in r.candidates]
    assert cost_exact(p, r.chosen) == min(c for _, c in r.candidates)
    assert all(1 <= g <= max(p.max_occ, 1) for g, _ in r.candidates)
