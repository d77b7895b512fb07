"""
Property-based tests for the Poisson-binomial engine and BH using Hypothesis.

Tests the pmf against brute-force enumeration, the shape inequalities of
the distribution, monotone likelihood ratios and the equivalence between
the exact p-value and the critical value.
"""

import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from copy_forensics import indices, pbd
from copy_forensics.mtp import bh_reject

probability = st.floats(min_value=0.01, max_value=0.99, allow_nan=False)
profiles = st.lists(probability, min_size=1, max_size=30)


def brute_force_pmf(pis):
    """pmf by enumerating every match pattern."""
    pis = np.asarray(pis, dtype=float)
    patterns = np.array(list(itertools.product((0, 1), repeat=len(pis))), dtype=bool)
    weights = np.where(patterns, pis, 1.0 - pis).prod(axis=1)
    return np.bincount(patterns.sum(axis=1), weights=weights, minlength=len(pis) + 1)


@st.composite
def profile_and_copy_set(draw):
    pis = draw(st.lists(probability, min_size=1, max_size=30))
    copied = draw(st.sets(st.integers(min_value=0, max_value=len(pis) - 1), max_size=len(pis)))
    return pbd.MatchProfile(pis), pbd.CopySet.of(sorted(copied))


@pytest.mark.property
class TestPmfProperties:
    """Properties of the exact pmf."""

    @settings(max_examples=500, deadline=None)
    @given(st.lists(probability, min_size=1, max_size=15))
    def test_matches_enumeration(self, pis):
        """Verify the DP pmf equals brute-force enumeration for 500 profiles with N <= 15."""
        np.testing.assert_allclose(pbd.MatchProfile(pis).pmf_table, brute_force_pmf(pis), atol=1e-12)

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=200))
    def test_sums_to_one(self, pis):
        """Verify the pmf sums to 1 within 1e-12."""
        assert pbd.MatchProfile(pis).pmf_table.sum() == pytest.approx(1.0, abs=1e-12)

    @given(profiles)
    def test_tails_decrease(self, pis):
        """Verify P(M >= x) is non-increasing and bounded by [0, 1]."""
        tails = pbd.MatchProfile(pis).tail_table
        assert tails[0] == 1.0 and tails[-1] == 0.0
        assert np.all(np.diff(tails) <= 1e-15)

    @given(profiles)
    def test_log_concave(self, pis):
        """Verify f(x)^2 >= f(x+1) f(x-1)."""
        f = pbd.MatchProfile(pis).pmf_table
        for x in range(1, len(pis)):
            assert f[x] ** 2 >= f[x + 1] * f[x - 1] * (1 - 1e-9)

    @given(profiles)
    def test_strengthened_log_concavity(self, pis):
        """Verify f(x)^2 >= C(x) f(x+1) f(x-1) on interior x, C(x) = max((x+1)/x, (N-x+1)/(N-x))."""
        n = len(pis)
        f = pbd.MatchProfile(pis).pmf_table
        for x in range(1, n):
            if min(f[x - 1], f[x], f[x + 1]) <= 1e-300:
                continue
            c = max((x + 1) / x, (n - x + 1) / (n - x))
            assert f[x] ** 2 >= c * f[x + 1] * f[x - 1] * (1 - 1e-9)


@pytest.mark.property
class TestLikelihoodRatioProperties:
    """Monotone likelihood ratio of the spiked pmf."""

    @settings(max_examples=1000, deadline=None)
    @given(profile_and_copy_set())
    def test_ratio_non_decreasing(self, drawn):
        """Verify the spiked-to-null ratio never decreases on its support."""
        profile, copied = drawn
        start = max(1, len(copied))
        ratios = [pbd.likelihood_ratio(profile, copied, x) for x in range(start, profile.num_questions + 1)]
        for lower, higher in zip(ratios, ratios[1:]):
            assert higher >= lower * (1 - 1e-9)


@pytest.mark.property
class TestCriticalValueProperties:
    """The exact p-value rejects exactly above the critical value."""

    @settings(max_examples=200, deadline=None)
    @given(profiles, st.sampled_from([0.05, 0.001, 1e-5]))
    def test_p_value_and_critical_value_agree(self, pis, alpha):
        """Verify exact_p(m) <= alpha iff m > k*."""
        profile = pbd.MatchProfile(pis)
        k_star = pbd.critical_value(profile, alpha)
        for m in range(profile.num_questions + 1):
            assert (indices.exact_p(profile, m) <= alpha) == (m > k_star)

    @given(profiles, st.floats(min_value=1e-6, max_value=0.5))
    def test_size_never_exceeds_alpha(self, pis, alpha):
        """Verify P(M > k*) <= alpha."""
        profile = pbd.MatchProfile(pis)
        k_star = pbd.critical_value(profile, alpha)
        assert profile.tail_table[k_star + 1] <= alpha


@pytest.mark.property
class TestBhProperties:
    """Properties of Benjamini-Hochberg rejection."""

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=60),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, p_values, random):
        """Verify rejections follow the p-values when their order is shuffled."""
        order = list(range(len(p_values)))
        random.shuffle(order)
        shuffled = [p_values[i] for i in order]
        original = bh_reject(p_values, 0.05)
        assert {order[i] for i in bh_reject(shuffled, 0.05)} == original

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=60),
           st.floats(min_value=0.001, max_value=0.5), st.floats(min_value=0.001, max_value=0.5))
    def test_larger_p_star_rejects_more(self, p_values, a, b):
        """Verify the rejection set grows with p*."""
        assume(a != b)
        low, high = sorted((a, b))
        assert bh_reject(p_values, low) <= bh_reject(p_values, high)
