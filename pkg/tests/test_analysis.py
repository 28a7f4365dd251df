import math

import numpy as np
import pytest

from bounce.analysis import (
    BiasHistogram,
    DictionaryModel,
    constant_anchor_probability,
    p_all_one_category,
    p_zero_sequency,
    rounding_bias_histogram,
    simulate_all_one_category,
    simulate_zero_sequency,
)


class TestZeroSequency:
    def test_anchor_value(self):
        assert p_zero_sequency(60, 128) == pytest.approx(0.986, abs=1e-3)
        assert p_zero_sequency(60, 128) == pytest.approx(1 - (1 - 2 / 61) ** 128, rel=1e-14)

    def test_degenerate_cases(self):
        assert p_zero_sequency(60, 0) == 0.0
        assert p_zero_sequency(1, 1) == 1.0

    def test_monotone(self):
        ms = np.arange(1, 300, 7)
        Ds = np.arange(1, 500, 11)
        assert np.all(np.diff([p_zero_sequency(40, m) for m in ms]) > 0)
        assert np.all(np.diff([p_zero_sequency(D, 16) for D in Ds]) < 0)

    def test_large_dimension_no_underflow(self):
        p = p_zero_sequency(10_000, 3)
        assert 0 < p == pytest.approx(3 * 2 / 10_001, rel=1e-3)

    def test_monte_carlo_agrees(self):
        est = simulate_zero_sequency(10, 4, 100_000, seed=0)
        assert abs(est.value - p_zero_sequency(10, 4)) < 3 * est.stderr

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            p_zero_sequency(0, 3)


class TestAllOneCategory:
    def test_factorial_form(self):
        # D! tau! / (tau + D - 1)!
        for D, tau in [(1, 2), (3, 4), (5, 3), (10, 7)]:
            exact = math.factorial(D) * math.factorial(tau) / math.factorial(tau + D - 1)
            assert constant_anchor_probability(D, tau) == pytest.approx(exact, rel=1e-12)
            assert constant_anchor_probability(D, tau, specific=True) == pytest.approx(exact / tau, rel=1e-12)

    def test_length_one_is_constant(self):
        assert p_all_one_category(1, 1, 5) == 1.0

    def test_frozen_values(self):
        # log-gamma evaluation of the closed forms
        assert p_all_one_category(25, 128, 5) == pytest.approx(0.026589184477303036, rel=1e-12)
        assert p_all_one_category(25, 128, 5, specific=True) == pytest.approx(0.005374863677039604, rel=1e-12)

    def test_huge_dimension(self):
        q = 120 / (10_001 * 10_002 * 10_003 * 10_004)
        assert p_all_one_category(10_000, 128, 5) == pytest.approx(128 * q, rel=1e-9)

    def test_monte_carlo_agrees(self):
        est = simulate_all_one_category(5, 8, 3, 100_000, seed=0)
        assert abs(est.value - p_all_one_category(5, 8, 3)) < 3 * est.stderr

    def test_monte_carlo_is_seed_deterministic(self):
        assert simulate_all_one_category(4, 2, 3, 5000, seed=3) == simulate_all_one_category(4, 2, 3, 5000, seed=3)


class TestBiasHistogram:
    def test_last_category_overrepresented(self):
        hist = rounding_bias_histogram(25, 5, 200_000, seed=0)
        np.testing.assert_allclose(hist.frequencies[:4], 0.1805, atol=0.003)
        assert hist.frequencies[4] == pytest.approx(0.278, abs=0.003)
        assert hist.frequencies.sum() == pytest.approx(1.0)

    def test_counts_are_histograms(self):
        hist = rounding_bias_histogram(10, 3, 1000, seed=1)
        assert hist.counts.shape == (3, 11)
        np.testing.assert_array_equal(hist.counts.sum(axis=1), 1000)

    def test_unbiased_control(self):
        hist = rounding_bias_histogram(25, 5, 200_000, seed=0, unbiased=True)
        np.testing.assert_allclose(hist.frequencies, 0.2, atol=0.002)

    def test_csv(self):
        text = rounding_bias_histogram(4, 2, 100, seed=0).to_csv()
        lines = text.splitlines()
        assert lines[0] == "category,frequency,stderr,n0,n1,n2,n3,n4"
        assert len(lines) == 3

    def test_deterministic(self):
        a = rounding_bias_histogram(7, 3, 5000, seed=2)
        b = rounding_bias_histogram(7, 3, 5000, seed=2)
        np.testing.assert_array_equal(a.counts, b.counts)
        assert isinstance(a, BiasHistogram)


def test_dictionary_model_validation():
    DictionaryModel(5, 3, 2)
    with pytest.raises(ValueError):
        DictionaryModel(5, 3, 1)
