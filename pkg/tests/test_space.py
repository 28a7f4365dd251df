import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bounce.space import (
    InputSpace,
    Kind,
    SpaceError,
    VariableSpec,
    denormalize,
    format_space,
    hamming_distance,
    normalize,
    parse_space,
)


def mixed_space():
    return InputSpace(
        [VariableSpec.continuous(0, 10), VariableSpec.binary(), VariableSpec.binary(),
         VariableSpec.categorical(3), VariableSpec.ordinal(4)]
    )


class TestVariableSpec:
    def test_continuous_needs_ordered_finite_bounds(self):
        with pytest.raises(SpaceError):
            VariableSpec.continuous(1.0, 1.0)
        with pytest.raises(SpaceError):
            VariableSpec.continuous(0.0, np.inf)

    def test_labels_need_two_categories(self):
        with pytest.raises(SpaceError):
            VariableSpec.categorical(1)
        assert VariableSpec.ordinal(2).cardinality == 2

    def test_counts(self):
        s = mixed_space()
        assert (s.dim, s.n_cont, s.n_comb) == (5, 1, 4)
        assert s.count(Kind.BINARY) == 2
        np.testing.assert_array_equal(s.cardinalities, [0, 2, 2, 3, 4])

    def test_empty_space_rejected(self):
        with pytest.raises(SpaceError):
            InputSpace([])


class TestDenormalize:
    @pytest.mark.parametrize("v, expected", [(-1.0, 0.0), (1.0, 10.0)])
    def test_endpoints(self, v, expected):
        s = InputSpace([VariableSpec.continuous(0, 10)])
        assert denormalize(s, [v])[0] == expected

    def test_midpoint(self):
        s = InputSpace([VariableSpec.continuous(2, 4)])
        assert denormalize(s, [0.0])[0] == 3.0

    def test_discrete_entries_pass_through(self):
        s = mixed_space()
        x = np.array([0.5, -1.0, 1.0, 3.0, 2.0])
        np.testing.assert_array_equal(denormalize(s, x)[1:], x[1:])

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        lo = rng.uniform(-100, 100, size=10_000)
        hi = lo + rng.uniform(1e-3, 50, size=lo.size)
        v = rng.uniform(-1, 1, size=lo.size)
        for i in range(0, lo.size, 1000):
            s = InputSpace([VariableSpec.continuous(a, b) for a, b in zip(lo[i : i + 1000], hi[i : i + 1000])])
            np.testing.assert_allclose(normalize(s, denormalize(s, v[i : i + 1000])), v[i : i + 1000], atol=1e-12)


class TestHamming:
    def test_identity(self):
        s = mixed_space()
        x = s.sample_uniform(np.random.default_rng(1), 1)[0]
        assert hamming_distance(s, x, x) == 0

    def test_single_flip(self):
        s = InputSpace([VariableSpec.binary()] * 3)
        assert hamming_distance(s, [-1, 1, -1], [1, 1, -1]) == 1

    def test_all_categories_differ(self):
        s = InputSpace([VariableSpec.categorical(4)] * 3)
        assert hamming_distance(s, [1, 2, 3], [2, 3, 4]) == 3

    def test_continuous_ignored(self):
        s = mixed_space()
        a = np.array([0.1, 1, 1, 2, 2])
        b = np.array([0.9, 1, 1, 2, 2])
        assert hamming_distance(s, a, b) == 0

    def test_mismatched_shapes(self):
        with pytest.raises(SpaceError):
            hamming_distance(mixed_space(), np.zeros(5), np.zeros(4))

    def test_metric_axioms(self):
        s = mixed_space()
        rng = np.random.default_rng(2)
        X = s.sample_uniform(rng, 3000).reshape(1000, 3, 5)
        for a, b, c in X:
            ab, ba = hamming_distance(s, a, b), hamming_distance(s, b, a)
            assert ab == ba
            assert (ab == 0) == np.array_equal(a[1:], b[1:])
            assert hamming_distance(s, a, c) <= ab + hamming_distance(s, b, c)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_uniform_samples_are_valid(seed, n):
    s = mixed_space()
    X = s.sample_uniform(np.random.default_rng(seed), n)
    assert X.shape == (n, 5)
    assert all(s.is_valid(x) for x in X)


class TestParseSpace:
    def test_grammar(self):
        text = """
        # a comment
        continuous -5 10
        3 * binary   # repeated
        categorical 5
        ordinal 4
        """
        s = parse_space(text)
        assert s.dim == 6
        assert [v.kind for v in s.variables] == [Kind.CONTINUOUS] + [Kind.BINARY] * 3 + [Kind.CATEGORICAL, Kind.ORDINAL]
        assert parse_space(format_space(s)) == s

    @pytest.mark.parametrize(
        "text, lineno",
        [("binary\nfoo 3", 2), ("continuous 1", 1), ("binary\n\ncategorical x", 3), ("0 * binary", 1),
         ("continuous 3 1", 1)],
    )
    def test_errors_carry_line_numbers(self, text, lineno):
        with pytest.raises(SpaceError, match=f"line {lineno}"):
            parse_space(text)
