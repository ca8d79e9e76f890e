import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fredholm_albrekht.polytensor import (
    GradedPoly,
    MultiIndex,
    SymTensor,
    canonical_rank,
    contract,
    eval_tensor,
    format_coeff_text,
    gradient,
    multi_indices,
    num_coeffs,
    parse_coeff_text,
    symmetrize,
)


def random_tensor(rng, n, k):
    return SymTensor(n, k, rng.normal(size=num_coeffs(n, k)))


def brute_eval(t, x):
    """Sum over every ordered index tuple, straight from the definition."""
    return sum(
        t[idx] * np.prod([x[i] for i in idx])
        for idx in itertools.product(range(t.dim), repeat=t.degree)
    )


class TestCanonicalRank:
    def test_colex_examples(self):
        assert canonical_rank((0, 0), 3) == 0
        assert canonical_rank((0, 1), 3) == 1
        assert canonical_rank((1, 1), 3) == 2

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_single_variable(self, k):
        assert canonical_rank((0,) * k, 1) == 0

    def test_count_stars_and_bars(self):
        assert num_coeffs(3, 2) == 6 == len(multi_indices(3, 2))

    @pytest.mark.parametrize("n,k", [(n, k) for n in range(1, 5) for k in range(1, 6)])
    def test_rank_is_bijective(self, n, k):
        tuples = set(itertools.combinations_with_replacement(range(n), k))
        assert len(tuples) == num_coeffs(n, k)
        ranks = sorted(canonical_rank(t, n) for t in tuples)
        assert ranks == list(range(len(tuples)))
        for r, t in enumerate(multi_indices(n, k)):
            assert canonical_rank(t, n) == r

    def test_unsorted_input(self):
        assert canonical_rank((2, 0, 1), 3) == canonical_rank((0, 1, 2), 3)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            canonical_rank((0, 3), 3)

    def test_multiindex_equality(self):
        assert MultiIndex((2, 0, 1)) == MultiIndex((0, 1, 2)) == (0, 1, 2)
        assert MultiIndex((1, 1)).degree == 2


class TestSymmetrize:
    def test_average(self):
        assert symmetrize({(0, 1): 2.0, (1, 0): 4.0})[(0, 1)] == 3.0

    def test_already_symmetric(self):
        assert symmetrize({(1, 1): 5.0})[(1, 1)] == 5.0

    def test_ordered_cubic_solves(self):
        # ordered solves of 0 = (mu_i+mu_j+mu_k) Pi + 1/2(Pi_{i,j+k} + Pi_{i,|j-k|})
        mu1 = -math.sqrt(math.pi**4 + 1)
        s = -1.0 + 2 * mu1
        pi11 = -(math.pi**2) + math.sqrt(math.pi**4 + 1)
        raw = {(0, 1, 1): -0.5 / s, (1, 0, 1): -pi11 / s, (1, 1, 0): -pi11 / s}
        assert raw[(0, 1, 1)] == pytest.approx(0.023992, abs=1e-6)
        assert raw[(1, 0, 1)] == pytest.approx(0.0024246, abs=1e-7)
        assert symmetrize(raw)[(0, 1, 1)] == pytest.approx(0.0096137, abs=1e-7)

    def test_missing_orderings_are_skipped(self):
        t = symmetrize({(0, 1): 2.0}, n=2)
        assert t[(0, 1)] == 2.0

    def test_strict_mode(self):
        with pytest.raises(ValueError, match="orderings"):
            symmetrize({(0, 1): 2.0}, strict=True)
        assert symmetrize({(0, 1): 2.0, (1, 0): 2.0}, strict=True)[(1, 0)] == 2.0

    def test_inconsistent_lengths(self):
        with pytest.raises(ValueError, match="lengths"):
            symmetrize({(0, 1): 1.0, (0, 1, 1): 1.0})

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 4))
    @settings(max_examples=30, deadline=None)
    def test_idempotent(self, seed, n, k):
        rng = np.random.default_rng(seed)
        raw = {t: rng.normal() for t in itertools.product(range(n), repeat=k)}
        once = symmetrize(raw, n=n)
        twice = symmetrize(dict(once.items()), n=n)
        assert np.array_equal(once.coeffs, twice.coeffs)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 4))
    @settings(max_examples=30, deadline=None)
    def test_eval_invariant_under_index_permutation(self, seed, n, k):
        rng = np.random.default_rng(seed)
        raw = {t: rng.normal() for t in itertools.product(range(n), repeat=k)}
        perm = tuple(rng.permutation(k))
        permuted = {tuple(t[p] for p in perm): v for t, v in raw.items()}
        x = rng.normal(size=n)
        a = eval_tensor(symmetrize(raw, n=n), x)
        b = eval_tensor(symmetrize(permuted, n=n), x)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestEval:
    def test_scalar_square(self):
        assert eval_tensor(SymTensor(1, 2, [1.0]), [2.0]) == 4.0

    def test_multiplicity_three(self):
        c = 0.7
        t = SymTensor.from_dict(2, 3, {(0, 1, 1): c})
        x = np.array([1.3, -0.4])
        assert eval_tensor(t, x) == pytest.approx(3 * c * x[0] * x[1] ** 2)

    def test_identity_norm(self):
        t = SymTensor.from_full(np.eye(2))
        assert eval_tensor(t, [3.0, 4.0]) == pytest.approx(25.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            eval_tensor(SymTensor.zeros(2, 2), [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("n,k", [(1, 3), (2, 4), (3, 3), (4, 2)])
    def test_matches_ordered_sum(self, n, k):
        rng = np.random.default_rng(n * 10 + k)
        t = random_tensor(rng, n, k)
        x = rng.normal(size=n)
        assert eval_tensor(t, x) == pytest.approx(brute_eval(t, x), rel=1e-12)

    def test_monomial_coefficients(self):
        t = SymTensor.from_dict(3, 4, {(0, 0, 1, 2): 1.0})
        mono = dict(zip(multi_indices(3, 4), t.monomial_coeffs()))
        assert mono[(0, 0, 1, 2)] == 12.0


class TestGradient:
    def test_quadratic(self):
        p = GradedPoly(2, {2: SymTensor.from_full(0.5 * np.eye(2))})
        assert np.allclose(gradient(p, [1.0, 2.0]), [1.0, 2.0])

    def test_cubic(self):
        p = GradedPoly(1, {3: SymTensor(1, 3, [1 / 3])})
        assert gradient(p, [2.0])[0] == pytest.approx(4.0)

    def test_random_degree4(self):
        rng = np.random.default_rng(4)
        p = GradedPoly(3, {4: random_tensor(rng, 3, 4)})
        x = rng.normal(size=3)
        h = 1e-5
        fd = [(p(x + h * e) - p(x - h * e)) / (2 * h) for e in np.eye(3)]
        assert np.allclose(gradient(p, x), fd, rtol=1e-6)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_finite_differences(self, seed, n, top):
        rng = np.random.default_rng(seed)
        p = GradedPoly(n, {k: random_tensor(rng, n, k) for k in range(1, top + 1)})
        x = rng.normal(size=n)
        x *= rng.uniform(0.1, 1.0) / np.linalg.norm(x)
        h = 1e-5
        fd = np.array([(p(x + h * e) - p(x - h * e)) / (2 * h) for e in np.eye(n)])
        g = gradient(p, x)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gradient(GradedPoly(2, {}), [1.0])


class TestContract:
    def test_identity_row(self):
        t = SymTensor.from_full(np.eye(3))
        row = contract(t, [np.array([1.0, 0.0, 0.0])])
        assert np.array_equal(row.coeffs, [1.0, 0.0, 0.0])

    def test_full_contraction_is_eval(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n, k = int(rng.integers(1, 4)), int(rng.integers(1, 5))
            t = random_tensor(rng, n, k)
            x = rng.normal(size=n)
            assert contract(t, [x] * k) == pytest.approx(eval_tensor(t, x), rel=1e-12, abs=1e-12)

    def test_zero_vector(self):
        rng = np.random.default_rng(0)
        t = random_tensor(rng, 3, 3)
        assert not contract(t, [np.zeros(3)]).coeffs.any()

    def test_too_many_slots(self):
        with pytest.raises(ValueError):
            contract(SymTensor.zeros(2, 1), [np.ones(2)] * 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            contract(SymTensor.zeros(2, 2), [np.ones(3)])


def test_text_roundtrip():
    t = SymTensor.from_dict(2, 3, {(0, 1, 1): 9.6137e-3, (0, 0, 0): 1 / 3})
    text = format_coeff_text(t, variant="paper-printed")
    assert text.splitlines()[0] == "# degree=3 dim=2 convention=symmetric-sum variant=paper-printed"
    assert "0,1,1,9.613700000e-03" in text
    back, header = parse_coeff_text(text)
    assert header["variant"] == "paper-printed"
    assert np.allclose(back.coeffs, t.coeffs, rtol=1e-9)


def test_graded_poly_validation():
    with pytest.raises(ValueError):
        GradedPoly(2, {0: SymTensor.zeros(2, 0)})
    with pytest.raises(ValueError):
        GradedPoly(2, {2: SymTensor.zeros(3, 2)})
