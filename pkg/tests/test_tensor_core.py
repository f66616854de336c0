import math

import numpy as np
import pytest

from services.tensor_core import (
    CpDecomposition,
    DenseTensor,
    MultiIndex,
    antisym_expand,
    antisym_reconstruct,
    antisymmetrize,
    antisymmetrize_cp,
    antisymmetry_violation,
    basis_tensor,
    dense_from_cp,
    determinant_tensor,
    embed_cp,
    is_antisymmetric,
    multi_indices,
    random_cp,
    random_tensor,
    restrict_cp,
    support_restrict,
)
from utils.errors import AntisymmetryError, DimensionMismatchError, InvalidMultiIndexError, NumericError

TOL = 1e-12


def test_determinant_tensor_entries():
    E = determinant_tensor(3)
    assert E.entry(1, 2, 3) == 1
    assert E.entry(2, 1, 3) == -1
    assert E.entry(3, 1, 2) == 1
    assert E.entry(1, 1, 2) == 0
    assert np.count_nonzero(E.entries) == 6


def test_basis_tensor_support():
    k = MultiIndex((1, 3, 5))
    E = basis_tensor(k, 6)
    assert E.dims == (6, 6, 6)
    assert E.entry(1, 3, 5) == 1
    assert E.entry(5, 3, 1) == -1
    assert E.entry(1, 2, 3) == 0
    assert np.count_nonzero(E.entries) == 6
    assert support_restrict(E, k).max_abs_diff(E) == 0


@pytest.mark.parametrize("entries", [(), (0, 1), (2, 2), (3, 1)])
def test_invalid_multi_index(entries):
    with pytest.raises(InvalidMultiIndexError):
        MultiIndex(entries)


def test_multi_index_outside_dimension():
    with pytest.raises(InvalidMultiIndexError):
        basis_tensor(MultiIndex((1, 4)), 3)


def test_multi_indices_lexicographic():
    assert [k.entries for k in multi_indices(2, 3)] == [(1, 2), (1, 3), (2, 3)]
    assert len(multi_indices(3, 6)) == math.comb(6, 3)


def test_dense_from_cp_matches_outer_products(rng):
    cp = random_cp((2, 3, 4), 3, rng)
    expected = sum(np.einsum("a,b,c->abc", *cp.term(i)) for i in range(cp.rank))
    np.testing.assert_allclose(dense_from_cp(cp).entries, expected, atol=TOL)


def test_zero_rank_cp_is_zero_tensor():
    assert dense_from_cp(CpDecomposition.zero((2, 2))).max_abs() == 0


def test_cp_rejects_mismatched_ranks():
    with pytest.raises(DimensionMismatchError):
        CpDecomposition((np.ones((2, 2)), np.ones((2, 3))))


def test_dense_rejects_non_finite():
    with pytest.raises(NumericError):
        DenseTensor(np.array([1.0, np.nan]))


class TestAntisymmetrizer:
    SEEDS = range(100)

    def test_idempotent(self):
        for seed in self.SEEDS:
            X = random_tensor((4, 4, 4), np.random.default_rng(seed))
            once = antisymmetrize(X)
            assert antisymmetrize(once).max_abs_diff(once) <= TOL

    def test_linear(self):
        for seed in self.SEEDS:
            rng = np.random.default_rng(seed)
            X, Y = random_tensor((3, 3, 3), rng), random_tensor((3, 3, 3), rng)
            a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
            lhs = antisymmetrize(X.scaled(a) + Y.scaled(b))
            rhs = antisymmetrize(X).scaled(a) + antisymmetrize(Y).scaled(b)
            assert lhs.max_abs_diff(rhs) <= TOL * max(1.0, lhs.max_abs())

    def test_sign_flip_under_axis_swap(self):
        for seed in self.SEEDS:
            A = antisymmetrize(random_tensor((4, 4, 4), np.random.default_rng(seed)))
            for axes in [(0, 1), (0, 2), (1, 2)]:
                np.testing.assert_allclose(np.swapaxes(A.entries, *axes), -A.entries, atol=TOL)

    def test_vanishing_diagonal(self):
        for seed in self.SEEDS:
            A = antisymmetrize(random_tensor((4, 4, 4), np.random.default_rng(seed)))
            for k in range(4):
                assert abs(A.entries[k, k, :]).max() <= TOL
                assert abs(A.entries[:, k, k]).max() <= TOL

    @pytest.mark.parametrize("N,K", [(2, 4), (3, 5)])
    def test_image_dimension(self, N, K):
        columns = []
        for flat in range(K ** N):
            unit = np.zeros(K ** N)
            unit[flat] = 1.0
            columns.append(antisymmetrize(DenseTensor(unit.reshape((K,) * N))).entries.ravel())
        assert np.linalg.matrix_rank(np.array(columns).T, tol=1e-10) == math.comb(K, N)

    def test_trivial_space_gives_zero(self, rng):
        assert antisymmetrize(random_tensor((2, 2, 2), rng)).max_abs() <= TOL

    def test_cp_form_matches_dense(self, rng):
        cp = random_cp((3, 3, 3), 2, rng)
        via_cp = dense_from_cp(antisymmetrize_cp(cp))
        assert via_cp.max_abs_diff(antisymmetrize(dense_from_cp(cp))) <= TOL
        assert antisymmetrize_cp(cp).rank == 6 * 2


def test_expand_reconstruct_roundtrip(rng):
    A = antisymmetrize(random_tensor((4, 4, 4), rng))
    coefficients = antisym_expand(A)
    assert len(coefficients) == math.comb(4, 3)
    assert antisym_reconstruct(coefficients, 3, 4).max_abs_diff(A) <= TOL


def test_expand_of_basis_tensor_is_unit():
    coefficients = antisym_expand(basis_tensor(MultiIndex((2, 4)), 4))
    assert coefficients[MultiIndex((2, 4))] == 1
    assert sum(abs(c) for c in coefficients.values()) == 1


def test_expand_rejects_non_antisymmetric(rng):
    X = random_tensor((3, 3), rng)
    worst, index, swapped = antisymmetry_violation(X)
    assert worst > 0
    assert swapped == (index[1], index[0])
    with pytest.raises(AntisymmetryError) as excinfo:
        antisym_expand(X)
    assert excinfo.value.index == index
    assert not is_antisymmetric(X)


def test_embed_and_restrict_cp(rng):
    k = MultiIndex((1, 3, 5))
    cp = random_cp((3, 3, 3), 2, rng)
    embedded = embed_cp(cp, k, 6)
    assert embedded.dims == (6, 6, 6)
    dense = dense_from_cp(embedded)
    assert support_restrict(dense, k).max_abs_diff(dense) <= TOL
    assert dense_from_cp(restrict_cp(embedded, k)).max_abs_diff(dense_from_cp(cp)) <= TOL


def test_embedded_two_by_two_determinant_is_basis_tensor():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    determinant = CpDecomposition.from_terms([[e1, e2], [-e2, e1]], (2, 2))
    embedded = dense_from_cp(embed_cp(determinant, MultiIndex((1, 3)), 4))
    assert embedded.max_abs_diff(basis_tensor(MultiIndex((1, 3)), 4)) <= TOL


def test_support_restrict_isolates_one_expansion_term(rng):
    A = antisymmetrize(random_tensor((5, 5, 5), rng))
    coefficients = antisym_expand(A)
    for k in multi_indices(3, 5):
        expected = basis_tensor(k, 5).scaled(coefficients[k])
        assert support_restrict(A, k).max_abs_diff(expected) <= TOL


class TestToleranceScale:
    def test_tiny_random_tensor_is_not_antisymmetric(self, rng):
        X = random_tensor((3, 3), rng).scaled(1e-11)
        assert not is_antisymmetric(X)
        with pytest.raises(AntisymmetryError):
            antisym_expand(X)

    def test_tiny_antisymmetric_tensor_still_expands(self):
        X = basis_tensor(MultiIndex((1, 2)), 3).scaled(1e-12)
        assert is_antisymmetric(X)
        assert antisym_expand(X)[MultiIndex((1, 2))] == pytest.approx(1e-12)

    def test_zero_tensor_is_antisymmetric(self):
        X = DenseTensor.zeros((3, 3, 3))
        assert is_antisymmetric(X)
        assert all(c == 0 for c in antisym_expand(X).values())
