import math

import numpy as np
import pytest

from bases.base import get_function_basis
from services.tensor_core import dense_from_cp, determinant_tensor, random_cp
from services.tpf_bridge import (
    TpfFunction,
    antisymmetrize_tpf,
    evaluate_tpf,
    gram_independence_check,
    permuted_evaluation,
    sample_tuples,
    slater_tpf,
    tensor_to_tpf,
    tpf_to_tensor,
)
from utils.errors import (
    DimensionMismatchError,
    MissingRepresentationError,
    SampleCountError,
    TrivialSpaceError,
)


@pytest.fixture
def legendre4():
    return get_function_basis("legendre", 4, (-1.0, 1.0))


def test_random_tpf_roundtrip(legendre4):
    rng = np.random.default_rng(0)
    points = sample_tuples(legendre4, 3, count=100, seed=1)
    for _ in range(20):
        cp = random_cp((4, 4, 4), int(rng.integers(1, 4)), rng)
        f = tensor_to_tpf(cp, legendre4)
        X = tpf_to_tensor(f)
        assert X.max_abs_diff(dense_from_cp(cp)) <= 1e-12

        via_cp = evaluate_tpf(f, points)
        via_dense = evaluate_tpf(TpfFunction(order=3, basis=legendre4, dense=X), points)
        rel = np.max(np.abs(via_cp - via_dense)) / np.max(np.abs(via_dense))
        assert rel <= 1e-10


def test_evaluate_matches_explicit_sum(legendre4):
    cp = random_cp((4, 4), 2, np.random.default_rng(3))
    f = tensor_to_tpf(cp, legendre4)
    x = np.array([[0.3, -0.7]])
    phi0, phi1 = legendre4.evaluate_all(x[:, 0])[:, 0], legendre4.evaluate_all(x[:, 1])[:, 0]
    expected = sum((cp.factors[0][:, i] @ phi0) * (cp.factors[1][:, i] @ phi1) for i in range(2))
    assert evaluate_tpf(f, x)[0] == pytest.approx(expected, rel=1e-12)


def test_antisymmetrized_tpf_matches_permuted_evaluation(legendre4):
    f = tensor_to_tpf(random_cp((4, 4, 4), 2, np.random.default_rng(5)), legendre4)
    points = sample_tuples(legendre4, 3, count=30, seed=2)
    anti = antisymmetrize_tpf(f)
    np.testing.assert_allclose(evaluate_tpf(anti, points), permuted_evaluation(f, points), atol=1e-12)
    dense_anti = antisymmetrize_tpf(TpfFunction(order=3, basis=legendre4, dense=tpf_to_tensor(f)))
    np.testing.assert_allclose(evaluate_tpf(dense_anti, points), permuted_evaluation(f, points), atol=1e-12)


def test_unit_orbital_slater_is_determinant_tensor():
    basis = get_function_basis("monomial", 3)
    f = slater_tpf(list(np.eye(3)), basis)
    assert f.rank == math.factorial(3)
    assert tpf_to_tensor(f).max_abs_diff(determinant_tensor(3)) <= 1e-12


def test_slater_sign_flip_and_repeated_orbitals(legendre4):
    rng = np.random.default_rng(9)
    orbitals = [rng.standard_normal(4) for _ in range(3)]
    f = slater_tpf(orbitals, legendre4)
    points = sample_tuples(legendre4, 3, count=50, seed=4)
    values = evaluate_tpf(f, points)
    scale = max(1.0, float(np.max(np.abs(values))))
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        swapped = points.copy()
        swapped[:, [i, j]] = swapped[:, [j, i]]
        assert np.max(np.abs(evaluate_tpf(f, swapped) + values)) <= 1e-12 * scale

    repeated = slater_tpf([orbitals[0], orbitals[1], orbitals[0]], legendre4)
    assert np.max(np.abs(evaluate_tpf(repeated, points))) <= 1e-12 * scale


def test_slater_needs_enough_basis_functions():
    orbitals = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])]
    with pytest.raises(TrivialSpaceError):
        slater_tpf(orbitals, get_function_basis("monomial", 2))


def test_tpf_needs_a_representation(legendre4):
    with pytest.raises(MissingRepresentationError):
        TpfFunction(order=2, basis=legendre4)


def test_tpf_rejects_wrong_dims(legendre4):
    with pytest.raises(DimensionMismatchError):
        tensor_to_tpf(random_cp((3, 3), 1, np.random.default_rng(0)), legendre4)


def test_evaluate_rejects_wrong_arity(legendre4):
    f = tensor_to_tpf(random_cp((4, 4), 1, np.random.default_rng(0)), legendre4)
    with pytest.raises(DimensionMismatchError):
        evaluate_tpf(f, np.zeros((2, 3)))


class TestIndependence:
    def test_legendre_products_are_independent(self):
        basis = get_function_basis("legendre", 3)
        check = gram_independence_check(basis, 2, sample_tuples(basis, 2, count=100, seed=0))
        assert check.independent
        assert check.min_singular_value > 0

    def test_duplicate_functions_are_dependent(self):
        basis = get_function_basis("callable", 2, functions=[np.cos, np.cos])
        check = gram_independence_check(basis, 2, sample_tuples(basis, 2, count=50, seed=0))
        assert not check.independent

    def test_too_few_samples(self):
        basis = get_function_basis("legendre", 3)
        with pytest.raises(SampleCountError):
            gram_independence_check(basis, 2, sample_tuples(basis, 2, count=8, seed=0))


class TestBases:
    def test_monomials(self):
        basis = get_function_basis("monomial", 3)
        np.testing.assert_allclose(basis.evaluate(3, [2.0, -1.0]), [4.0, 1.0])

    def test_legendre_on_mapped_domain(self):
        basis = get_function_basis("legendre", 3, (0.0, 2.0))
        # P_2(t) = (3t^2 - 1)/2 with t = x - 1
        np.testing.assert_allclose(basis.evaluate(3, [2.0, 1.0]).real, [1.0, -0.5])

    def test_indicator_cells_are_orthonormal(self):
        basis = get_function_basis("indicator", 4, (0.0, 2.0))
        x = np.linspace(0.0, 2.0, 401)
        values = basis.evaluate_all(x).real
        # unit L2 norm on cells of width 0.5
        assert values.max() ** 2 * 0.5 == pytest.approx(1.0)
        assert np.all(values[0] * values[1] == 0)
        assert np.all((values > 0).sum(axis=0) == 1)
        assert basis.evaluate(4, [2.0])[0] != 0

    def test_unknown_kind(self):
        from utils.errors import ConfigError
        with pytest.raises(ConfigError):
            get_function_basis("wavelet", 3)
