"""Tensor product functions over a finite basis and their coefficient tensors.

A TPF f = Σ_i ⊗_j ψ_ij with ψ_ij = Σ_k c_ijk φ_k is carried either by the
coefficient CP decomposition (factor j holds the columns c_ij·) or by the
dense coefficient tensor X(k_1..k_N). Slater TPFs are unnormalized, so the
coefficient tensor of the unit-orbital Slater TPF is exactly E_(1..N).
"""
import math
from dataclasses import dataclass
from string import ascii_lowercase
from typing import NamedTuple, Optional, Sequence

import numpy as np

from bases.base import BaseFunctionBasis
from services.tensor_core import (
    CpDecomposition,
    DenseTensor,
    antisymmetrize,
    antisymmetrize_cp,
    dense_from_cp,
)
from utils.errors import (
    DimensionMismatchError,
    MissingRepresentationError,
    SampleCountError,
    TrivialSpaceError,
)
from utils.permutations import all_permutations

REPRESENTATION_TOL = 1e-12
INDEPENDENCE_TOL = 1e-8


@dataclass(frozen=True)
class TpfFunction:
    order: int
    basis: BaseFunctionBasis
    cp: Optional[CpDecomposition] = None
    dense: Optional[DenseTensor] = None

    def __post_init__(self):
        if self.cp is None and self.dense is None:
            raise MissingRepresentationError("a TPF needs a CP or a dense coefficient representation")
        expected = (self.basis.size,) * self.order
        for label, rep in (("cp", self.cp), ("dense", self.dense)):
            if rep is not None and rep.dims != expected:
                raise DimensionMismatchError(
                    f"{label} representation dims {rep.dims} do not match basis size {self.basis.size} "
                    f"at order {self.order}", dims=rep.dims, expected=expected)
        if self.cp is not None and self.dense is not None:
            gap = dense_from_cp(self.cp).max_abs_diff(self.dense)
            if gap > REPRESENTATION_TOL * max(1.0, self.dense.max_abs()):
                raise DimensionMismatchError(
                    f"CP and dense representations disagree by {gap:.3e}", gap=gap)

    @property
    def rank(self) -> Optional[int]:
        return self.cp.rank if self.cp is not None else None


def tpf_to_tensor(f: TpfFunction) -> DenseTensor:
    if f.cp is None:
        raise MissingRepresentationError("tpf_to_tensor needs the CP coefficient representation")
    return dense_from_cp(f.cp)


def tensor_to_tpf(cp: CpDecomposition, basis: BaseFunctionBasis) -> TpfFunction:
    if any(d != basis.size for d in cp.dims):
        raise DimensionMismatchError(
            f"CP mode dims {cp.dims} do not match basis size {basis.size}", dims=cp.dims, size=basis.size)
    return TpfFunction(order=cp.order, basis=basis, cp=cp)


def evaluate_tpf(f: TpfFunction, points) -> np.ndarray:
    """Values at an array of N-tuples, shape (n_points, N)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != f.order:
        raise DimensionMismatchError(
            f"points have {points.shape[1]} coordinates, TPF order is {f.order}",
            coordinates=points.shape[1], order=f.order)
    # (N, K, n_points)
    phi = np.stack([f.basis.evaluate_all(points[:, j]) for j in range(f.order)])
    if f.cp is not None:
        values = np.ones((f.cp.rank, points.shape[0]), dtype=np.complex128)
        for j, factor in enumerate(f.cp.factors):
            values *= factor.T @ phi[j]
        return values.sum(axis=0)
    letters = ascii_lowercase[:f.order]
    operands = ",".join(f"{c}z" for c in letters)
    return np.einsum(f"{letters},{operands}->z", f.dense.entries, *phi, optimize=True)


def antisymmetrize_tpf(f: TpfFunction) -> TpfFunction:
    if f.cp is not None:
        return TpfFunction(order=f.order, basis=f.basis, cp=antisymmetrize_cp(f.cp))
    return TpfFunction(order=f.order, basis=f.basis, dense=antisymmetrize(f.dense))


def slater_tpf(orbital_coeffs: Sequence[np.ndarray], basis: BaseFunctionBasis) -> TpfFunction:
    """Unnormalized determinant of N orbitals given by basis coefficients.

    Term π carries sgn(π) on its first factor and orbital π(j) in mode j.
    """
    orbitals = [np.asarray(c, dtype=np.complex128) for c in orbital_coeffs]
    N, K = len(orbitals), basis.size
    if N < 1:
        raise DimensionMismatchError("slater_tpf needs at least one orbital")
    if any(o.shape != (K,) for o in orbitals):
        raise DimensionMismatchError(
            f"orbital coefficient vectors must have length K={K}", shapes=[o.shape for o in orbitals])
    if K < N:
        raise TrivialSpaceError(N, K)
    terms = []
    for perm in all_permutations(N):
        vectors = [orbitals[perm.mapping[j]] for j in range(N)]
        vectors[0] = perm.sign * vectors[0]
        terms.append(vectors)
    return TpfFunction(order=N, basis=basis, cp=CpDecomposition.from_terms(terms, (K,) * N))


class IndependenceCheck(NamedTuple):
    min_singular_value: float
    independent: bool
    max_singular_value: float


def gram_independence_check(basis: BaseFunctionBasis, N: int, sample_points) -> IndependenceCheck:
    """Linear independence of the K^N product functions ⊗_j φ_{k_j} on samples."""
    samples = np.atleast_2d(np.asarray(sample_points, dtype=float))
    K = basis.size
    needed = K ** N
    if samples.shape[1] != N:
        raise DimensionMismatchError(
            f"sample tuples have {samples.shape[1]} coordinates, expected {N}", expected=N)
    if samples.shape[0] < needed:
        raise SampleCountError(
            f"need at least K^N = {needed} sample tuples, got {samples.shape[0]}",
            needed=needed, given=samples.shape[0])
    rows = np.ones((samples.shape[0], 1), dtype=np.complex128)
    for j in range(N):
        phi = basis.evaluate_all(samples[:, j]).T
        rows = (rows[:, :, None] * phi[:, None, :]).reshape(samples.shape[0], -1)
    singular = np.linalg.svd(rows, compute_uv=False)
    smax, smin = float(singular[0]), float(singular[-1])
    return IndependenceCheck(smin, smax > 0 and smin > INDEPENDENCE_TOL * smax, smax)


def sample_tuples(basis: BaseFunctionBasis, N: int, count: int = 100, seed: int = 0) -> np.ndarray:
    """Fixed-seed uniform draws over the domain box, shape (count, N)."""
    rng = np.random.default_rng(seed)
    return basis.sample(count * N, rng).reshape(count, N)


def permuted_evaluation(f: TpfFunction, points) -> np.ndarray:
    """(1/N!) Σ_π sgn(π) f(r_π(1), ..., r_π(N)) evaluated directly."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(points.shape[0], dtype=np.complex128)
    for perm in all_permutations(f.order):
        total += perm.sign * evaluate_tpf(f, points[:, list(perm.mapping)])
    return total / math.factorial(f.order)
