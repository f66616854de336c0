"""Dense antisymmetric tensor algebra and CP-format plumbing.

Index conventions: every public function takes and returns 1-based
multi-indices; numpy storage is 0-based row-major.
"""
import itertools
import math
from dataclasses import dataclass
from string import ascii_lowercase
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from utils.errors import (
    AntisymmetryError,
    DimensionMismatchError,
    InvalidMultiIndexError,
    NumericError,
    OrderLimitError,
)
from utils.permutations import MAX_ORDER, all_permutations

MAX_ENTRIES = 10**7
ANTISYMMETRY_TOL = 1e-10


def _check_size(dims: Sequence[int]):
    if len(dims) > MAX_ORDER:
        raise OrderLimitError(f"tensor order {len(dims)} exceeds {MAX_ORDER}", order=len(dims))
    if math.prod(dims) > MAX_ENTRIES:
        raise OrderLimitError(
            f"tensor with dims {tuple(dims)} exceeds {MAX_ENTRIES} entries", dims=tuple(dims))


@dataclass(frozen=True)
class DenseTensor:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim < 1 or any(d < 1 for d in entries.shape):
            raise DimensionMismatchError(f"invalid tensor shape {entries.shape}", shape=entries.shape)
        _check_size(entries.shape)
        if not np.all(np.isfinite(entries)):
            raise NumericError("tensor contains NaN or Inf entries", "non_finite_tensor")
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "DenseTensor":
        _check_size(dims)
        return cls(np.zeros(tuple(dims), dtype=np.complex128))

    @property
    def order(self) -> int:
        return self.entries.ndim

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(self.entries.shape)

    def entry(self, *index: int) -> complex:
        return complex(self.entries[tuple(k - 1 for k in index)])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries)))

    def max_abs_diff(self, other: "DenseTensor") -> float:
        if self.dims != other.dims:
            raise DimensionMismatchError(f"dims {self.dims} vs {other.dims}", left=self.dims, right=other.dims)
        return float(np.max(np.abs(self.entries - other.entries)))

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries.ravel()))

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        return DenseTensor(self.entries + other.entries)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        return DenseTensor(self.entries - other.entries)

    def scaled(self, factor: complex) -> "DenseTensor":
        return DenseTensor(factor * self.entries)

    def _require_cubical(self) -> int:
        if len(set(self.dims)) != 1:
            raise DimensionMismatchError(
                f"operation needs equal mode dims, got {self.dims}", dims=self.dims)
        return self.dims[0]


@dataclass(frozen=True)
class CpDecomposition:
    """Sum of rank-one terms stored as N factor matrices of shape (K_j, p).

    Column i of factor j is the vector x_{ij}.
    """
    factors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(np.asarray(f, dtype=np.complex128) for f in self.factors)
        if not factors:
            raise DimensionMismatchError("a CP decomposition needs at least one mode")
        if any(f.ndim != 2 for f in factors):
            raise DimensionMismatchError(
                "factor matrices must be 2-D (dim, rank)", shapes=[f.shape for f in factors])
        ranks = {f.shape[1] for f in factors}
        if len(ranks) != 1:
            raise DimensionMismatchError(
                f"factor matrices disagree on rank: {sorted(ranks)}", shapes=[f.shape for f in factors])
        if any(f.shape[0] < 1 for f in factors):
            raise DimensionMismatchError("mode dims must be positive", shapes=[f.shape for f in factors])
        if len(factors) > MAX_ORDER:
            raise OrderLimitError(f"CP order {len(factors)} exceeds {MAX_ORDER}", order=len(factors))
        for f in factors:
            f.setflags(write=False)
        object.__setattr__(self, "factors", factors)

    @classmethod
    def from_terms(cls, terms: Sequence[Sequence[np.ndarray]], dims: Sequence[int]) -> "CpDecomposition":
        """Build from p tuples of N vectors; an empty list gives the zero tensor."""
        dims = tuple(dims)
        for i, term in enumerate(terms):
            if len(term) != len(dims):
                raise DimensionMismatchError(
                    f"term {i} has {len(term)} vectors, expected {len(dims)}", term=i)
            for j, vec in enumerate(term):
                if np.shape(vec) != (dims[j],):
                    raise DimensionMismatchError(
                        f"term {i} mode {j + 1}: vector length {np.shape(vec)} != {dims[j]}",
                        term=i, mode=j + 1)
        factors = tuple(
            np.array([term[j] for term in terms], dtype=np.complex128).reshape(len(terms), dims[j]).T
            for j in range(len(dims))
        )
        return cls(factors)

    @classmethod
    def zero(cls, dims: Sequence[int]) -> "CpDecomposition":
        return cls(tuple(np.zeros((d, 0), dtype=np.complex128) for d in dims))

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    def term(self, i: int) -> Tuple[np.ndarray, ...]:
        return tuple(f[:, i] for f in self.factors)

    def terms(self) -> Iterator[Tuple[np.ndarray, ...]]:
        for i in range(self.rank):
            yield self.term(i)

    def concat(self, other: "CpDecomposition") -> "CpDecomposition":
        if self.dims != other.dims:
            raise DimensionMismatchError(f"dims {self.dims} vs {other.dims}", left=self.dims, right=other.dims)
        return CpDecomposition(tuple(np.hstack([a, b]) for a, b in zip(self.factors, other.factors)))


@dataclass(frozen=True)
class MultiIndex:
    """Strictly increasing 1-based index tuple k_1 < ... < k_N."""
    entries: Tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(k) for k in self.entries)
        if not entries:
            raise InvalidMultiIndexError("multi-index must be non-empty")
        if entries[0] < 1:
            raise InvalidMultiIndexError(f"multi-index {entries} has entries below 1", entries=entries)
        if any(a >= b for a, b in zip(entries, entries[1:])):
            raise InvalidMultiIndexError(f"multi-index {entries} is not strictly increasing", entries=entries)
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return len(self.entries)

    def validate(self, K: int) -> "MultiIndex":
        if self.entries[-1] > K:
            raise InvalidMultiIndexError(
                f"multi-index {self.entries} exceeds dimension K={K}", entries=self.entries, K=K)
        return self

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.intp) - 1

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def multi_indices(N: int, K: int) -> List[MultiIndex]:
    """The set Λ of strictly increasing N-tuples from {1..K}, lexicographic."""
    return [MultiIndex(c) for c in itertools.combinations(range(1, K + 1), N)]


def _einsum_spec(order: int) -> Tuple[str, str]:
    letters = ascii_lowercase[:order]
    return letters, ",".join(f"{c}z" for c in letters)


def dense_from_cp(cp: CpDecomposition) -> DenseTensor:
    if cp.rank == 0:
        return DenseTensor.zeros(cp.dims)
    _check_size(cp.dims)
    out, operands = _einsum_spec(cp.order)
    return DenseTensor(np.einsum(f"{operands}->{out}", *cp.factors))


def antisymmetrize(X: DenseTensor) -> DenseTensor:
    """Signed average over all axis permutations.

    For K < N every index tuple repeats a coordinate, so the sum is exactly zero.
    """
    X._require_cubical()
    N = X.order
    out = np.zeros(X.dims, dtype=np.complex128)
    for perm in all_permutations(N):
        out += perm.sign * np.transpose(X.entries, perm.mapping)
    return DenseTensor(out / math.factorial(N))


def antisymmetrize_cp(cp: CpDecomposition) -> CpDecomposition:
    if len(set(cp.dims)) != 1:
        raise DimensionMismatchError(f"operation needs equal mode dims, got {cp.dims}", dims=cp.dims)
    N = cp.order
    scale = 1.0 / math.factorial(N)
    blocks: List[List[np.ndarray]] = [[] for _ in range(N)]
    for perm in all_permutations(N):
        for j in range(N):
            block = cp.factors[perm.mapping[j]]
            if j == 0:
                block = (perm.sign * scale) * block
            blocks[j].append(block)
    return CpDecomposition(tuple(np.hstack(b) for b in blocks))


def basis_tensor(k: MultiIndex, K: int) -> DenseTensor:
    k.validate(K)
    N = k.order
    _check_size((K,) * N)
    out = np.zeros((K,) * N, dtype=np.complex128)
    base = k.zero_based()
    for perm in all_permutations(N):
        out[tuple(base[list(perm.mapping)])] = perm.sign
    return DenseTensor(out)


def determinant_tensor(N: int) -> DenseTensor:
    if N < 1:
        raise InvalidMultiIndexError(f"determinant tensor needs N >= 1, got {N}", N=N)
    return basis_tensor(MultiIndex(tuple(range(1, N + 1))), N)


def antisymmetry_violation(X: DenseTensor) -> Tuple[float, Tuple[int, ...], Tuple[int, ...]]:
    """Worst |X(k) + X(k with two adjacent coordinates swapped)| over all k.

    Adjacent transpositions generate S_N, so a zero result certifies antisymmetry.
    Returned indices are 1-based.
    """
    X._require_cubical()
    worst, index, swapped = 0.0, (1,) * X.order, (1,) * X.order
    for axis in range(X.order - 1):
        residual = np.abs(X.entries + np.swapaxes(X.entries, axis, axis + 1))
        flat = int(np.argmax(residual))
        value = float(residual.ravel()[flat])
        if value > worst:
            k = np.unravel_index(flat, X.dims)
            k_swapped = list(k)
            k_swapped[axis], k_swapped[axis + 1] = k_swapped[axis + 1], k_swapped[axis]
            worst = value
            index = tuple(int(c) + 1 for c in k)
            swapped = tuple(int(c) + 1 for c in k_swapped)
    return worst, index, swapped


def _within_tolerance(worst: float, X: DenseTensor, tol: float) -> bool:
    # relative to the largest entry; the zero tensor passes with worst == 0
    return worst <= tol * X.max_abs()


def is_antisymmetric(X: DenseTensor, tol: float = ANTISYMMETRY_TOL) -> bool:
    if len(set(X.dims)) != 1:
        return False
    worst, _, _ = antisymmetry_violation(X)
    return _within_tolerance(worst, X, tol)


def antisym_expand(X: DenseTensor) -> Dict[MultiIndex, complex]:
    K = X._require_cubical()
    worst, index, swapped = antisymmetry_violation(X)
    if not _within_tolerance(worst, X, ANTISYMMETRY_TOL):
        raise AntisymmetryError(worst, index, swapped)
    return {k: complex(X.entries[tuple(k.zero_based())]) for k in multi_indices(X.order, K)}


def antisym_reconstruct(coefficients: Dict[MultiIndex, complex], N: int, K: int) -> DenseTensor:
    """Σ c_k E_k, the inverse of antisym_expand."""
    out = np.zeros((K,) * N, dtype=np.complex128)
    for k, c in coefficients.items():
        if k.order != N:
            raise InvalidMultiIndexError(f"multi-index {k.entries} has order {k.order}, expected {N}")
        k.validate(K)
        base = k.zero_based()
        for perm in all_permutations(N):
            out[tuple(base[list(perm.mapping)])] += perm.sign * c
    return DenseTensor(out)


def support_restrict(X: DenseTensor, k: MultiIndex) -> DenseTensor:
    """Zero every entry with a coordinate outside {k_1..k_N}."""
    K = X._require_cubical()
    k.validate(K)
    if k.order != X.order:
        raise InvalidMultiIndexError(
            f"multi-index order {k.order} does not match tensor order {X.order}", entries=k.entries)
    selector = np.ix_(*([k.zero_based()] * X.order))
    out = np.zeros(X.dims, dtype=np.complex128)
    out[selector] = X.entries[selector]
    return DenseTensor(out)


def embed_cp(cp: CpDecomposition, k: MultiIndex, K: int) -> CpDecomposition:
    """Place each length-N factor on the rows k_1..k_N of a length-K factor."""
    k.validate(K)
    N = k.order
    if any(d != N for d in cp.dims):
        raise DimensionMismatchError(
            f"embed needs every mode dim equal to N={N}, got {cp.dims}", dims=cp.dims, N=N)
    rows = k.zero_based()
    embedded = []
    for factor in cp.factors:
        out = np.zeros((K, cp.rank), dtype=np.complex128)
        out[rows, :] = factor
        embedded.append(out)
    return CpDecomposition(tuple(embedded))


def restrict_cp(cp: CpDecomposition, k: MultiIndex) -> CpDecomposition:
    if len(set(cp.dims)) != 1:
        raise DimensionMismatchError(f"restrict needs equal mode dims, got {cp.dims}", dims=cp.dims)
    k.validate(cp.dims[0])
    rows = k.zero_based()
    return CpDecomposition(tuple(f[rows, :] for f in cp.factors))


def random_cp(dims: Sequence[int], rank: int, rng: np.random.Generator) -> CpDecomposition:
    """Factors drawn i.i.d. complex standard Gaussian."""
    return CpDecomposition(tuple(
        (rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))) / np.sqrt(2.0)
        for d in dims
    ))


def random_tensor(dims: Iterable[int], rng: np.random.Generator) -> DenseTensor:
    dims = tuple(dims)
    return DenseTensor(rng.standard_normal(dims) + 1j * rng.standard_normal(dims))
