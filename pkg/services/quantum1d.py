"""Composite Gauss-Legendre quadrature and the 1D soft-Coulomb Hamiltonian
evaluated on separable (sum-of-products) functions.

Every N-dimensional integral is reduced to 1D mode overlaps plus, for the
electron-electron term, 2D sums over one pair of modes.
"""
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Hashable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre

from config.models import System1D
from utils.errors import (
    DegenerateNormError,
    DimensionMismatchError,
    ImaginaryResidueError,
    MissingRepresentationError,
    UsageError,
)

NORM_FLOOR = 1e-14

Monomial = Tuple[float, Tuple[Hashable, ...]]


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    interval: Tuple[float, float]
    subintervals: int
    points_per_subinterval: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values) -> complex:
        return np.sum(self.weights * np.asarray(values))

    @cached_property
    def interaction_kernel(self) -> np.ndarray:
        """w(r, r') on all node pairs"""
        return two_body_potential(self.nodes[:, None], self.nodes[None, :])


def gauss_legendre_grid(a: float, b: float, subintervals: int, pts: int) -> QuadratureGrid:
    if not a < b:
        raise UsageError(f"interval must satisfy a < b, got ({a}, {b})", "invalid_interval", {"a": a, "b": b})
    if subintervals < 1 or pts < 1:
        raise UsageError("subinterval and point counts must be >= 1", "invalid_grid",
                         {"subintervals": subintervals, "pts": pts})
    reference_nodes, reference_weights = legendre.leggauss(pts)
    edges = np.linspace(a, b, subintervals + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * reference_nodes[None, :]).ravel()
    weights = (half[:, None] * reference_weights[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid((float(a), float(b)), subintervals, pts, nodes, weights)


def one_body_potential(system: System1D, r):
    """-Σ_I Z_I / sqrt(1 + (r - R_I)^2); scalar in, scalar out."""
    r_arr = np.asarray(r, dtype=float)
    value = np.zeros_like(r_arr)
    for nucleus in system.nuclei:
        value = value - nucleus.charge / np.sqrt(1.0 + (r_arr - nucleus.position) ** 2)
    return float(value) if value.ndim == 0 else value


def two_body_potential(r, rp):
    value = 1.0 / np.sqrt(1.0 + (np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)) ** 2)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True, eq=False)
class SeparableFunction:
    """f = prefactor · Σ_(sign, π) sign · Σ_i Π_j ψ_ij(r_π(j)) on grid nodes.

    ``values``/``derivs`` have shape (p, N, n_nodes). Without ``permutations``
    f is the plain sum Σ_i Π_j ψ_ij(r_j). Each permutation maps mode j to the
    coordinate slot π(j) (0-based).
    """
    values: np.ndarray
    derivs: Optional[np.ndarray] = None
    permutations: Optional[Tuple[Tuple[int, Tuple[int, ...]], ...]] = None
    prefactor: float = 1.0

    def __post_init__(self):
        if np.ndim(self.values) != 3:
            raise DimensionMismatchError(
                f"values must have shape (p, N, n), got {np.shape(self.values)}", shape=np.shape(self.values))
        if self.derivs is not None and np.shape(self.derivs) != np.shape(self.values):
            raise DimensionMismatchError(
                f"derivs shape {np.shape(self.derivs)} != values shape {np.shape(self.values)}")
        if self.permutations is not None:
            for sign, mapping in self.permutations:
                if sorted(mapping) != list(range(self.order)) or sign not in (1, -1):
                    raise DimensionMismatchError(f"invalid permutation entry ({sign}, {mapping})")

    @property
    def rank(self) -> int:
        return self.values.shape[0]

    @property
    def order(self) -> int:
        return self.values.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[2]

    def expansion_indices(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(coefficients (T,), term index (T,), mode feeding each slot (T, N))"""
        structure = self.permutations or ((1, tuple(range(self.order))),)
        coeffs, term_index, mode_of_slot = [], [], []
        for sign, mapping in structure:
            inverse = np.argsort(mapping)
            for i in range(self.rank):
                coeffs.append(sign * self.prefactor)
                term_index.append(i)
                mode_of_slot.append(inverse)
        return (np.asarray(coeffs, dtype=float), np.asarray(term_index, dtype=np.intp),
                np.asarray(mode_of_slot, dtype=np.intp).reshape(len(coeffs), self.order))

    def expand(self) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """Explicit terms: coefficients (T,), slot values (T, N, n), slot derivatives"""
        coeffs, term_index, mode_of_slot = self.expansion_indices()
        rows = term_index[:, None]
        values = self.values[rows, mode_of_slot]
        derivs = self.derivs[rows, mode_of_slot] if self.derivs is not None else None
        return coeffs, values, derivs

    def expanded(self) -> "SeparableFunction":
        """The same function as p·N! plain terms (coefficients folded into slot 0)"""
        coeffs, values, derivs = self.expand()
        values = values.astype(np.result_type(values, coeffs), copy=True)
        values[:, 0, :] *= coeffs[:, None]
        if derivs is not None:
            derivs = derivs.astype(np.result_type(derivs, coeffs), copy=True)
            derivs[:, 0, :] *= coeffs[:, None]
        return SeparableFunction(values, derivs)

    def reduce_adjoint(self, bar_values: np.ndarray) -> np.ndarray:
        """Pull an adjoint on expanded slot arrays back to the (p, N, n) mode arrays"""
        _, term_index, mode_of_slot = self.expansion_indices()
        out = np.zeros(self.values.shape, dtype=bar_values.dtype)
        np.add.at(out, (term_index[:, None], mode_of_slot), bar_values)
        return out

    def evaluate_nodes(self, node_tuples) -> np.ndarray:
        """f at grid-node tuples; node_tuples has shape (M, N) of node indices"""
        node_tuples = np.atleast_2d(np.asarray(node_tuples, dtype=np.intp))
        coeffs, values, _ = self.expand()
        product = np.ones((values.shape[0], node_tuples.shape[0]), dtype=values.dtype)
        for slot in range(self.order):
            product = product * values[:, slot, node_tuples[:, slot]]
        return coeffs @ product


class EnergyTerms(NamedTuple):
    kinetic: float
    one_body: float
    two_body: float
    norm: float

    @property
    def total(self) -> float:
        return self.kinetic + self.one_body + self.two_body

    @property
    def rayleigh_quotient(self) -> float:
        return self.total / self.norm


def _physical(value: complex, name: str) -> float:
    value = complex(value)
    if abs(value.imag) > 1e-10 * abs(value.real) + 1e-12:
        raise ImaginaryResidueError(name, value)
    return value.real


class SeparableContraction:
    """Quadrature contractions of one separable function with itself.

    Each physical scalar is a sum of monomials Σ_{t,t'} C[t,t'] Π M_key[t,t'],
    where the M are 1D (or pairwise 2D) term-by-term integrals keyed by
    ("S", l) overlap, ("G", l) derivative overlap, ("U", l) nuclear potential,
    ("W", l, m) pair interaction and ("X", i, j) cross-slot overlap. The
    reverse pass assumes real-valued functions.
    """

    def __init__(self, f: SeparableFunction, grid: QuadratureGrid, system: Optional[System1D] = None):
        if f.n_nodes != grid.size:
            raise DimensionMismatchError(
                f"function sampled on {f.n_nodes} nodes, grid has {grid.size}", nodes=f.n_nodes, grid=grid.size)
        self.function = f
        self.grid = grid
        self.system = system
        self.coeffs, self.values, self.derivs = f.expand()
        self.C = np.outer(np.conj(self.coeffs), self.coeffs)
        self.N = f.order
        self._matrices: Dict[Hashable, np.ndarray] = {}
        _, self.term_index, self.mode_of_slot = f.expansion_indices()
        self._pair_cache: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]] = {}

    # -- forward ---------------------------------------------------------

    def _weighted(self, key: Hashable) -> np.ndarray:
        w = self.grid.weights
        if key[0] == "S":
            return np.conj(self.values[:, key[1], :]) * w
        if key[0] == "G":
            return np.conj(self._derivs()[:, key[1], :]) * w
        if key[0] == "U":
            return np.conj(self.values[:, key[1], :]) * (w * self._potential())
        if key[0] == "X":
            return np.conj(self.values[:, key[1], :]) * w
        raise KeyError(key)

    def _derivs(self) -> np.ndarray:
        if self.derivs is None:
            raise MissingRepresentationError("kinetic energy needs first derivatives of every mode")
        return self.derivs

    def _potential(self) -> np.ndarray:
        if self.system is None:
            return np.zeros(self.grid.size)
        return one_body_potential(self.system, self.grid.nodes)

    def _mode_pair(self, j: int, J: int) -> Tuple[np.ndarray, np.ndarray]:
        """P[a,b,n] = w_n conj(ψ_aj) ψ_bJ over the unexpanded terms, and P contracted with the kernel"""
        if (j, J) not in self._pair_cache:
            base = self.function.values
            P = np.conj(base[:, j, :])[:, None, :] * base[:, J, :][None, :, :] * self.grid.weights
            self._pair_cache[(j, J)] = (P, P @ self.grid.interaction_kernel)
        return self._pair_cache[(j, J)]

    def _slot_classes(self, l: int, m: int) -> Tuple[np.ndarray, np.ndarray]:
        """Class id of every expanded term and the (mode at slot l, mode at slot m) of each class"""
        modes, cls = np.unique(self.mode_of_slot[:, [l, m]], axis=0, return_inverse=True)
        return np.asarray(cls).reshape(-1), modes

    def _class_blocks(self, modes: np.ndarray):
        for c, (j, k) in enumerate(modes):
            for d, (J, K) in enumerate(modes):
                yield c, d, (int(j), int(J)), (int(k), int(K))

    def _pair_matrix(self, l: int, m: int) -> np.ndarray:
        # W[t,t'] only depends on the terms and modes feeding slots l and m
        cls, modes = self._slot_classes(l, m)
        p = self.function.rank
        blocks = np.empty((len(modes), len(modes), p, p), dtype=np.complex128)
        for c, d, left, right in self._class_blocks(modes):
            P, _ = self._mode_pair(*left)
            _, KP = self._mode_pair(*right)
            blocks[c, d] = np.sum(P * KP, axis=2)
        ti = self.term_index
        return blocks[cls[:, None], cls[None, :], ti[:, None], ti[None, :]]

    def matrix(self, key: Hashable) -> np.ndarray:
        if key not in self._matrices:
            if key[0] == "W":
                self._matrices[key] = self._pair_matrix(key[1], key[2])
            else:
                right_slot = key[2] if key[0] == "X" else key[1]
                right = self.derivs if key[0] == "G" else self.values
                self._matrices[key] = self._weighted(key) @ right[:, right_slot, :].T
        return self._matrices[key]

    def value(self, monomials: Sequence[Monomial]) -> complex:
        total = 0j
        for scale, keys in monomials:
            product = self.C.copy()
            for key in keys:
                product = product * self.matrix(key)
            total += scale * product.sum()
        return total

    def _overlaps_except(self, *slots: int) -> List[Tuple[str, int]]:
        return [("S", l) for l in range(self.N) if l not in slots]

    def norm_monomials(self) -> List[Monomial]:
        return [(1.0, tuple(self._overlaps_except()))]

    def kinetic_monomials(self) -> List[Monomial]:
        return [(0.5, (("G", l), *self._overlaps_except(l))) for l in range(self.N)]

    def one_body_monomials(self) -> List[Monomial]:
        return [(1.0, (("U", l), *self._overlaps_except(l))) for l in range(self.N)]

    def two_body_monomials(self) -> List[Monomial]:
        return [
            (1.0, (("W", l, m), *self._overlaps_except(l, m)))
            for l in range(self.N) for m in range(l + 1, self.N)
        ]

    def swap_monomials(self, i: int, j: int) -> List[Monomial]:
        """0-based slots i < j"""
        return [(1.0, (("X", i, j), ("X", j, i), *self._overlaps_except(i, j)))]

    def penalty_monomials(self) -> List[Monomial]:
        return [m for i in range(self.N) for j in range(i + 1, self.N) for m in self.swap_monomials(i, j)]

    def energy_terms(self) -> EnergyTerms:
        norm = _physical(self.value(self.norm_monomials()), "norm")
        if norm < NORM_FLOOR:
            raise DegenerateNormError(norm)
        return EnergyTerms(
            kinetic=_physical(self.value(self.kinetic_monomials()), "kinetic"),
            one_body=_physical(self.value(self.one_body_monomials()), "one_body"),
            two_body=_physical(self.value(self.two_body_monomials()), "two_body"),
            norm=norm,
        )

    # -- reverse ---------------------------------------------------------

    def _pair_backward(self, l: int, m: int, bar: np.ndarray, bar_P: Dict, bar_KP: Dict):
        cls, modes = self._slot_classes(l, m)
        C, p = len(modes), self.function.rank
        ti = self.term_index
        flat = ((cls[:, None] * C + cls[None, :]) * p + ti[:, None]) * p + ti[None, :]
        bar_blocks = np.bincount(flat.ravel(), weights=bar.ravel(), minlength=C * C * p * p).reshape(C, C, p, p)
        for c, d, left, right in self._class_blocks(modes):
            P, _ = self._mode_pair(*left)
            _, KP = self._mode_pair(*right)
            block = bar_blocks[c, d][:, :, None]
            bar_P[left] = bar_P[left] + block * KP.real
            bar_KP[right] = bar_KP[right] + block * P.real

    def _mode_pair_backward(self, bar_P: Dict, bar_KP: Dict) -> np.ndarray:
        """Adjoint of the (p, N, n) mode values from the pair-integral adjoints"""
        for pair, bar in bar_KP.items():
            # the kernel is symmetric
            bar_P[pair] = bar_P[pair] + bar @ self.grid.interaction_kernel
        v = self.function.values.real
        w = self.grid.weights
        out = np.zeros(v.shape, dtype=float)
        for (j, J), bar in bar_P.items():
            out[:, j, :] += w * np.einsum("abn,bn->an", bar, v[:, J, :])
            out[:, J, :] += w * np.einsum("abn,an->bn", bar, v[:, j, :])
        return out

    def backward(self, seeds: Sequence[Tuple[float, Sequence[Monomial]]]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Adjoints of the (p, N, n) mode values and derivatives for Σ seed · value(monomials)."""
        bars: Dict[Hashable, np.ndarray] = defaultdict(lambda: np.zeros_like(self.C))
        for seed, monomials in seeds:
            if seed == 0.0:
                continue
            for scale, keys in monomials:
                mats = [self.matrix(key) for key in keys]
                for a, key in enumerate(keys):
                    partial = (seed * scale) * self.C
                    for b, mat in enumerate(mats):
                        if b != a:
                            partial = partial * mat
                    bars[key] = bars[key] + partial

        w = self.grid.weights
        bar_values = np.zeros(self.values.shape, dtype=float)
        bar_derivs = np.zeros(self.values.shape, dtype=float) if self.derivs is not None else None
        bar_P: Dict = defaultdict(float)
        bar_KP: Dict = defaultdict(float)
        for key, bar in bars.items():
            bar = np.real(bar)
            kind = key[0]
            if kind == "S":
                l = key[1]
                bar_values[:, l, :] += (bar + bar.T) @ (self.values[:, l, :].real * w)
            elif kind == "G":
                l = key[1]
                bar_derivs[:, l, :] += (bar + bar.T) @ (self.derivs[:, l, :].real * w)
            elif kind == "U":
                l = key[1]
                bar_values[:, l, :] += (bar + bar.T) @ (self.values[:, l, :].real * (w * self._potential()))
            elif kind == "X":
                i, j = key[1], key[2]
                bar_values[:, i, :] += bar @ (self.values[:, j, :].real * w)
                bar_values[:, j, :] += bar.T @ (self.values[:, i, :].real * w)
            elif kind == "W":
                self._pair_backward(key[1], key[2], bar, bar_P, bar_KP)

        mode_values = self.function.reduce_adjoint(bar_values)
        if bar_P or bar_KP:
            mode_values += self._mode_pair_backward(bar_P, bar_KP)
        mode_derivs = self.function.reduce_adjoint(bar_derivs) if bar_derivs is not None else None
        return mode_values, mode_derivs


def overlap(f: SeparableFunction, g: SeparableFunction, grid: QuadratureGrid) -> complex:
    """<f, g> = ∫ conj(f) g, as products of 1D quadratures per term pair."""
    if f.order != g.order:
        raise DimensionMismatchError(f"orders differ: {f.order} vs {g.order}", left=f.order, right=g.order)
    if f.n_nodes != grid.size or g.n_nodes != grid.size:
        raise DimensionMismatchError(
            f"functions sampled on {f.n_nodes}/{g.n_nodes} nodes, grid has {grid.size}")
    cf, vf, _ = f.expand()
    cg, vg, _ = g.expand()
    product = np.outer(np.conj(cf), cg).astype(np.complex128)
    for slot in range(f.order):
        product *= (np.conj(vf[:, slot, :]) * grid.weights) @ vg[:, slot, :].T
    return complex(product.sum())


def energy_terms(f: SeparableFunction, system: System1D, grid: QuadratureGrid) -> EnergyTerms:
    if f.derivs is None:
        raise MissingRepresentationError("energy_terms needs first derivatives of every mode")
    if f.order != system.n_electrons:
        raise DimensionMismatchError(
            f"function has {f.order} modes, system has {system.n_electrons} electrons",
            modes=f.order, electrons=system.n_electrons)
    return SeparableContraction(f, grid, system).energy_terms()


def swap_overlap(f: SeparableFunction, i: int, j: int, grid: QuadratureGrid) -> complex:
    """<f, f∘T_ij> for 1-based coordinates 1 <= i < j <= N."""
    if not 1 <= i < j <= f.order:
        raise UsageError(f"swap indices must satisfy 1 <= i < j <= {f.order}, got ({i}, {j})",
                         "index_out_of_range", {"i": i, "j": j, "N": f.order})
    contraction = SeparableContraction(f, grid)
    return complex(contraction.value(contraction.swap_monomials(i - 1, j - 1)))


def swap_penalty(f: SeparableFunction, grid: QuadratureGrid) -> float:
    """Σ_{i<j} Re<f, f∘T_ij> / <f, f>"""
    contraction = SeparableContraction(f, grid)
    norm = _physical(contraction.value(contraction.norm_monomials()), "norm")
    if norm < NORM_FLOOR:
        raise DegenerateNormError(norm)
    return float(np.real(contraction.value(contraction.penalty_monomials()))) / norm


def separable_from_callables(functions: Sequence[Sequence], grid: QuadratureGrid,
                             derivatives: Optional[Sequence[Sequence]] = None) -> SeparableFunction:
    """Sample ψ_ij (and ψ_ij') given as vectorized callables, indexed [term][mode]."""
    values = np.array([[fn(grid.nodes) for fn in term] for term in functions])
    derivs = None
    if derivatives is not None:
        derivs = np.array([[fn(grid.nodes) for fn in term] for term in derivatives])
    return SeparableFunction(values, derivs)
