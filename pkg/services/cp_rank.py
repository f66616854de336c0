"""CP rank estimation by alternating least squares, plus the exact rank bounds
for determinant and antisymmetric tensors.

ALS is a heuristic: failing to fit at rank p does not prove rank > p
(border rank), so every report carries ``heuristic_flag`` next to the
analytic bounds.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from string import ascii_lowercase
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from config.models import AlsOptions
from services.tensor_core import (
    CpDecomposition,
    DenseTensor,
    dense_from_cp,
    is_antisymmetric,
    random_cp,
)
from utils.errors import BoundOverflowError, LinearSolveError, TrivialSpaceError, UsageError
from utils.logger import setup_logger

logger = setup_logger(__name__)

BOUND_ORDER_LIMIT = 20
_SHRINK = Fraction(5, 6)


@dataclass
class RankReport:
    estimated_rank: Optional[int]
    residuals: Dict[int, float]
    restarts_used: Dict[int, int]
    lower_bound: int
    upper_bound: int
    heuristic_flag: bool = True

    @property
    def found(self) -> bool:
        return self.estimated_rank is not None

    def to_frame(self) -> pd.DataFrame:
        ranks = sorted(self.residuals)
        return pd.DataFrame({
            "rank": ranks,
            "best_residual": [self.residuals[p] for p in ranks],
            "restarts_used": [self.restarts_used[p] for p in ranks],
        })

    def to_csv(self) -> str:
        header = f"# lower={self.lower_bound} upper={self.upper_bound} heuristic=true\n"
        return header + self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")

    def summary(self, p_max: int) -> str:
        if self.found:
            return f"estimated_rank={self.estimated_rank}"
        return f"estimated_rank=not found <= {p_max}"


class _Fit(NamedTuple):
    residual: float
    restart: int
    cp: CpDecomposition


def _relative_residual(X: DenseTensor, cp: CpDecomposition, norm_x: float) -> float:
    diff = X.entries - dense_from_cp(cp).entries
    return float(np.linalg.norm(diff.ravel()) / norm_x)


def _mttkrp(entries: np.ndarray, factors: List[np.ndarray], mode: int) -> np.ndarray:
    """X_(mode) times the conjugated Khatri-Rao product of the other factors."""
    order = entries.ndim
    letters = ascii_lowercase[:order]
    operands = [entries]
    specs = [letters]
    for j in range(order):
        if j != mode:
            operands.append(np.conj(factors[j]))
            specs.append(f"{letters[j]}z")
    return np.einsum(f"{','.join(specs)}->{letters[mode]}z", *operands, optimize=True)


def _gram_hadamard(factors: List[np.ndarray], mode: int) -> np.ndarray:
    rank = factors[0].shape[1]
    gram = np.ones((rank, rank), dtype=np.complex128)
    for j, f in enumerate(factors):
        if j != mode:
            gram *= f.T @ np.conj(f)
    return gram


def _als_run(X: DenseTensor, start: CpDecomposition, opts: AlsOptions, restart: int) -> _Fit:
    factors = [np.array(f) for f in start.factors]
    norm_x = X.frobenius()
    rank = start.rank
    residual = _relative_residual(X, start, norm_x)

    for sweep in range(opts.max_sweeps):
        for mode in range(X.order):
            gram = _gram_hadamard(factors, mode)
            ridge = opts.regularization * (float(np.max(np.abs(np.diag(gram)))) or 1.0)
            rhs = _mttkrp(X.entries, factors, mode)
            try:
                # A G = rhs  <=>  G^T A^T = rhs^T
                solved = scipy.linalg.solve(
                    gram.T + ridge * np.eye(rank), rhs.T, assume_a="her", check_finite=True)
            except (np.linalg.LinAlgError, ValueError) as e:
                raise LinearSolveError(
                    f"ALS solve failed at restart {restart}, sweep {sweep}, mode {mode + 1}: {e}",
                    restart=restart, sweep=sweep, mode=mode + 1)
            factors[mode] = solved.T

        previous = residual
        residual = _relative_residual(X, CpDecomposition(tuple(factors)), norm_x)
        if not np.isfinite(residual):
            raise LinearSolveError(f"ALS diverged at restart {restart}, sweep {sweep}", restart=restart)
        if previous - residual < opts.stall_tol:
            logger.debug(f"restart {restart}: stalled after {sweep + 1} sweeps at residual {residual:.3e}")
            break

    return _Fit(residual, restart, CpDecomposition(tuple(factors)))


def _rescaled(cp: CpDecomposition, factor: float) -> CpDecomposition:
    return CpDecomposition(tuple(factor * f for f in cp.factors))


def _restart_generators(opts: AlsOptions, rank: int) -> List[np.random.Generator]:
    children = np.random.SeedSequence([opts.seed, rank]).spawn(opts.restarts)
    return [np.random.default_rng(child) for child in children]


def _best_of(X: DenseTensor, starts: List[CpDecomposition], opts: AlsOptions) -> _Fit:
    if opts.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            fits = list(pool.map(lambda item: _als_run(X, item[1], opts, item[0]), enumerate(starts)))
    else:
        fits = [_als_run(X, start, opts, i) for i, start in enumerate(starts)]
    # lowest residual wins, ties go to the lowest restart index
    return min(fits, key=lambda fit: (fit.residual, fit.restart))


def als_fit(X: DenseTensor, p: int, opts: Optional[AlsOptions] = None,
            warm_start: Optional[CpDecomposition] = None) -> Tuple[CpDecomposition, float]:
    """Best-of-restarts rank-p CP fit; returns (decomposition, relative residual).

    With ``warm_start`` (rank p-1), restart 0 starts from it plus one random column.
    """
    opts = opts or AlsOptions()
    if p < 0:
        raise UsageError(f"rank must be >= 0, got {p}", "invalid_rank", {"rank": p})
    norm_x = X.frobenius()
    if p == 0:
        return CpDecomposition.zero(X.dims), (0.0 if norm_x == 0 else 1.0)
    if norm_x == 0:
        raise UsageError("cannot fit a nonzero rank to the zero tensor", "zero_tensor", {"rank": p})

    # ALS runs on X / ||X||; factors are scaled back at the end
    unit = X.scaled(1.0 / norm_x)
    mode_scale = norm_x ** (1.0 / X.order)
    generators = _restart_generators(opts, p)
    scale = np.sqrt(p) ** (-1.0 / X.order)
    starts = []
    for i, rng in enumerate(generators):
        if i == 0 and warm_start is not None and warm_start.rank == p - 1:
            column = random_cp(X.dims, 1, rng)
            small = CpDecomposition(tuple(1e-3 * scale * f for f in column.factors))
            starts.append(_rescaled(warm_start, 1.0 / mode_scale).concat(small))
        else:
            base = random_cp(X.dims, p, rng)
            starts.append(CpDecomposition(tuple(scale * f for f in base.factors)))

    best = _best_of(unit, starts, opts)
    logger.info(f"✅ ALS rank {p}: best residual {best.residual:.3e} (restart {best.restart} of {opts.restarts})")
    return _rescaled(best.cp, mode_scale), best.residual


def _unfolding_rank_bound(X: DenseTensor) -> int:
    bound = 1
    for mode in range(X.order):
        unfolding = np.moveaxis(X.entries, mode, 0).reshape(X.dims[mode], -1)
        bound = max(bound, int(np.linalg.matrix_rank(unfolding)))
    return bound


def _bounds_for(X: DenseTensor) -> Tuple[int, int]:
    K = X.dims[0]
    if len(set(X.dims)) == 1 and K >= X.order and X.frobenius() > 0 and is_antisymmetric(X):
        return antisym_rank_bounds(X.order, K)
    return _unfolding_rank_bound(X), math.prod(X.dims) // max(X.dims)


def rank_search(X: DenseTensor, p_max: int, opts: Optional[AlsOptions] = None) -> RankReport:
    """Smallest rank whose best ALS residual reaches ``opts.rel_tol``.

    Ranks below the analytic lower bound are skipped; the reported
    residuals are non-increasing because a rank-p fit padded with a zero
    column is a valid rank-(p+1) candidate.
    """
    opts = opts or AlsOptions()
    if p_max < 1:
        raise UsageError(f"p_max must be >= 1, got {p_max}", "invalid_rank", {"p_max": p_max})

    lower, upper = _bounds_for(X)
    logger.info(f"🔍 Rank search on dims {X.dims}: bounds [{lower}, {upper}], p_max={p_max}")
    report = RankReport(estimated_rank=None, residuals={}, restarts_used={},
                        lower_bound=lower, upper_bound=upper)

    previous: Optional[CpDecomposition] = None
    previous_residual = math.inf
    for p in range(max(1, lower), p_max + 1):
        cp, residual = als_fit(X, p, opts, warm_start=previous)
        if previous is not None and previous_residual < residual:
            padding = CpDecomposition(tuple(np.zeros((d, 1), dtype=np.complex128) for d in X.dims))
            cp, residual = previous.concat(padding), previous_residual
        report.residuals[p] = residual
        report.restarts_used[p] = opts.restarts
        previous, previous_residual = cp, residual
        if residual <= opts.rel_tol:
            report.estimated_rank = p
            logger.info(f"✅ Estimated rank {p} (residual {residual:.3e}, heuristic)")
            break
    else:
        logger.info(f"❌ No rank <= {p_max} reached residual {opts.rel_tol:.1e} (heuristic, not a proof)")
    return report


def _check_bound_order(N: int):
    if N < 1:
        raise UsageError(f"N must be >= 1, got {N}", "invalid_order", {"N": N})
    if N > BOUND_ORDER_LIMIT:
        raise BoundOverflowError(N, BOUND_ORDER_LIMIT)


def det_rank_bounds(N: int) -> Tuple[int, int]:
    """binom(N, N//2) <= rank(E) <= floor(N! (5/6)^(N//3)), in exact arithmetic."""
    _check_bound_order(N)
    lower = math.comb(N, N // 2)
    upper = math.floor(math.factorial(N) * _SHRINK ** (N // 3))
    return lower, upper


def antisym_rank_bounds(N: int, K: int) -> Tuple[int, int]:
    """Rank range over nonzero antisymmetric tensors in (C^K)^{⊗N}."""
    _check_bound_order(N)
    if K < N:
        raise TrivialSpaceError(N, K)
    lower = math.comb(N, N // 2)
    upper = math.floor(math.factorial(N) * math.comb(K, N) * _SHRINK ** (N // 3))
    return lower, upper


class StirlingEstimate(NamedTuple):
    exact: int
    asymptotic: float

    @property
    def ratio(self) -> float:
        return self.exact / self.asymptotic


def asymptotic_lower_bound(N: int) -> StirlingEstimate:
    """binom(N, N//2) next to its 2^N / sqrt(N) growth estimate."""
    if N < 1:
        raise UsageError(f"N must be >= 1, got {N}", "invalid_order", {"N": N})
    return StirlingEstimate(math.comb(N, N // 2), 2.0 ** N / math.sqrt(N))


@dataclass
class BoundTable:
    N: int
    det_lower: int
    det_upper: int
    stirling: StirlingEstimate
    K: Optional[int] = None
    antisym_dimension: Optional[int] = None
    antisym_lower: Optional[int] = None
    antisym_upper: Optional[int] = None

    def tnn_statements(self) -> List[str]:
        return [
            f"one hidden layer: every nonzero antisymmetric TNN at N={self.N} needs rank p >= {self.det_lower}",
            f"any fixed depth and width: every nonzero antisymmetric TNN at N={self.N} needs rank p >= {self.det_lower}",
        ]

    def rows(self) -> List[Tuple[str, str]]:
        rows = [
            ("N", str(self.N)),
            ("det_lower", str(self.det_lower)),
            ("det_upper", str(self.det_upper)),
            ("stirling_exact", str(self.stirling.exact)),
            ("stirling_2^N/sqrt(N)", f"{self.stirling.asymptotic:.6g}"),
        ]
        if self.K is not None:
            rows += [
                ("K", str(self.K)),
                ("dim", str(self.antisym_dimension)),
                ("antisym_lower", str(self.antisym_lower)),
                ("antisym_upper", str(self.antisym_upper)),
            ]
        return rows


def bound_table(N: int, K: Optional[int] = None) -> BoundTable:
    det_lower, det_upper = det_rank_bounds(N)
    table = BoundTable(N=N, det_lower=det_lower, det_upper=det_upper, stirling=asymptotic_lower_bound(N))
    if K is not None:
        table.antisym_lower, table.antisym_upper = antisym_rank_bounds(N, K)
        table.K = K
        table.antisym_dimension = math.comb(K, N)
    return table
