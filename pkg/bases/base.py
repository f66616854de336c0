from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np

from utils.errors import ConfigError, InvalidMultiIndexError


class BaseFunctionBasis(ABC):
    """Base class for all function bases.

    Basis indices are 1-based, matching the tensor index convention.
    """

    def __init__(self, name: str, size: int, domain: Optional[Tuple[float, float]] = None):
        if size < 1:
            raise ConfigError(f"basis size must be >= 1, got {size}", size=size)
        self.name = name
        self.size = size
        self.domain = domain

    @abstractmethod
    def _evaluate(self, k: int, points: np.ndarray) -> np.ndarray:
        """Values of phi_k at the points (k is 1-based)"""
        pass

    def evaluate(self, k: int, points) -> np.ndarray:
        if not 1 <= k <= self.size:
            raise InvalidMultiIndexError(f"basis index {k} outside 1..{self.size}", k=k, size=self.size)
        points = np.asarray(points, dtype=float)
        return np.asarray(self._evaluate(k, points), dtype=np.complex128)

    def evaluate_all(self, points) -> np.ndarray:
        """Matrix of shape (K, n_points)"""
        points = np.asarray(points, dtype=float)
        return np.stack([self.evaluate(k, points) for k in range(1, self.size + 1)])

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draws over the domain box ([-1, 1] when no domain is set)"""
        a, b = self.domain if self.domain is not None else (-1.0, 1.0)
        return rng.uniform(a, b, size=count)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(size={self.size}, domain={self.domain})"


def get_function_basis(kind: str, size: int, domain: Tuple[float, float] = (-1.0, 1.0), **kwargs) -> BaseFunctionBasis:
    """Look up a basis implementation by name."""
    if kind == "monomial":
        from bases.polynomial import MonomialBasis
        return MonomialBasis(size, domain)
    elif kind == "legendre":
        from bases.polynomial import LegendreBasis
        return LegendreBasis(size, domain)
    elif kind == "indicator":
        from bases.indicator import IndicatorBasis
        return IndicatorBasis(size, domain)
    elif kind == "callable":
        from bases.callable_basis import CallableBasis
        return CallableBasis(kwargs["functions"], domain)
    else:
        raise ConfigError(f"Unsupported basis kind '{kind}'", kind=kind)
