from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from bases.base import BaseFunctionBasis


class CallableBasis(BaseFunctionBasis):
    """Caller-supplied vectorized functions; no orthonormality is assumed."""

    def __init__(self, functions: Sequence[Callable[[np.ndarray], np.ndarray]],
                 domain: Optional[Tuple[float, float]] = None):
        super().__init__("callable", len(functions), domain)
        self.functions = tuple(functions)

    def _evaluate(self, k: int, points: np.ndarray) -> np.ndarray:
        values = self.functions[k - 1](points)
        return np.broadcast_to(np.asarray(values, dtype=np.complex128), points.shape)
