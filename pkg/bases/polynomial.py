from typing import Tuple

import numpy as np
from numpy.polynomial import legendre

from bases.base import BaseFunctionBasis


class MonomialBasis(BaseFunctionBasis):
    """phi_k(x) = x^(k-1)"""

    def __init__(self, size: int, domain: Tuple[float, float] = (-1.0, 1.0)):
        super().__init__("monomial", size, domain)

    def _evaluate(self, k: int, points: np.ndarray) -> np.ndarray:
        return points ** (k - 1)


class LegendreBasis(BaseFunctionBasis):
    """Legendre polynomials P_0..P_{K-1} mapped affinely onto the domain"""

    def __init__(self, size: int, domain: Tuple[float, float] = (-1.0, 1.0)):
        super().__init__("legendre", size, domain)

    def _evaluate(self, k: int, points: np.ndarray) -> np.ndarray:
        a, b = self.domain
        t = (2.0 * points - (a + b)) / (b - a)
        coefficients = np.zeros(k)
        coefficients[-1] = 1.0
        return legendre.legval(t, coefficients)
