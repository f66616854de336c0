from typing import Tuple

import numpy as np

from bases.base import BaseFunctionBasis


class IndicatorBasis(BaseFunctionBasis):
    """Indicators of K equal cells of the domain, scaled to unit L2 norm.

    Cells are half-open [left, right) except the last, which includes b.
    """

    def __init__(self, size: int, domain: Tuple[float, float] = (-1.0, 1.0)):
        super().__init__("indicator", size, domain)
        a, b = domain
        self.edges = np.linspace(a, b, size + 1)
        self.height = 1.0 / np.sqrt((b - a) / size)

    def _evaluate(self, k: int, points: np.ndarray) -> np.ndarray:
        left, right = self.edges[k - 1], self.edges[k]
        inside = (points >= left) & (points < right)
        if k == self.size:
            inside |= points == right
        return np.where(inside, self.height, 0.0)
