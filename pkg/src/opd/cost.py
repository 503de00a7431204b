"""Abstract cost-function contract shared by all engines.

A cost function maps the non-negative orthant to non-negative reals with
value 0 at the origin.  Engines only require values and gradients; the
Hessian is used by convexity sampling, Newton polish and Lipschitz bounds.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np


class CostFunction(ABC):
    """Evaluate/gradient contract over the non-negative orthant."""

    n: int

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> float:
        """Value at ``x`` (``x >= 0`` coordinate-wise)."""

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Exact analytic gradient at ``x``."""

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Exact analytic Hessian at ``x`` (interior points if singular)."""

    @abstractmethod
    def curvature_degree(self) -> float:
        """Smallest t with <grad(x), x> <= t * value(x) on the orthant.

        For sums of power terms this is the maximum total degree.
        """

    def check_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            from .errors import DimensionMismatch

            raise DimensionMismatch(f"expected {self.n} coordinates, got {x.shape}")
        return x
