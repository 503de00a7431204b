"""Online primal-dual algorithms for convex covering, packing and auctions."""

from .cost import CostFunction
from .poly import ConvexityProfile, Monomial, Polynomial, check_convexity, profile

__all__ = [
    "CostFunction",
    "Polynomial",
    "Monomial",
    "ConvexityProfile",
    "profile",
    "check_convexity",
]

__version__ = "0.1.0"
