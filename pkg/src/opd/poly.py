"""Sparse multivariate polynomials with non-negative coefficients.

Degrees are exact rationals so that surrogate constructions, which scale
every degree by 1 + lambda, compose without floating-point drift.  Values
and gradients are computed by the kernels in :mod:`opd._kernels` on cached
float arrays.

Structural restrictions enforced at construction time:
  * coefficients are non-negative, zero-coefficient terms are dropped;
  * the constant term is zero (cost of producing nothing is nothing);
  * each per-variable degree is 0 or >= 1, so gradients are finite on the
    whole non-negative orthant.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .cost import CostFunction
from .errors import DimensionMismatch

DegreeLike = Union[int, str, Fraction]


def as_degree(value: DegreeLike) -> Fraction:
    """Coerce an int, Fraction or "p/q" string into an exact degree."""
    if isinstance(value, Fraction):
        d = value
    elif isinstance(value, int):
        d = Fraction(value)
    elif isinstance(value, str):
        d = Fraction(value)
    else:
        raise TypeError(f"degree must be int, Fraction or 'p/q' string, got {value!r}")
    if d < 0:
        raise ValueError(f"negative degree {d}")
    if 0 < d < 1:
        raise ValueError(f"per-variable degree {d} in (0,1) would make the gradient singular at 0")
    return d


@dataclass(frozen=True)
class Monomial:
    """A single term ``coeff * prod_i x_i**degrees[i]``."""

    coeff: float
    degrees: tuple[Fraction, ...]

    def total_degree(self) -> Fraction:
        return sum(self.degrees, Fraction(0))


class Polynomial(CostFunction):
    """Canonical sparse polynomial: merged terms, no zero coefficients.

    ``terms`` is an iterable of ``(coeff, degrees)`` pairs where ``degrees``
    has one entry per variable (int, Fraction or "p/q" string).
    """

    def __init__(self, n: int, terms: Iterable[tuple[float, Sequence[DegreeLike]]]):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        self.n = n
        merged: dict[tuple[Fraction, ...], float] = {}
        for coeff, degrees in terms:
            coeff = float(coeff)
            if coeff < 0:
                raise ValueError(f"negative coefficient {coeff}")
            degs = tuple(as_degree(d) for d in degrees)
            if len(degs) != n:
                raise DimensionMismatch(f"degree vector {degs} does not have {n} entries")
            if coeff == 0.0:
                continue
            if all(d == 0 for d in degs):
                raise ValueError("constant term must be zero")
            merged[degs] = merged.get(degs, 0.0) + coeff
        self.monomials: tuple[Monomial, ...] = tuple(
            Monomial(c, d) for d, c in sorted(merged.items()) if c != 0.0
        )
        self._coeffs = np.array([m.coeff for m in self.monomials], dtype=float)
        if self.monomials:
            self._degs = np.array(
                [[float(d) for d in m.degrees] for m in self.monomials], dtype=float
            )
        else:
            self._degs = np.zeros((0, n))

    # -- CostFunction interface -------------------------------------------

    def evaluate(self, x) -> float:
        x = self.check_vector(x)
        if not self.monomials:
            return 0.0
        return float(_kernels.poly_value(self._coeffs, self._degs, x))

    def gradient(self, x) -> np.ndarray:
        x = self.check_vector(x)
        if not self.monomials:
            return np.zeros(self.n)
        return np.asarray(_kernels.poly_gradient(self._coeffs, self._degs, x))

    def hessian(self, x) -> np.ndarray:
        """Analytic Hessian.  Fractional degrees below 2 need interior x."""
        x = self.check_vector(x)
        h = np.zeros((self.n, self.n))
        for m in self.monomials:
            degs = np.array([float(d) for d in m.degrees])
            support = np.nonzero(degs)[0]
            for ai, i in enumerate(support):
                for j in support[ai:]:
                    if i == j:
                        factor = degs[i] * (degs[i] - 1.0)
                        if factor == 0.0:
                            continue
                        shift = degs.copy()
                        shift[i] -= 2.0
                    else:
                        factor = degs[i] * degs[j]
                        shift = degs.copy()
                        shift[i] -= 1.0
                        shift[j] -= 1.0
                    term = m.coeff * factor
                    for l in support:
                        if shift[l] != 0.0:
                            term *= x[l] ** shift[l]
                    h[i, j] += term
                    if i != j:
                        h[j, i] += term
        return h

    def curvature_degree(self) -> float:
        return float(self.max_degree())

    # -- structure queries --------------------------------------------------

    def max_degree(self) -> Fraction:
        if not self.monomials:
            return Fraction(0)
        return max(m.total_degree() for m in self.monomials)

    def min_degree(self) -> Fraction:
        if not self.monomials:
            return Fraction(0)
        return min(m.total_degree() for m in self.monomials)

    def coefficient(self, degrees: Sequence[DegreeLike]) -> float:
        degs = tuple(as_degree(d) for d in degrees)
        for m in self.monomials:
            if m.degrees == degs:
                return m.coeff
        return 0.0

    def variables(self) -> list[int]:
        """Indices of variables appearing in some term."""
        present = set()
        for m in self.monomials:
            present.update(i for i, d in enumerate(m.degrees) if d > 0)
        return sorted(present)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self.monomials == other.monomials

    def __hash__(self):
        return hash((self.n, self.monomials))

    def __repr__(self):
        terms = " + ".join(
            f"{m.coeff:g}*x^{tuple(str(d) for d in m.degrees)}" for m in self.monomials
        )
        return f"Polynomial(n={self.n}, {terms or '0'})"


@dataclass(frozen=True)
class ConvexityProfile:
    """Degree-derived structure report.

    ``lambda_mono`` is the largest power t such that every variable occurs
    with degree >= 1 + t in every term containing it; with that much slack
    each gradient-to-power ratio grad_i(x)/x_i**t is monotone.  It is absent
    (None) when some variable occurs with degree exactly 1.
    """

    tau: float
    min_degree: float
    is_homogeneous: bool
    lambda_mono: Optional[float]
    tau_exact: Fraction
    lambda_mono_exact: Optional[Fraction]


def profile(p: Polynomial) -> ConvexityProfile:
    """Compute the degree profile of a canonical polynomial."""
    if not p.monomials:
        return ConvexityProfile(0.0, 0.0, True, None, Fraction(0), None)
    totals = [m.total_degree() for m in p.monomials]
    tau = max(totals)
    min_deg = min(totals)
    homogeneous = all(t == tau for t in totals)
    occ_min: Optional[Fraction] = None
    for m in p.monomials:
        for d in m.degrees:
            if d > 0 and (occ_min is None or d < occ_min):
                occ_min = d
    lam = None
    if occ_min is not None and occ_min > 1:
        lam = occ_min - 1
    return ConvexityProfile(
        tau=float(tau),
        min_degree=float(min_deg),
        is_homogeneous=homogeneous,
        lambda_mono=float(lam) if lam is not None else None,
        tau_exact=tau,
        lambda_mono_exact=lam,
    )


@dataclass(frozen=True)
class ConvexityVerdict:
    convex: bool
    witness: Optional[np.ndarray]
    min_eigenvalue: float


def check_convexity(
    cost: CostFunction, trials: int = 64, seed: int = 0, tol: float = 1e-9
) -> ConvexityVerdict:
    """Sample Hessians at random interior points and test PSD-ness.

    Probabilistic acceptance: returns ``convex=False`` with a witness point
    as soon as some sampled Hessian has an eigenvalue below ``-tol`` times
    the local scale.  Scales are sampled log-uniformly over several decades
    to catch curvature that only turns negative far from the unit box.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        scale = 10.0 ** rng.uniform(-2, 2)
        x = scale * rng.uniform(0.1, 1.0, size=cost.n)
        h = cost.hessian(x)
        eigs = np.linalg.eigvalsh(0.5 * (h + h.T))
        ref = max(1.0, float(np.max(np.abs(eigs))))
        rel_min = float(eigs[0]) / ref
        if rel_min < worst:
            worst = rel_min
        if float(eigs[0]) < -tol * ref:
            return ConvexityVerdict(False, x, float(eigs[0]))
    return ConvexityVerdict(True, None, worst)
