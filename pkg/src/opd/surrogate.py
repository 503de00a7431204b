"""Surrogate cost constructions that strengthen gradient monotonicity.

The covering engine's matrix-independent guarantees need every variable to
occur with degree at least 1 + lambda ("lambda-monotone" gradient).  Two
degree-inflation surrogates provide this:

  * homogeneous polynomials: scale degrees by (1 + lambda) and weight each
    term by alpha**(lambda * d), where alpha_i is the tau-th root of the
    pure-power coefficient of x_i.  The result stays convex and sandwiches
    f**(1+lambda) within explicit powers of n.
  * arbitrary polynomials: raise each coefficient to 1 + lambda and scale
    degrees by 1 + lambda.  The result may be non-convex but compares
    against the convex envelope g = f**(1+lambda) term by term.

In addition, sums of p-th powers of non-negative linear forms get a
dedicated composite cost that applies the homogeneous construction per
form without expanding any polynomial.

Lambda defaults use 1/ceil(log2(.)) so the scaled degrees stay exact
rationals; the report records the formula used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .cost import CostFunction
from .errors import LeadTermMissing, NotHomogeneous
from .poly import Polynomial, profile


def default_lambda(count: int | float) -> Fraction:
    """1 / ceil(log2(count)), clamped to 1 for count <= 2.

    Rational by construction so degree scaling by (1 + lambda) is exact.
    """
    if count <= 2:
        return Fraction(1)
    return Fraction(1, math.ceil(math.log2(count)))


def validate_lead_terms(f: Polynomial):
    """Require the pure power x_i**tau for every variable used by f.

    For convex homogeneous polynomials with non-negative coefficients this
    always holds, so a failure certifies non-convexity.  Returns the list
    of offending variables instead of raising when ``f`` merely lacks them.
    """
    prof = profile(f)
    if not prof.is_homogeneous:
        raise NotHomogeneous("lead-term validation applies to homogeneous polynomials")
    tau = prof.tau_exact
    missing = []
    for i in f.variables():
        pure = tuple(tau if j == i else Fraction(0) for j in range(f.n))
        if f.coefficient(pure) <= 0.0:
            missing.append(i)
    return missing


@dataclass(frozen=True)
class HomogeneousSurrogate:
    lam: Fraction
    alpha: np.ndarray
    surrogate: Polynomial  # degrees scaled by (1 + lam), terms weighted by alpha**(lam*d)
    base_tau: Fraction

    @property
    def tau(self) -> Fraction:
        return (1 + self.lam) * self.base_tau


def build_homogeneous_surrogate(f: Polynomial, lam: Fraction | float) -> HomogeneousSurrogate:
    """Degree-inflated convex surrogate for a homogeneous polynomial."""
    lam = Fraction(lam).limit_denominator(10**9) if not isinstance(lam, Fraction) else lam
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    missing = validate_lead_terms(f)
    if missing:
        raise LeadTermMissing(missing)
    tau = profile(f).tau_exact
    alpha = np.ones(f.n)
    for i in f.variables():
        pure = tuple(tau if j == i else Fraction(0) for j in range(f.n))
        alpha[i] = f.coefficient(pure) ** (1.0 / float(tau))
    terms = []
    for m in f.monomials:
        weight = m.coeff
        for i, d in enumerate(m.degrees):
            if d > 0:
                weight *= alpha[i] ** float(lam * d)
        terms.append((weight, tuple((1 + lam) * d for d in m.degrees)))
    return HomogeneousSurrogate(lam, alpha, Polynomial(f.n, terms), tau)


@dataclass(frozen=True)
class GeneralSurrogate:
    lam: Fraction
    surrogate: Polynomial  # coeff -> coeff**(1+lam), degrees -> (1+lam)*degrees
    term_count: int
    base_tau: Fraction

    @property
    def tau(self) -> Fraction:
        return (1 + self.lam) * self.base_tau


def build_general_surrogate(f: Polynomial, lam: Fraction | float) -> GeneralSurrogate:
    """Degree- and coefficient-inflated surrogate for any polynomial."""
    lam = Fraction(lam).limit_denominator(10**9) if not isinstance(lam, Fraction) else lam
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    terms = [
        (m.coeff ** (1.0 + float(lam)), tuple((1 + lam) * d for d in m.degrees))
        for m in f.monomials
    ]
    return GeneralSurrogate(
        lam, Polynomial(f.n, terms), len(f.monomials), profile(f).tau_exact
    )


def homogeneous_sandwich_slacks(
    f: Polynomial, surrogate: HomogeneousSurrogate, x
) -> tuple[float, float]:
    """Slacks of the two-sided comparison between f**(1+lam) and the surrogate.

    Returns (upper_slack, lower_slack) where
      upper_slack = n**(lam*tau) * fhat(x) - f(x)**(1+lam)
      lower_slack = f(x)**(1+lam) - fhat(x) / (2 n**(2 tau lam))
    Both are non-negative up to rounding for a valid construction.
    """
    x = f.check_vector(x)
    lam = float(surrogate.lam)
    tau = float(surrogate.base_tau)
    n = f.n
    fx = f.evaluate(x) ** (1.0 + lam)
    hx = surrogate.surrogate.evaluate(x)
    upper = n ** (lam * tau) * hx - fx
    lower = fx - hx / (2.0 * n ** (2.0 * tau * lam))
    return upper, lower


class PolynomialPower(CostFunction):
    """Composite cost base(x)**exponent, kept unexpanded.

    Serves as the convex comparison function for the general surrogate
    (exponent = 1 + lambda) and is evaluated through the chain rule.
    """

    def __init__(self, base: Polynomial, exponent: float):
        if exponent < 1.0:
            raise ValueError("exponent must be >= 1")
        self.base = base
        self.exponent = float(exponent)
        self.n = base.n

    def evaluate(self, x) -> float:
        return self.base.evaluate(x) ** self.exponent

    def gradient(self, x) -> np.ndarray:
        v = self.base.evaluate(x)
        if v == 0.0:
            # every term of base**e with e>1 has degree > 1 along the zeros
            return np.zeros(self.n) if self.exponent > 1.0 else self.base.gradient(x)
        return self.exponent * v ** (self.exponent - 1.0) * self.base.gradient(x)

    def hessian(self, x) -> np.ndarray:
        v = self.base.evaluate(x)
        g = self.base.gradient(x)
        h = self.base.hessian(x)
        e = self.exponent
        if v == 0.0:
            return np.zeros((self.n, self.n))
        return e * v ** (e - 1.0) * h + e * (e - 1.0) * v ** (e - 2.0) * np.outer(g, g)

    def curvature_degree(self) -> float:
        return self.exponent * self.base.curvature_degree()


class LpSumCost(CostFunction):
    """Sum of p-th powers of non-negative linear forms: sum_k <c_k, x>**p."""

    def __init__(self, forms, p: float):
        forms = np.asarray(forms, dtype=float)
        if forms.ndim != 2 or forms.shape[0] == 0:
            raise ValueError("forms must be a non-empty (l, n) matrix")
        if np.any(forms < 0):
            raise ValueError("forms must be non-negative")
        if np.any(forms.sum(axis=1) == 0.0):
            raise ValueError("zero form vector")
        if p < 1:
            raise ValueError("p must be >= 1")
        self.forms = forms
        self.p = float(p)
        self.n = forms.shape[1]

    def evaluate(self, x) -> float:
        x = self.check_vector(x)
        return float(_kernels.forms_value(self.forms, 1.0, self.p, x))

    def gradient(self, x) -> np.ndarray:
        x = self.check_vector(x)
        s = self.forms @ x
        return (self.p * np.power(s, self.p - 1.0)) @ self.forms

    def hessian(self, x) -> np.ndarray:
        x = self.check_vector(x)
        s = self.forms @ x
        w = self.p * (self.p - 1.0) * np.power(s, self.p - 2.0)
        return (self.forms.T * w) @ self.forms

    def curvature_degree(self) -> float:
        return self.p

    def sparsity(self) -> int:
        return int(np.max(np.count_nonzero(self.forms, axis=1)))


class PowerOfLinearForms(CostFunction):
    """Surrogate for an LpSumCost: sum_k <chat_k, x**(1+lam)> ** (p/(1+lam)).

    Each coordinate is raised to 1 + lam before the inner product, which
    makes the gradient lambda-monotone while keeping the Euler identity
    <grad h(x), x> = p * h(x) exact.
    """

    def __init__(self, base: LpSumCost, lam: Fraction | float):
        lam = float(lam)
        if not 0.0 < lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1]")
        if base.p < 2:
            raise ValueError("the surrogate construction needs p >= 2")
        self.base = base
        self.lam = lam
        self.n = base.n
        self.p = base.p
        # alpha absorbs into the form weights: chat = c**(1+lam)
        self.chat = np.power(base.forms, 1.0 + lam)
        self.inner = 1.0 + lam
        self.outer = base.p / (1.0 + lam)

    def evaluate(self, x) -> float:
        x = self.check_vector(x)
        return float(_kernels.forms_value(self.chat, self.inner, self.outer, x))

    def gradient(self, x) -> np.ndarray:
        x = self.check_vector(x)
        return np.asarray(_kernels.forms_gradient(self.chat, self.inner, self.outer, x))

    def hessian(self, x) -> np.ndarray:
        x = self.check_vector(x)
        s = self.chat @ np.power(x, self.inner)
        xi = np.power(x, self.inner - 1.0)
        q = self.outer
        h = np.zeros((self.n, self.n))
        for k in range(self.chat.shape[0]):
            if s[k] == 0.0:
                continue
            u = self.chat[k] * xi * self.inner
            h += q * (q - 1.0) * s[k] ** (q - 2.0) * np.outer(u, u) / self.inner
            # within-form diagonal curvature
            diag = q * s[k] ** (q - 1.0) * self.chat[k] * self.inner * (self.inner - 1.0)
            h[np.diag_indices(self.n)] += np.where(
                x > 0.0, diag * np.power(x, self.inner - 2.0), 0.0
            )
        return h

    def curvature_degree(self) -> float:
        return self.p

    def lambda_mono(self) -> float:
        return self.lam

    def per_form_sandwich_slacks(self, x) -> tuple[float, float]:
        """Per-form two-sided comparison, aggregated over forms.

        With d the sparsity, each original form power f_k obeys
          (1/(2 d**(2 lam p)))**(1/(1+lam)) * h_k <= f_k
                                     <= d**(lam p/(1+lam)) * h_k.
        Returns the minimum (upper, lower) slack across forms.
        """
        x = self.check_vector(x)
        d = self.base.sparsity()
        lam, p = self.lam, self.p
        s_orig = self.base.forms @ x
        s_hat = self.chat @ np.power(x, self.inner)
        fk = np.power(s_orig, p)
        hk = np.power(s_hat, self.outer)
        upper = d ** (lam * p / (1.0 + lam)) * hk - fk
        lower = fk - (1.0 / (2.0 * d ** (2.0 * lam * p))) ** (1.0 / (1.0 + lam)) * hk
        return float(np.min(upper)), float(np.min(lower))


def build_lp_norm_cost(forms, p: float, lam: Fraction | float | None = None):
    """Construct the (base, surrogate) pair for a sum of form powers.

    ``lam`` defaults to 1/ceil(log2(d)) where d is the sparsity.
    """
    base = LpSumCost(forms, p)
    if lam is None:
        lam = default_lambda(base.sparsity())
    return base, PowerOfLinearForms(base, lam)
