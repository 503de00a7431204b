"""Numeric convex conjugate: f*(z) = max_{x >= 0} { <x, z> - f(x) }.

For convex ``f`` the inner objective is concave, so multi-start projected
gradient ascent (projection = clamp at zero) converges; an active-set
Newton polish then drives the maximizer to near machine precision, which
the gradient-identity and closed-form test suites rely on.  Unbounded
conjugates (e.g. a z-coordinate that the cost never charges for) are
detected by the iterates running away and reported as +inf.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cost import CostFunction


@dataclass(frozen=True)
class ConjugateOracle:
    """Conjugation of ``base`` with fixed solver settings."""

    base: CostFunction
    max_iterations: int = 10_000
    tolerance: float = 1e-10
    divergence_bound: float = 1e12
    restarts: int = 3
    seed: int = 0
    newton_steps: int = 30


@dataclass(frozen=True)
class ConjugateValue:
    """Either a finite conjugate value with its maximizer, or +inf."""

    value: float
    maximizer: Optional[np.ndarray] = field(default=None)

    @property
    def finite(self) -> bool:
        return np.isfinite(self.value)


def _objective(f: CostFunction, z: np.ndarray, x: np.ndarray) -> float:
    return float(np.dot(x, z)) - f.evaluate(x)


def _escapes_along_ray(oracle: ConjugateOracle, z, x, val) -> bool:
    """Probe whether the objective keeps increasing out to the divergence bound.

    A maximizer past the bound is reported as an unbounded conjugate, so it
    suffices to test each coordinate ray (and the joint uphill direction)
    at the bound itself.
    """
    f = oracle.base
    g = z - f.gradient(x)
    thresh = 1e-8 * (1.0 + float(np.linalg.norm(z)))
    up = g > thresh
    if not np.any(up):
        return False
    span = oracle.divergence_bound
    for i in np.nonzero(up)[0]:
        probe = x.copy()
        probe[i] += span
        if _objective(f, z, probe) > val:
            return True
    if np.count_nonzero(up) > 1:
        probe = x + span * up.astype(float)
        if _objective(f, z, probe) > val:
            return True
    return False


def _ascend(oracle: ConjugateOracle, z: np.ndarray, x0: np.ndarray):
    """Projected gradient ascent with backtracking from a single start.

    Returns (x, objective) or None on divergence.
    """
    f = oracle.base
    x = np.maximum(x0, 0.0)
    val = _objective(f, z, x)
    step = 1.0
    tol = oracle.tolerance * (1.0 + float(np.linalg.norm(z)))
    converged = False
    for it in range(oracle.max_iterations):
        g = z - f.gradient(x)
        proj = np.where((x <= 0.0) & (g < 0.0), 0.0, g)
        if float(np.linalg.norm(proj)) <= tol:
            converged = True
            break
        improved = False
        for _ in range(60):
            cand = np.maximum(x + step * g, 0.0)
            cval = _objective(f, z, cand)
            if cval > val + 1e-18:
                x, val = cand, cval
                improved = True
                step *= 2.0
                break
            step *= 0.5
        if not improved:
            break
        if float(np.max(np.abs(x))) > oracle.divergence_bound:
            return None
        if (it == 100 or (it + 1) % 1000 == 0) and _escapes_along_ray(oracle, z, x, val):
            return None
    if not converged and _escapes_along_ray(oracle, z, x, val):
        return None
    return x, val


def _newton_polish(oracle: ConjugateOracle, z: np.ndarray, x: np.ndarray):
    """Drive z = grad f(x) to machine precision on the inactive set."""
    f = oracle.base
    x = x.copy()
    val = _objective(f, z, x)
    for _ in range(oracle.newton_steps):
        g = z - f.gradient(x)
        hess = f.hessian(np.maximum(x, 1e-300))
        active = (x <= 1e-14) & (g <= 0.0)
        # flat directions (no curvature, no slope) have nothing to polish
        # and would only invite runaway steps along exactly-flat rays
        curved = np.abs(np.diag(hess)) > 1e-300
        free = ~active & (curved | (np.abs(g) > 1e-12 * (1.0 + float(np.linalg.norm(z)))))
        if not np.any(free):
            break
        gf = g[free]
        if float(np.linalg.norm(gf)) <= 1e-16 * (1.0 + float(np.linalg.norm(z))):
            break
        h = hess[np.ix_(free, free)]
        try:
            delta = np.linalg.solve(h + 1e-30 * np.eye(h.shape[0]), gf)
        except np.linalg.LinAlgError:
            break
        if float(np.max(np.abs(delta))) > 1e6 * (1.0 + float(np.max(np.abs(x)))):
            break
        cand = x.copy()
        cand[free] = np.maximum(cand[free] + delta, 0.0)
        cval = _objective(f, z, cand)
        if cval >= val:
            x, val = cand, cval
        else:
            break
    return x, val


def conjugate_eval(oracle: ConjugateOracle, z) -> ConjugateValue:
    """Evaluate the conjugate of ``oracle.base`` at ``z >= 0``."""
    f = oracle.base
    z = f.check_vector(z)
    if np.all(z == 0.0):
        return ConjugateValue(0.0, np.zeros(f.n))
    starts = [np.zeros(f.n), np.ones(f.n)]
    rng = np.random.default_rng(zlib.crc32(z.tobytes()) ^ oracle.seed)
    for _ in range(oracle.restarts):
        starts.append(10.0 ** rng.uniform(-1, 1) * rng.uniform(0.0, 1.0, size=f.n))
    best_x, best_val = None, -np.inf
    for x0 in starts:
        res = _ascend(oracle, z, x0)
        if res is None:
            return ConjugateValue(np.inf)
        x, val = res
        if val > best_val:
            best_x, best_val = x, val
    best_x, best_val = _newton_polish(oracle, z, best_x)
    # value is a max of expressions through 0 at x=0, hence non-negative
    return ConjugateValue(max(best_val, 0.0), best_x)


def conjugate_of_gradient_identity_check(f: CostFunction, x, **settings) -> float:
    """|f*(grad f(x)) - (<x, grad f(x)> - f(x))|, a test primitive.

    Propagates +inf if the numeric conjugate diverges.
    """
    x = f.check_vector(x)
    g = f.gradient(x)
    oracle = ConjugateOracle(f, **settings)
    star = conjugate_eval(oracle, g)
    if not star.finite:
        return np.inf
    closed = float(np.dot(x, g)) - f.evaluate(x)
    return abs(star.value - closed)


def separable_power_conjugate(coeffs, powers, z) -> float:
    """Closed-form conjugate of sum_i c_i * x_i**p_i with all p_i > 1.

    Used as an independent oracle when validating the numeric conjugate:
    the maximizer solves z_i = c_i p_i x_i**(p_i - 1) coordinate-wise.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    powers = np.asarray(powers, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(powers <= 1.0):
        raise ValueError("closed form requires every power > 1")
    total = 0.0
    for c, p, zi in zip(coeffs, powers, z):
        if zi <= 0.0 or c == 0.0:
            continue
        x = (zi / (c * p)) ** (1.0 / (p - 1.0))
        total += zi * x - c * x ** p
    return total
