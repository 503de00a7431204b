"""Online convex packing engine.

Requests arrive as consumption vectors a_k; the engine picks each dual
mass y_k on arrival by growing it while <a_k, x> < 1, where the resource
price vector is pinned to x = grad f*(rho z) with z = A^T y.  Because x is
a closed-form function of z and z moves along the fixed ray a_k within a
round, the stopping time is the root of a one-dimensional monotone
function; exponential bracketing plus bisection replaces any ODE work and
removes discretization error from the guarantees.

Linear terms of the cost make the problem unbounded in the worst case, so
they are split off first: write f*(z) = <c, z> + residual(z) with
c = grad f*(0).  A round whose adjusted demand b_k = 1 - <a_k, c> is
non-positive is automatically satisfied (y_k = 0); the rest of the run
works on the rescaled vectors a_k / b_k against the residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conjugate import ConjugateOracle, conjugate_eval
from .errors import DegenerateParams, DimensionMismatch, Unbounded
from .poly import Polynomial

BRACKET_START = 1e-6
BISECT_MAX = 200
ROOT_REL_TOL = 1e-12
DIVERGENCE_FACTOR = 1e15


@dataclass(frozen=True)
class PackingInstance:
    """Dimension, packing cost (charged on z = A^T y) and request stream."""

    n: int
    cost_star: Polynomial
    rounds: tuple[np.ndarray, ...]

    @staticmethod
    def create(cost_star: Polynomial, rounds: Sequence[Sequence[float]]) -> "PackingInstance":
        arrs = []
        for k, a in enumerate(rounds):
            a = np.asarray(a, dtype=float)
            if a.shape != (cost_star.n,):
                raise DimensionMismatch(f"round {k}: expected {cost_star.n} coordinates")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"round {k}: entries must be finite and non-negative")
            arrs.append(a)
        return PackingInstance(cost_star.n, cost_star, tuple(arrs))

    @property
    def m(self) -> int:
        return len(self.rounds)


@dataclass(frozen=True)
class PackingPreprocessed:
    """Linear/residual split of the cost plus per-round demand adjustments."""

    linear_part: np.ndarray  # c = grad f*(0)
    residual: Polynomial  # terms of degree > 1
    b: np.ndarray  # b_k = 1 - <a_k, c>
    skip: np.ndarray  # rounds with b_k <= 0 are auto-satisfied
    lam: float  # minimum degree of the residual
    tau: float  # maximum degree of the residual


def preprocess_linear(instance: PackingInstance) -> PackingPreprocessed:
    """Split off the linear part and precompute the adjusted demands."""
    f = instance.cost_star
    linear = np.zeros(instance.n)
    residual_terms = []
    for mono in f.monomials:
        total = mono.total_degree()
        if total == 1:
            i = next(j for j, d in enumerate(mono.degrees) if d > 0)
            linear[i] += mono.coeff
        else:
            residual_terms.append((mono.coeff, mono.degrees))
    residual = Polynomial(instance.n, residual_terms)
    b = np.array([1.0 - float(a @ linear) for a in instance.rounds])
    skip = b <= 0.0
    if not residual.monomials:
        hot = np.nonzero(~skip)[0]
        if hot.size:
            raise Unbounded(
                f"purely linear cost with positive surplus at round {int(hot[0])}: "
                "the objective grows without bound"
            )
        return PackingPreprocessed(linear, residual, b, skip, math.inf, 0.0)
    lam = float(residual.min_degree())
    if lam <= 1.0:
        raise DegenerateParams("residual cost must have every term of degree > 1")
    return PackingPreprocessed(
        linear, residual, b, skip, lam, float(residual.max_degree())
    )


@dataclass
class PackingState:
    """Dual masses, aggregate demand and the induced price vector."""

    y: list[float] = field(default_factory=list)  # original-space masses
    w: list[float] = field(default_factory=list)  # rescaled masses actually grown
    z: np.ndarray = None  # A^T y (identical in both spaces)
    x: np.ndarray = None  # grad residual(rho z)
    round_log: list[dict] = field(default_factory=list)


def run_packing_round(state: PackingState, a_scaled: np.ndarray, residual: Polynomial, rho: float) -> float:
    """Grow one dual mass until <a_scaled, grad residual(rho z)> reaches 1.

    Returns the mass found by exponential bracketing + bisection; raises
    :class:`Unbounded` if the coverage never reaches 1 before the
    divergence bound.
    """

    def coverage(t: float) -> float:
        return float(a_scaled @ residual.gradient(rho * (state.z + t * a_scaled)))

    if coverage(0.0) >= 1.0:
        return 0.0
    amax = float(np.max(a_scaled))
    if amax <= 0.0:
        raise Unbounded("request consumes nothing but has positive surplus")
    lo = 0.0
    hi = BRACKET_START / max(1.0, amax)
    t_cap = DIVERGENCE_FACTOR * max(1.0, 1.0 / amax)
    while coverage(hi) < 1.0:
        lo = hi
        hi *= 2.0
        if hi > t_cap:
            raise Unbounded("coverage never reaches 1 within the divergence bound")
    for _ in range(BISECT_MAX):
        if hi - lo <= ROOT_REL_TOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if coverage(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass
class PackingOutcome:
    state: PackingState
    instance: PackingInstance
    pre: PackingPreprocessed
    rho: float
    objective: float  # P(y) on the original cost
    scaled_objective: float  # sum w - residual(z); equals objective identically
    price_cost: float  # value of the covering dual induced by the final prices
    price_cost_crosscheck: float  # same number through the numeric conjugate
    dual_sum_w: float
    dual_sum_y: float
    certificate: float  # (tau - 1) * rho**lam / (rho**(lam-1) - 1)
    bound_formula: str
    worst_constraint_slack: float  # min over non-skipped rounds of <a/b, x> - 1
    residual_at_rho_z: float


def resolve_rho_packing(lam: float) -> float:
    """rho = lam**(1/(lam-1)); the growth-rate sweet spot for the certificate."""
    if lam <= 1.0:
        raise DegenerateParams("lambda must exceed 1")
    return lam ** (1.0 / (lam - 1.0))


def run_packing(instance: PackingInstance, rho: Optional[float] = None):
    """Process the full request stream.  Returns (state, outcome)."""
    pre = preprocess_linear(instance)
    if not pre.residual.monomials:
        # all rounds auto-satisfied: empty run
        state = PackingState(z=np.zeros(instance.n), x=np.zeros(instance.n))
        for k in range(instance.m):
            state.y.append(0.0)
            state.w.append(0.0)
            state.round_log.append(
                {"round": k, "y_k": 0.0, "w_k": 0.0, "skipped": True, "z": state.z.copy()}
            )
        return state, _finish(instance, pre, state, rho if rho is not None else 2.0)
    if rho is None:
        rho = resolve_rho_packing(pre.lam)
    if rho <= 1.0:
        raise DegenerateParams("rho must exceed 1")
    state = PackingState(z=np.zeros(instance.n), x=pre.residual.gradient(np.zeros(instance.n)))
    for k, a in enumerate(instance.rounds):
        if pre.skip[k]:
            w_k = 0.0
            y_k = 0.0
        else:
            a_scaled = a / pre.b[k]
            w_k = run_packing_round(state, a_scaled, pre.residual, rho)
            y_k = w_k / pre.b[k]
            state.z = state.z + w_k * a_scaled
        state.w.append(w_k)
        state.y.append(y_k)
        state.x = pre.residual.gradient(rho * state.z)
        state.round_log.append(
            {
                "round": k,
                "y_k": y_k,
                "w_k": w_k,
                "skipped": bool(pre.skip[k]),
                "z": state.z.copy(),
            }
        )
    return state, _finish(instance, pre, state, rho)


def _finish(instance: PackingInstance, pre: PackingPreprocessed, state: PackingState, rho: float) -> PackingOutcome:
    z = state.z
    residual_z = pre.residual.evaluate(z) if pre.residual.monomials else 0.0
    objective = float(np.sum(state.y)) - instance.cost_star.evaluate(z)
    scaled_objective = float(np.sum(state.w)) - residual_z
    if pre.residual.monomials:
        rz = rho * z
        x = state.x
        price_cost = float(rz @ x) - pre.residual.evaluate(rz)
        star = conjugate_eval(ConjugateOracle(pre.residual), x)
        crosscheck = star.value
        lam, tau = pre.lam, pre.tau
        certificate = (tau - 1.0) * rho ** lam / (rho ** (lam - 1.0) - 1.0) if tau > 1.0 else math.inf
        formula = (
            f"(tau-1)*rho**lam/(rho**(lam-1)-1) = ({tau:g}-1)*{rho:g}**{lam:g}"
            f"/({rho:g}**{lam - 1:g}-1) = {certificate:.6g}"
        )
        slacks = [
            float(a @ state.x) / pre.b[k] - 1.0
            for k, a in enumerate(instance.rounds)
            if not pre.skip[k]
        ]
        worst = min(slacks) if slacks else 0.0
        residual_at = pre.residual.evaluate(rho * z)
    else:
        price_cost = crosscheck = residual_at = 0.0
        certificate, formula, worst = 1.0, "all rounds auto-satisfied", 0.0
    return PackingOutcome(
        state=state,
        instance=instance,
        pre=pre,
        rho=rho,
        objective=objective,
        scaled_objective=scaled_objective,
        price_cost=price_cost,
        price_cost_crosscheck=crosscheck,
        dual_sum_w=float(np.sum(state.w)),
        dual_sum_y=float(np.sum(state.y)),
        certificate=certificate,
        bound_formula=formula,
        worst_constraint_slack=worst,
        residual_at_rho_z=residual_at,
    )
