"""Online convex covering engine.

Constraints <a_k, x> >= 1 arrive one at a time; the primal vector x may
only increase.  Within a round the engine grows a dual mass y_k and moves
every constrained coordinate multiplicatively,

    dx_i/dy_k = rho * a_ki * x_i / grad_i f(x),

until the constraint is met, keeping z = A^T y up to date.  The guarantees
depend only on path integrals of this flow, so the integrator is explicit
Euler with a per-step cap on the maximum relative coordinate change plus an
exact landing step on the constraint boundary.  Every quantity the
analysis-side inequalities need is accumulated exactly along the way:

  * ``first_order``: sum over steps of <a_k, x> * dy, which ties the dual
    mass to the primal cost increase; the convexity gap between the true
    cost increase and this sum is the (reported) integration budget.
  * ``grad_log_sum`` / ``grad_pow_sum``: per-coordinate accumulators that
    dominate z through the telescoping log / power integrals, giving the
    coordinate-wise bounds z <= (ln mu / rho) grad f and
    z <= (1/(lambda rho)) grad f up to a second, reported budget.

Zero starts are handled by lazily seeding every constrained coordinate to
a floor eta at the start of a round (a legal monotone online move whose
cost is reported), and coordinates whose partial derivative is identically
zero are advanced by a free increase that cannot change the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .conjugate import ConjugateOracle, ConjugateValue, conjugate_eval
from .cost import CostFunction
from .errors import (
    DegenerateParams,
    DimensionMismatch,
    InvariantViolation,
    StallError,
    StepLimitExceeded,
)
from .poly import Polynomial, profile
from .surrogate import (
    GeneralSurrogate,
    HomogeneousSurrogate,
    LpSumCost,
    PolynomialPower,
    PowerOfLinearForms,
    build_general_surrogate,
    build_homogeneous_surrogate,
    default_lambda,
)

ZERO_GRAD_TOL = 1e-14


@dataclass(frozen=True)
class CoveringInstance:
    """Dimension, cost and the ordered stream of constraint vectors."""

    n: int
    cost: CostFunction
    rounds: tuple[np.ndarray, ...]

    @staticmethod
    def create(cost: CostFunction, rounds: Sequence[Sequence[float]]) -> "CoveringInstance":
        arrs = []
        for k, a in enumerate(rounds):
            a = np.asarray(a, dtype=float)
            if a.shape != (cost.n,):
                raise DimensionMismatch(f"round {k}: expected {cost.n} coordinates")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"round {k}: entries must be finite and non-negative")
            if not np.any(a > 0):
                raise ValueError(f"round {k}: needs at least one positive entry")
            arrs.append(a)
        return CoveringInstance(cost.n, cost, tuple(arrs))

    @property
    def m(self) -> int:
        return len(self.rounds)

    def upper_bounds(self) -> np.ndarray:
        """U_i = 1 / min over rounds of the positive entries a_ki (inf if untouched)."""
        u = np.full(self.n, np.inf)
        for a in self.rounds:
            pos = a > 0
            u[pos] = np.minimum(u[pos], 1.0 / a[pos])
        # x_i never needs to exceed U_i, so U is a valid cap for any run
        out = np.full(self.n, np.inf)
        touched = np.isfinite(u)
        out[touched] = np.array(
            [max(1.0 / a[i] for a in self.rounds if a[i] > 0) for i in np.nonzero(touched)[0]]
        )
        return out


@dataclass
class CoveringConfig:
    rho: float = 1.0
    initial: Optional[np.ndarray] = None  # None means start from zero with seeding
    eta: float = 0.0  # seed floor; 0 disables seeding
    step_rel: float = 0.0025  # target max relative coordinate change per step
    feas_tol: float = 1e-9
    max_steps_per_round: int = 400_000
    lam: Optional[float] = None  # enables the power-ratio z accounting
    mu: Optional[float] = None  # enables the log-ratio z bound (needs initial > 0)

    def __post_init__(self):
        if self.rho <= 0:
            raise DegenerateParams("rho must be positive")
        if not 0 < self.step_rel <= 0.01:
            raise ValueError("step_rel must lie in (0, 0.01]")
        if not 0 < self.feas_tol <= 1e-6:
            raise ValueError("feas_tol must lie in (0, 1e-6]")


@dataclass
class RoundRecord:
    index: int
    y_k: float
    f_before: float  # after seeding
    f_after: float
    seed_cost: float
    slack: float  # <a_k, x> - 1 at round end
    steps: int
    free_increase: bool
    first_order: float  # sum of <a_k, x> dy within the round
    x_after: np.ndarray
    z_after: np.ndarray


@dataclass
class PrimalDualState:
    """The evolving primal/dual vectors plus the per-round log."""

    x: np.ndarray
    y: list[float]
    z: np.ndarray
    rounds: list[RoundRecord] = field(default_factory=list)
    first_order_total: float = 0.0
    seed_cost_total: float = 0.0
    grad_log_sum: np.ndarray = None
    grad_pow_sum: np.ndarray = None

    @property
    def y_sum(self) -> float:
        return float(sum(self.y))


def seed_floor(instance: CoveringInstance, multiplier: float = 1e-9) -> float:
    """Seed floor eta: multiplier times the smallest single-constraint target.

    The target for coordinate i is 1/max_k a_ki, the level at which the
    easiest constraint touching i is satisfied by i alone.
    """
    best = np.inf
    for a in instance.rounds:
        pos = a > 0
        if np.any(pos):
            best = min(best, float(1.0 / np.max(a[pos])))
    if not np.isfinite(best):
        raise ValueError("instance has no constrained coordinate")
    return multiplier * best


def run_round(
    state: PrimalDualState, a: np.ndarray, cost: CostFunction, config: CoveringConfig, index: int = -1
) -> PrimalDualState:
    """Process one constraint: grow x (and y_k, z) until <a, x> >= 1."""
    x = state.x
    n = x.shape[0]
    rho = config.rho
    f_pre_seed = cost.evaluate(x)

    seed_cost = 0.0
    if config.eta > 0.0:
        need = (a > 0) & (x < config.eta)
        if np.any(need):
            x[need] = config.eta
            seed_cost = cost.evaluate(x) - f_pre_seed
            state.seed_cost_total += seed_cost

    f_before = f_pre_seed + seed_cost
    y_k = 0.0
    s1 = 0.0
    steps = 0
    free_used = False
    adotx = float(a @ x)

    if adotx < 1.0 - config.feas_tol:
        moving = a > 0.0
        g = cost.gradient(x)
        # For non-negative coefficients a vanishing partial derivative is a
        # structural zero (some co-factor coordinate is 0), so it shows up as
        # an exact 0.0; confirm by probing with the coordinate at unit scale,
        # which rules out merely-tiny gradients near the seed floor.
        free = np.zeros(x.shape[0], dtype=bool)
        for i in np.nonzero(moving & (g <= ZERO_GRAD_TOL))[0]:
            probe = x.copy()
            probe[i] = max(probe[i], 1.0)
            if cost.gradient(probe)[i] <= ZERO_GRAD_TOL:
                free[i] = True
        if np.any(free):
            # a zero partial derivative stays zero along its own axis, so the
            # coordinate can absorb the whole constraint at no cost
            i = int(np.nonzero(free)[0][0])
            x[i] += (1.0 - adotx) / a[i]
            free_used = True
            f_now = cost.evaluate(x)
            if abs(f_now - f_before) > 1e-9 * (1.0 + abs(f_before)):
                raise InvariantViolation(
                    f"free increase changed the cost by {f_now - f_before}"
                )
            adotx = float(a @ x)
        else:
            if np.any(moving & (x <= 0.0)):
                raise StallError(
                    "a constrained coordinate is zero with no seed floor configured"
                )
            lam = config.lam
            do_log = state.grad_log_sum is not None
            do_pow = state.grad_pow_sum is not None and lam is not None
            while adotx < 1.0 - 1e-15:
                rel = np.zeros(n)
                rel[moving] = rho * a[moving] / g[moving]
                rate = rel * x
                a_rate = float(a @ rate)
                if a_rate <= 0.0:
                    raise StallError("constraint cannot progress: all rates vanish")
                dy = min(config.step_rel / float(np.max(rel[moving])), (1.0 - adotx) / a_rate)
                dx = rate * dy
                s1 += adotx * dy
                if do_log:
                    inc = np.zeros(n)
                    inc[moving] = g[moving] * np.log1p(dx[moving] / x[moving])
                    state.grad_log_sum += inc
                if do_pow:
                    xm = x[moving]
                    state.grad_pow_sum[moving] += (
                        g[moving]
                        * ((xm + dx[moving]) ** lam - xm ** lam)
                        / (lam * xm ** lam)
                    )
                x += dx
                y_k += dy
                adotx = float(a @ x)
                steps += 1
                if steps > config.max_steps_per_round:
                    raise StepLimitExceeded(
                        f"round {index}: exceeded {config.max_steps_per_round} steps"
                    )
                if adotx < 1.0 - 1e-15:
                    g = cost.gradient(x)

    state.z += a * y_k
    state.y.append(y_k)
    state.first_order_total += s1
    f_after = cost.evaluate(x)
    state.rounds.append(
        RoundRecord(
            index=index,
            y_k=y_k,
            f_before=f_before,
            f_after=f_after,
            seed_cost=seed_cost,
            slack=adotx - 1.0,
            steps=steps,
            free_increase=free_used,
            first_order=s1,
            x_after=x.copy(),
            z_after=state.z.copy(),
        )
    )
    return state


@dataclass
class CoveringOutcome:
    """Everything a report needs about a finished covering run."""

    state: PrimalDualState
    instance: CoveringInstance
    run_cost: CostFunction  # the cost the engine integrated (surrogate in pipelines)
    mode: str
    rho: float
    lam: Optional[float]
    mu: Optional[float]
    eta: float
    additive_term: float  # curvature_degree * f(initial) in the warm-start mode
    bound_run: float  # certificate on the run cost vs its own optimum
    bound_base: float  # certificate on the instance cost vs its optimum
    bound_formula: str
    base_cost_final: float  # instance cost at the final x
    run_cost_final: float
    dual_evaluator: Optional[object] = None  # callable z -> upper bound on run-cost conjugate

    def budgets(self) -> dict:
        st = self.state
        f0 = self.run_cost.evaluate(
            np.zeros(self.instance.n) if self.mode != "general" else self._initial
        )
        # convexity gap between the true cost increase and its first-order
        # accounting, in cost units: the slice of the increase the dual
        # mass is not required to cover
        e_total = (self.run_cost_final - f0 - st.seed_cost_total) - self.rho * st.first_order_total
        out = {
            "integration_budget": max(0.0, e_total),
            "seed_cost": st.seed_cost_total,
        }
        if st.grad_log_sum is not None:
            out["z_log_budget"] = float(np.max(np.maximum(st.z - st.grad_log_sum / self.rho, 0.0)))
        if st.grad_pow_sum is not None:
            out["z_pow_budget"] = float(np.max(np.maximum(st.z - st.grad_pow_sum / self.rho, 0.0)))
        return out

    _initial: np.ndarray = None


def run_covering(instance: CoveringInstance, config: CoveringConfig, mode: str = "direct"):
    """Run the engine over all rounds of ``instance`` with cost ``instance.cost``.

    Returns (state, outcome).  Pipelines that integrate a surrogate call
    :func:`_run_engine` directly with a different run cost.
    """
    return _run_engine(instance, instance.cost, config, mode)


def _run_engine(instance: CoveringInstance, run_cost: CostFunction, config: CoveringConfig, mode: str):
    n = instance.n
    if config.initial is not None:
        x0 = np.asarray(config.initial, dtype=float).copy()
        if x0.shape != (n,):
            raise DimensionMismatch("initial vector has wrong dimension")
        if np.any(x0 < 0):
            raise ValueError("initial vector must be non-negative")
    else:
        x0 = np.zeros(n)
    state = PrimalDualState(
        x=x0,
        y=[],
        z=np.zeros(n),
        grad_log_sum=np.zeros(n) if config.mu is not None else None,
        grad_pow_sum=np.zeros(n) if config.lam is not None else None,
    )
    initial_copy = x0.copy()
    for k, a in enumerate(instance.rounds):
        prev = state.x.copy()
        run_round(state, a, run_cost, config, index=k)
        if np.any(state.x < prev - 1e-15):
            raise InvariantViolation(f"round {k}: primal vector decreased")
    outcome = CoveringOutcome(
        state=state,
        instance=instance,
        run_cost=run_cost,
        mode=mode,
        rho=config.rho,
        lam=config.lam,
        mu=config.mu,
        eta=config.eta,
        additive_term=0.0,
        bound_run=math.nan,
        bound_base=math.nan,
        bound_formula="",
        base_cost_final=instance.cost.evaluate(state.x),
        run_cost_final=run_cost.evaluate(state.x),
    )
    outcome._initial = initial_copy
    return state, outcome


# ---------------------------------------------------------------------------
# parameter resolution
# ---------------------------------------------------------------------------


def resolve_params_general(instance: CoveringInstance, initial) -> tuple[float, float, float]:
    """Growth factor for the warm-start mode: rho = tau**(tau-1) * (ln mu)**tau.

    mu is the largest ratio between the per-coordinate cap U_i (reciprocal
    of the smallest positive entry of column i) and the start L_i.  Returns
    (rho, mu, additive) where additive = tau * f(L) is the reported
    additive error term.  Requires every touched coordinate to start
    positive.
    """
    initial = np.asarray(initial, dtype=float)
    u = instance.upper_bounds()
    touched = np.isfinite(u)
    if np.any(initial[touched] <= 0.0):
        raise DegenerateParams("warm start requires a positive initial value on every touched coordinate")
    mu = float(np.max(u[touched] / initial[touched])) if np.any(touched) else 1.0
    if mu <= 1.0:
        raise DegenerateParams("mu <= 1 leaves no room to move (initial already at the cap)")
    tau = instance.cost.curvature_degree()
    rho = tau ** (tau - 1.0) * math.log(mu) ** tau
    if rho <= 0.0:
        raise DegenerateParams("resolved rho is not positive")
    additive = tau * instance.cost.evaluate(initial)
    return rho, mu, additive


def rho_sharp(tau: float, lam: float) -> float:
    """rho = tau**(tau-1) / lam**tau for lambda-monotone runs."""
    if lam <= 0:
        raise DegenerateParams("lambda must be positive")
    return tau ** (tau - 1.0) / lam ** tau


def bound_sharp(tau: float, lam: float) -> float:
    return (tau / lam) ** tau


def resolve_params_sharp(prof) -> float:
    """Growth factor from a cost profile carrying lambda_mono."""
    if prof.lambda_mono is None:
        raise DegenerateParams("cost has no positive monotonicity margin (lambda_mono absent)")
    return rho_sharp(prof.tau, prof.lambda_mono)


# ---------------------------------------------------------------------------
# run modes
# ---------------------------------------------------------------------------


def _settle(outcome: CoveringOutcome, **kw):
    for key, value in kw.items():
        setattr(outcome, key, value)
    return outcome


def run_general_mode(
    instance: CoveringInstance,
    initial=None,
    rho: Optional[float] = None,
    step_rel: float = 0.0025,
) -> CoveringOutcome:
    """Warm-start mode: competitive with (tau ln mu)**tau plus tau*f(L)."""
    u = instance.upper_bounds()
    if initial is None:
        touched = np.isfinite(u)
        initial = np.where(touched, 1e-6 * np.where(touched, u, 1.0), 0.0)
        if np.any(~touched):
            initial[~touched] = 0.0
    initial = np.asarray(initial, dtype=float)
    rho_auto, mu, additive = resolve_params_general(instance, initial)
    rho = rho_auto if rho is None else float(rho)
    tau = instance.cost.curvature_degree()
    config = CoveringConfig(rho=rho, initial=initial, eta=0.0, step_rel=step_rel, mu=mu)
    _, outcome = run_covering(instance, config, mode="general")
    bound = (tau * math.log(mu)) ** tau
    outcome.additive_term = additive
    outcome.dual_evaluator = _convex_dual_evaluator(instance.cost)
    return _settle(
        outcome,
        bound_run=bound,
        bound_base=bound,
        bound_formula=f"(tau*ln(mu))**tau = ({tau:g}*ln({mu:g}))**{tau:g} plus additive tau*f(L) = {additive:.6g}",
    )


def run_sharp_mode(
    instance: CoveringInstance,
    eta_multiplier: float = 1e-9,
    rho: Optional[float] = None,
    step_rel: float = 0.0025,
) -> CoveringOutcome:
    """Zero-start mode for costs whose gradient has a monotonicity margin."""
    if not isinstance(instance.cost, Polynomial):
        raise DegenerateParams("sharp mode expects a polynomial cost")
    prof = profile(instance.cost)
    rho_auto = resolve_params_sharp(prof)
    rho = rho_auto if rho is None else float(rho)
    lam = prof.lambda_mono
    tau = prof.tau
    eta = seed_floor(instance, eta_multiplier)
    config = CoveringConfig(rho=rho, initial=None, eta=eta, step_rel=step_rel, lam=lam)
    _, outcome = run_covering(instance, config, mode="sharp")
    bound = bound_sharp(tau, lam)
    outcome.dual_evaluator = _convex_dual_evaluator(instance.cost)
    return _settle(
        outcome,
        bound_run=bound,
        bound_base=bound,
        bound_formula=f"(tau/lambda)**tau = ({tau:g}/{lam:g})**{tau:g} = {bound:.6g}",
    )


def run_homogeneous_pipeline(
    instance: CoveringInstance,
    lam: Optional[Fraction] = None,
    eta_multiplier: float = 1e-9,
    step_rel: float = 0.0025,
) -> CoveringOutcome:
    """Degree-inflation pipeline for homogeneous polynomial costs.

    Builds the convex surrogate, runs the zero-start engine on it, and
    reports against the original cost with the explicit constant chain
    (tau(1+lam)/lam)**tau * 2**(1/(1+lam)) * n**(3 lam tau / (1+lam)).
    """
    f = instance.cost
    if not isinstance(f, Polynomial):
        raise DegenerateParams("homogeneous pipeline expects a polynomial cost")
    if lam is None:
        lam = default_lambda(instance.n)
    surrogate = build_homogeneous_surrogate(f, lam)
    lamf = float(surrogate.lam)
    tau = float(surrogate.base_tau)
    tau_hat = float(surrogate.tau)
    rho = rho_sharp(tau_hat, lamf)
    eta = seed_floor(instance, eta_multiplier)
    config = CoveringConfig(rho=rho, initial=None, eta=eta, step_rel=step_rel, lam=lamf)
    _, outcome = _run_engine(instance, surrogate.surrogate, config, mode="homogeneous")
    bound_run = bound_sharp(tau_hat, lamf)
    n = instance.n
    bound_base = (
        (tau_hat / lamf) ** tau
        * 2.0 ** (1.0 / (1.0 + lamf))
        * n ** (3.0 * lamf * tau / (1.0 + lamf))
    )
    outcome.dual_evaluator = _convex_dual_evaluator(surrogate.surrogate)
    return _settle(
        outcome,
        lam=lamf,
        bound_run=bound_run,
        bound_base=bound_base,
        bound_formula=(
            f"(tau*(1+lam)/lam)**tau * 2**(1/(1+lam)) * n**(3*lam*tau/(1+lam)) "
            f"= ({tau:g}*{1 + lamf:g}/{lamf:g})**{tau:g} * 2**{1 / (1 + lamf):.4g} "
            f"* {n}**{3 * lamf * tau / (1 + lamf):.4g} = {bound_base:.6g}"
        ),
    )


def run_general_poly_pipeline(
    instance: CoveringInstance,
    lam: Optional[Fraction] = None,
    eta_multiplier: float = 1e-9,
    step_rel: float = 0.0025,
) -> CoveringOutcome:
    """Coefficient/degree-inflation pipeline for arbitrary polynomial costs."""
    f = instance.cost
    if not isinstance(f, Polynomial):
        raise DegenerateParams("general-poly pipeline expects a polynomial cost")
    count = max(len(f.monomials), 1)
    if lam is None:
        lam = default_lambda(count)
    surrogate = build_general_surrogate(f, lam)
    lamf = float(surrogate.lam)
    tau = float(surrogate.base_tau)
    tau_t = float(surrogate.tau)
    n_pow = count ** lamf
    rho = (n_pow / lamf) ** tau_t * tau_t ** (tau_t - 1.0)
    eta = seed_floor(instance, eta_multiplier)
    config = CoveringConfig(rho=rho, initial=None, eta=eta, step_rel=step_rel, lam=lamf)
    _, outcome = _run_engine(instance, surrogate.surrogate, config, mode="general-poly")
    bound_run = (tau_t * n_pow / lamf) ** tau_t
    bound_base = count ** (lamf / (1.0 + lamf)) * (tau_t * n_pow / lamf) ** tau
    envelope = PolynomialPower(f, 1.0 + lamf)
    outcome.dual_evaluator = _envelope_dual_evaluator(envelope, count ** lamf)
    return _settle(
        outcome,
        lam=lamf,
        bound_run=bound_run,
        bound_base=bound_base,
        bound_formula=(
            f"N**(lam/(1+lam)) * (tauT*N**lam/lam)**tau "
            f"= {count}**{lamf / (1 + lamf):.4g} * ({tau_t:g}*{n_pow:.4g}/{lamf:g})**{tau:g} "
            f"= {bound_base:.6g}"
        ),
    )


def run_lp_pipeline(
    instance: CoveringInstance,
    lam: Optional[Fraction] = None,
    eta_multiplier: float = 1e-9,
    step_rel: float = 0.0025,
) -> CoveringOutcome:
    """Pipeline for sums of p-th powers of linear forms (no expansion)."""
    f = instance.cost
    if not isinstance(f, LpSumCost):
        raise DegenerateParams("lp pipeline expects a sum-of-form-powers cost")
    d = f.sparsity()
    if lam is None:
        lam = default_lambda(d)
    h = PowerOfLinearForms(f, lam)
    lamf = h.lam
    p = f.p
    rho = rho_sharp(p, lamf)
    eta = seed_floor(instance, eta_multiplier)
    config = CoveringConfig(rho=rho, initial=None, eta=eta, step_rel=step_rel, lam=lamf)
    _, outcome = _run_engine(instance, h, config, mode="lp")
    bound_run = bound_sharp(p, lamf)
    bound_base = (
        (p / lamf) ** p * 2.0 ** (1.0 / (1.0 + lamf)) * d ** (3.0 * lamf * p / (1.0 + lamf))
    )
    outcome.dual_evaluator = _convex_dual_evaluator(h)
    return _settle(
        outcome,
        lam=lamf,
        bound_run=bound_run,
        bound_base=bound_base,
        bound_formula=(
            f"(p/lam)**p * 2**(1/(1+lam)) * d**(3*lam*p/(1+lam)) "
            f"= ({p:g}/{lamf:g})**{p:g} * 2**{1 / (1 + lamf):.4g} "
            f"* {d}**{3 * lamf * p / (1 + lamf):.4g} = {bound_base:.6g}"
        ),
    )


# ---------------------------------------------------------------------------
# dual-side evaluation for weak-duality checks
# ---------------------------------------------------------------------------


class _ConvexDual:
    """Numeric conjugate of a convex run cost."""

    def __init__(self, cost: CostFunction):
        self.oracle = ConjugateOracle(cost)
        self.exact = True

    def __call__(self, z) -> float:
        return conjugate_eval(self.oracle, z).value


class _EnvelopeDual:
    """Upper bound on the conjugate of a possibly non-convex surrogate.

    Uses the convex envelope comparison: the surrogate dominates
    envelope / factor, so its conjugate is at most
    (1/factor) * envelope*(factor * z).
    """

    def __init__(self, envelope: CostFunction, factor: float):
        self.oracle = ConjugateOracle(envelope)
        self.factor = float(factor)
        self.exact = False

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=float)
        star = conjugate_eval(self.oracle, self.factor * z)
        return star.value / self.factor


def _convex_dual_evaluator(cost: CostFunction):
    return _ConvexDual(cost)


def _envelope_dual_evaluator(envelope: CostFunction, factor: float):
    return _EnvelopeDual(envelope, factor)
