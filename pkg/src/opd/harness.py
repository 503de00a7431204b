"""Instance files, generators, the checking run driver, and re-validation.

An instance is a single self-describing JSON document; reals carry 17
significant digits (exact double round-trip) and rational degrees are
"p/q" strings, so parse(serialize(x)) reproduces x bit for bit.  The run
driver executes an engine mode, runs the matching offline oracle, checks
every runtime inequality the analysis promises (weak duality,
monotonicity, feasibility, the dual-growth and coordinate bounds, budget
sizes) and assembles a :class:`RunReport`; ``check`` re-validates a report
from its logged state snapshots alone.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional

import numpy as np

from .auction import AuctionInstance, run_auction
from .covering import (
    CoveringInstance,
    CoveringOutcome,
    run_general_mode,
    run_general_poly_pipeline,
    run_homogeneous_pipeline,
    run_lp_pipeline,
    run_sharp_mode,
)
from .errors import OpdError
from .offline import OracleResult, auction_opt, covering_opt, packing_opt
from .packing import PackingInstance, run_packing
from .poly import Polynomial, profile
from .reporting import CheckResult, RunReport, dumps_canonical
from .surrogate import (
    LpSumCost,
    build_general_surrogate,
    build_homogeneous_surrogate,
    default_lambda,
    validate_lead_terms,
)

FEAS_TOL = 1e-9
FP_SLACK = 1e-9  # generic floating-point allowance on exact-arithmetic identities


# ---------------------------------------------------------------------------
# instance serialization
# ---------------------------------------------------------------------------


def _degree_out(d: Fraction):
    return int(d) if d.denominator == 1 else str(d)


def cost_to_dict(cost) -> dict:
    if isinstance(cost, Polynomial):
        return {
            "monomials": [
                {"coeff": m.coeff, "degrees": [_degree_out(d) for d in m.degrees]}
                for m in cost.monomials
            ]
        }
    if isinstance(cost, LpSumCost):
        return {"lp_forms": {"p": cost.p, "vectors": [list(row) for row in cost.forms]}}
    raise TypeError(f"cannot serialize cost {type(cost)}")


def cost_from_dict(n: int, d: dict):
    if "monomials" in d:
        return Polynomial(
            n, [(m["coeff"], list(m["degrees"])) for m in d["monomials"]]
        )
    if "lp_forms" in d:
        spec = d["lp_forms"]
        return LpSumCost(np.asarray(spec["vectors"], dtype=float), float(spec["p"]))
    raise ValueError("cost must carry 'monomials' or 'lp_forms'")


def instance_to_dict(instance) -> dict:
    if isinstance(instance, CoveringInstance):
        kind, rounds = "covering", instance.rounds
    elif isinstance(instance, PackingInstance):
        kind, rounds = "packing", instance.rounds
    elif isinstance(instance, AuctionInstance):
        kind, rounds = "auction", None
    else:
        raise TypeError(f"unknown instance type {type(instance)}")
    doc = {
        "format": "opd-instance",
        "version": 1,
        "kind": kind,
        "n": instance.n,
        "cost": cost_to_dict(
            instance.cost if kind == "covering" else instance.cost_star
        ),
    }
    if rounds is not None:
        doc["rounds"] = [list(a) for a in rounds]
    else:
        # re-add the recorded empty-set shift so the file carries the
        # original tables
        doc["buyers"] = [
            {
                "values": {
                    str(s): float(v[s] + instance.shifts[j]) for s in range(v.shape[0])
                }
            }
            for j, v in enumerate(instance.values)
        ]
    meta = getattr(instance, "metadata", None)
    if meta:
        doc["metadata"] = meta
    return doc


def instance_from_dict(doc: dict):
    if doc.get("format") != "opd-instance":
        raise ValueError("not an instance document")
    kind = doc["kind"]
    n = int(doc["n"])
    cost = cost_from_dict(n, doc["cost"])
    if kind == "covering":
        inst = CoveringInstance.create(cost, doc["rounds"])
    elif kind == "packing":
        if not isinstance(cost, Polynomial):
            raise ValueError("packing cost must be a polynomial")
        inst = PackingInstance.create(cost, doc["rounds"])
    elif kind == "auction":
        if not isinstance(cost, Polynomial):
            raise ValueError("auction cost must be a polynomial")
        tables = []
        for buyer in doc["buyers"]:
            vals = buyer["values"]
            if len(vals) != 2 ** n:
                raise ValueError("value table must cover every subset")
            tables.append([float(vals[str(s)]) for s in range(2 ** n)])
        inst = AuctionInstance.create(cost, tables)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    meta = doc.get("metadata")
    if meta:
        object.__setattr__(inst, "metadata", meta) if _is_frozen(inst) else setattr(
            inst, "metadata", meta
        )
    return inst


def _is_frozen(obj) -> bool:
    return getattr(type(obj), "__dataclass_params__", None) is not None and type(
        obj
    ).__dataclass_params__.frozen


def save_instance(instance, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_canonical(instance_to_dict(instance)))


def load_instance(path: str):
    import json

    with open(path) as fh:
        return instance_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _convex_blocks(rng, n: int, tau: int, target_terms: int, kind: str) -> Polynomial:
    """Sum of convex building blocks: pure powers and expanded form powers.

    Every block is convex on the orthant, so the sum is too.  The first
    block pins the maximum degree at exactly tau.
    """
    from math import comb

    terms: list[tuple[float, tuple[int, ...]]] = []

    def add_pure(i, d, c):
        degs = [0] * n
        degs[i] = d
        terms.append((c, tuple(degs)))

    def add_form_power(support, weights, d):
        # expand (sum_i w_i x_i)**d over the support by multinomials
        from itertools import product

        k = len(support)
        for combo in _compositions(d, k):
            coeff = math.factorial(d)
            for c in combo:
                coeff //= math.factorial(c)
            w = 1.0
            for ci, wi in zip(combo, weights):
                w *= wi ** ci
            degs = [0] * n
            for idx, ci in zip(support, combo):
                degs[idx] = ci
            terms.append((coeff * w, tuple(degs)))

    i0 = int(rng.integers(0, n))
    add_pure(i0, tau, float(rng.uniform(0.5, 2.0)))
    count = 1
    guard = 0
    while count < target_terms and guard < 200:
        guard += 1
        if kind == "separable":
            d = int(rng.integers(2, tau + 1))
            add_pure(int(rng.integers(0, n)), d, float(rng.uniform(0.2, 2.0)))
        elif kind == "homogeneous":
            if n >= 2 and rng.uniform() < 0.5:
                size = int(rng.integers(2, min(n, 3) + 1))
                support = sorted(rng.choice(n, size=size, replace=False).tolist())
                weights = rng.uniform(0.3, 1.2, size=size)
                add_form_power(support, weights, tau)
            else:
                add_pure(int(rng.integers(0, n)), tau, float(rng.uniform(0.2, 2.0)))
        else:  # mixed
            roll = rng.uniform()
            if roll < 0.35:
                add_pure(int(rng.integers(0, n)), 1, float(rng.uniform(0.2, 2.0)))
            elif roll < 0.7 or n == 1:
                d = int(rng.integers(2, tau + 1))
                add_pure(int(rng.integers(0, n)), d, float(rng.uniform(0.2, 2.0)))
            else:
                size = int(rng.integers(2, min(n, 3) + 1))
                support = sorted(rng.choice(n, size=size, replace=False).tolist())
                weights = rng.uniform(0.3, 1.2, size=size)
                add_form_power(support, weights, int(rng.integers(2, tau + 1)))
        count = len({t[1] for t in terms})
    # every resource carries cost: a free resource would let constraints be
    # satisfied at no charge, outside the intended problem family
    covered = {i for _, degs in terms for i, d in enumerate(degs) if d > 0}
    for i in range(n):
        if i not in covered:
            d = tau if kind == "homogeneous" else int(rng.integers(min(2, tau), tau + 1))
            add_pure(i, d, float(rng.uniform(0.2, 1.0)))
    return Polynomial(n, terms)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _random_rounds(rng, n: int, m: int) -> list[list[float]]:
    rounds = []
    for _ in range(m):
        support = int(rng.integers(1, n + 1))
        idx = rng.choice(n, size=support, replace=False)
        a = np.zeros(n)
        a[idx] = rng.uniform(0.1, 2.0, size=support)
        rounds.append([float(v) for v in a])
    return rounds


def generate(family: str, params: dict, seed: int):
    """Deterministic instance generator.  Same seed, same bytes."""
    rng = np.random.default_rng(seed)
    meta = {"seed": seed, "family": family, **{k: params[k] for k in sorted(params)}}
    if family == "random-poly":
        n = int(params.get("n", 2))
        tau = int(params.get("tau", 2))
        count = int(params.get("N", 2))
        m = int(params.get("m", 3))
        kind = params.get("kind", "mixed")
        cost = _convex_blocks(rng, n, tau, count, kind)
        inst = CoveringInstance.create(cost, _random_rounds(rng, n, m))
    elif family in ("lp-linear-forms", "mixed-cover-pack"):
        n = int(params.get("n", 4))
        l = int(params.get("l", 3))
        d = int(params.get("d", min(2, n)))
        if family == "mixed-cover-pack":
            p = max(2.0, math.log2(max(l, 2)))
        else:
            p = float(params.get("p", 2.0))
        if n > l * d:
            raise ValueError("need n <= l*d so every resource appears in some form")
        forms = np.zeros((l, n))
        # coverage-first assignment: spread all resources over the forms,
        # then fill the remaining slots at random within the sparsity cap
        order = rng.permutation(n)
        for pos, i in enumerate(order):
            forms[pos % l, i] = rng.uniform(0.5, 2.0)
        for k in range(l):
            have = np.nonzero(forms[k])[0]
            extra = d - have.size
            if extra > 0:
                pool = np.setdiff1d(np.arange(n), have)
                idx = rng.choice(pool, size=min(extra, pool.size), replace=False)
                forms[k, idx] = rng.uniform(0.5, 2.0, size=idx.size)
        m = int(params.get("m", 3))
        inst = CoveringInstance.create(LpSumCost(forms, p), _random_rounds(rng, n, m))
        meta["p"] = p
    elif family == "random-packing":
        n = int(params.get("n", 2))
        tau = int(params.get("tau", 2))
        m = int(params.get("m", 3))
        with_linear = bool(params.get("with_linear", False))
        terms = []
        for i in range(n):
            terms.append((float(rng.uniform(0.3, 1.5)), tuple(2 if j == i else 0 for j in range(n))))
        for _ in range(max(0, tau - 2)):
            i = int(rng.integers(0, n))
            d = int(rng.integers(2, tau + 1))
            terms.append((float(rng.uniform(0.2, 1.0)), tuple(d if j == i else 0 for j in range(n))))
        if with_linear:
            for i in range(n):
                if rng.uniform() < 0.7:
                    terms.append((float(rng.uniform(0.05, 0.4)), tuple(1 if j == i else 0 for j in range(n))))
        inst = PackingInstance.create(Polynomial(n, terms), _random_rounds(rng, n, m))
    elif family == "random-auction":
        n = int(params.get("n", 2))
        buyers = int(params.get("buyers", 2))
        tau = int(params.get("tau", 2))
        terms = []
        for i in range(n):
            terms.append((float(rng.uniform(0.3, 1.5)), tuple(2 if j == i else 0 for j in range(n))))
        if tau > 2:
            i = int(rng.integers(0, n))
            terms.append((float(rng.uniform(0.2, 0.8)), tuple(tau if j == i else 0 for j in range(n))))
        cost = Polynomial(n, terms)
        tables = []
        for _ in range(buyers):
            w = rng.uniform(0.0, 1.5, size=n)
            vals = [0.0] * (2 ** n)
            bonus_set = int(rng.integers(0, 2 ** n))
            bonus = float(rng.uniform(0.0, 0.5))
            for s in range(1, 2 ** n):
                base = sum(w[i] for i in range(n) if (s >> i) & 1)
                vals[s] = base + (bonus if (s & bonus_set) == bonus_set and bonus_set else 0.0)
            tables.append(vals)
        inst = AuctionInstance.create(cost, tables)
    else:
        raise ValueError(f"unknown family {family!r}")
    if _is_frozen(inst):
        object.__setattr__(inst, "metadata", meta)
    else:
        inst.metadata = meta
    return inst


# ---------------------------------------------------------------------------
# run driver
# ---------------------------------------------------------------------------

COVERING_MODES = ("general", "sharp", "homogeneous", "general-poly", "lp")


def default_mode(instance) -> str:
    if isinstance(instance, PackingInstance):
        return "packing"
    if isinstance(instance, AuctionInstance):
        return "auction"
    cost = instance.cost
    if isinstance(cost, LpSumCost):
        return "lp"
    prof = profile(cost)
    if prof.is_homogeneous and not validate_lead_terms(cost):
        return "homogeneous"
    return "general-poly"


def run(
    instance,
    mode: Optional[str] = None,
    rho: Optional[float] = None,
    eta_multiplier: float = 1e-9,
    step_rel: float = 0.0025,
    with_oracle: bool = True,
    keep_trace: bool = False,
) -> RunReport:
    """Execute an engine mode, oracle and the full invariant matrix."""
    if mode is None:
        mode = default_mode(instance)
    if isinstance(instance, CoveringInstance):
        if mode not in COVERING_MODES:
            raise ValueError(f"mode {mode!r} does not apply to covering instances")
        return _run_covering_report(instance, mode, rho, eta_multiplier, step_rel, with_oracle)
    if isinstance(instance, PackingInstance):
        if mode != "packing":
            raise ValueError("packing instances run in mode 'packing'")
        return _run_packing_report(instance, rho, with_oracle)
    if isinstance(instance, AuctionInstance):
        if mode != "auction":
            raise ValueError("auction instances run in mode 'auction'")
        return _run_auction_report(instance, rho, with_oracle, keep_trace)
    raise TypeError(f"unknown instance type {type(instance)}")


def _run_covering_report(instance, mode, rho, eta_multiplier, step_rel, with_oracle) -> RunReport:
    if mode == "general":
        outcome = run_general_mode(instance, rho=rho, step_rel=step_rel)
    elif mode == "sharp":
        outcome = run_sharp_mode(instance, eta_multiplier, rho=rho, step_rel=step_rel)
    elif mode == "homogeneous":
        outcome = run_homogeneous_pipeline(instance, eta_multiplier=eta_multiplier, step_rel=step_rel)
    elif mode == "general-poly":
        outcome = run_general_poly_pipeline(instance, eta_multiplier=eta_multiplier, step_rel=step_rel)
    elif mode == "lp":
        outcome = run_lp_pipeline(instance, eta_multiplier=eta_multiplier, step_rel=step_rel)
    else:
        raise ValueError(mode)
    oracle = covering_opt(instance) if with_oracle else None
    return _covering_report(instance, outcome, oracle)


def _covering_report(instance, outcome: CoveringOutcome, oracle: Optional[OracleResult]) -> RunReport:
    st = outcome.state
    run_cost = outcome.run_cost
    budgets = outcome.budgets()
    dual = outcome.dual_evaluator
    checks: list[CheckResult] = []
    rows = []
    y_cum = 0.0
    prev_x = None
    mono_ok = True
    duality_worst = math.inf
    for rec in st.rounds:
        y_cum += rec.y_k
        fstar = dual(rec.z_after) if dual is not None else math.nan
        p_val = y_cum - fstar
        c_run = run_cost.evaluate(rec.x_after)
        duality_worst = min(duality_worst, c_run - p_val)
        if prev_x is not None and np.any(rec.x_after < prev_x - 1e-15):
            mono_ok = False
        prev_x = rec.x_after
        rows.append(
            {
                "round": rec.index,
                "y_k": rec.y_k,
                "objective_run": c_run,
                "objective_base": instance.cost.evaluate(rec.x_after),
                "dual_objective": p_val,
                "slack": rec.slack,
                "steps": rec.steps,
                "free_increase": rec.free_increase,
                "seed_cost": rec.seed_cost,
                "dual_gain_slack": rec.y_k
                - (rec.f_after - rec.f_before) / outcome.rho,
                "x": [float(v) for v in rec.x_after],
                "z": [float(v) for v in rec.z_after],
            }
        )
    c_run_final = outcome.run_cost_final
    scale = max(1.0, abs(c_run_final))

    checks.append(
        CheckResult("monotone_state", mono_ok and all(y >= 0 for y in st.y), 0.0, 0.0)
    )
    # z == A^T y by construction; recompute to guard the bookkeeping
    z_re = np.zeros(instance.n)
    for a, y in zip(instance.rounds, st.y):
        z_re += a * y
    z_dev = float(np.max(np.abs(z_re - st.z))) if instance.n else 0.0
    checks.append(CheckResult("z_matches_dual_mass", z_dev <= 1e-9 * max(1.0, float(np.max(np.abs(st.z)) if st.z.size else 1.0)), z_dev, 1e-9))

    worst_slack = min((r.slack for r in st.rounds), default=0.0)
    final_cov = min((float(a @ st.x) for a in instance.rounds), default=1.0)
    checks.append(
        CheckResult(
            "feasibility",
            worst_slack >= -FEAS_TOL and final_cov >= 1.0 - FEAS_TOL,
            min(worst_slack, final_cov - 1.0),
            FEAS_TOL,
        )
    )

    e_budget = budgets["integration_budget"]
    seed_cost = budgets["seed_cost"]
    f0 = run_cost.evaluate(outcome._initial)
    gain_slack = st.y_sum - (c_run_final - f0 - seed_cost - e_budget) / outcome.rho
    checks.append(
        CheckResult(
            "dual_covers_cost_increase",
            gain_slack >= -FP_SLACK * scale,
            gain_slack,
            FP_SLACK * scale,
            "sum y >= (cost increase)/rho up to the reported budget",
        )
    )
    checks.append(
        CheckResult(
            "integration_budget_small",
            e_budget + seed_cost <= max(0.02 * c_run_final, 1e-14),
            (e_budget + seed_cost) / scale,
            0.02,
            "budget below 2 percent of the final run cost",
        )
    )
    grad_final = run_cost.gradient(st.x)
    if outcome.mu is not None:
        bound = math.log(outcome.mu) / outcome.rho * grad_final
        zb = budgets.get("z_log_budget", 0.0)
        dev = float(np.max(st.z - bound - zb)) if st.z.size else 0.0
        checks.append(
            CheckResult(
                "demand_under_log_gradient_bound",
                dev <= FP_SLACK * max(1.0, float(np.max(np.abs(bound)) if bound.size else 1.0)),
                dev,
                FP_SLACK,
                "z <= (ln mu / rho) grad f(final) plus reported budget",
            )
        )
    if outcome.lam is not None:
        bound = grad_final / (outcome.lam * outcome.rho)
        zb = budgets.get("z_pow_budget", 0.0)
        dev = float(np.max(st.z - bound - zb)) if st.z.size else 0.0
        checks.append(
            CheckResult(
                "demand_under_power_gradient_bound",
                dev <= FP_SLACK * max(1.0, float(np.max(np.abs(bound)) if bound.size else 1.0)),
                dev,
                FP_SLACK,
                "z <= grad f(final)/(lambda rho) plus reported budget",
            )
        )
    if math.isfinite(duality_worst):
        checks.append(
            CheckResult(
                "weak_duality",
                duality_worst >= -1e-6 * scale,
                duality_worst,
                1e-6 * scale,
                "run-cost objective dominates its dual at every round end",
            )
        )

    summary = {
        "objective": outcome.base_cost_final,
        "objective_run_cost": c_run_final,
        "dual_sum": st.y_sum,
        "dual_objective_final": rows[-1]["dual_objective"] if rows else 0.0,
        "integration_budget": e_budget,
        "seed_cost": seed_cost,
        "bound_run_cost": outcome.bound_run,
        "bound": outcome.bound_base,
        "bound_formula": outcome.bound_formula,
        "additive_term": outcome.additive_term,
    }
    if oracle is not None:
        summary["oracle_value"] = oracle.value
        summary["oracle_status"] = oracle.status
        summary["oracle_certificate"] = oracle.certificate
        if oracle.usable and oracle.value > 0:
            ratio = outcome.base_cost_final / oracle.value
            summary["ratio"] = ratio
            total_bound = outcome.bound_base * oracle.value + outcome.additive_term
            checks.append(
                CheckResult(
                    "ratio_within_bound",
                    outcome.base_cost_final <= total_bound * (1.0 + 1e-9) + FP_SLACK,
                    outcome.base_cost_final - total_bound,
                    FP_SLACK,
                    "objective <= bound * oracle + additive term",
                )
            )
    params = {
        "rho": outcome.rho,
        "lambda": outcome.lam,
        "mu": outcome.mu,
        "eta": outcome.eta,
        "n": instance.n,
        "m": instance.m,
    }
    return RunReport("covering", outcome.mode, params, rows, summary, checks)


def _run_packing_report(instance, rho, with_oracle) -> RunReport:
    state, outcome = run_packing(instance, rho)
    oracle = packing_opt(instance) if with_oracle else None
    rows = []
    for rec in state.round_log:
        rows.append(
            {
                "round": rec["round"],
                "y_k": rec["y_k"],
                "w_k": rec["w_k"],
                "skipped": rec["skipped"],
                "z": [float(v) for v in rec["z"]],
            }
        )
    scale = max(1.0, abs(outcome.objective), outcome.residual_at_rho_z)
    checks = [
        CheckResult(
            "monotone_state",
            all(y >= 0 for y in state.y),
            0.0,
            0.0,
        )
    ]
    checks.append(
        CheckResult(
            "price_feasibility",
            outcome.worst_constraint_slack >= -FEAS_TOL,
            outcome.worst_constraint_slack,
            FEAS_TOL,
            "every non-skipped request is priced out at termination",
        )
    )
    lemma_slack = outcome.dual_sum_w - outcome.residual_at_rho_z / outcome.rho
    checks.append(
        CheckResult(
            "dual_mass_lower_bound",
            lemma_slack >= -1e-9 * scale,
            lemma_slack,
            1e-9 * scale,
            "sum w >= residual(rho z)/rho",
        )
    )
    ident = abs(outcome.objective - outcome.scaled_objective)
    checks.append(
        CheckResult(
            "rescaling_identity",
            ident <= 1e-9 * scale,
            ident,
            1e-9 * scale,
            "objective agrees between original and rescaled forms",
        )
    )
    cross = abs(outcome.price_cost - outcome.price_cost_crosscheck)
    checks.append(
        CheckResult(
            "price_cost_crosscheck",
            cross <= 1e-6 * max(1.0, abs(outcome.price_cost)),
            cross,
            1e-6,
            "closed-form covering value matches the numeric conjugate",
        )
    )
    duality = outcome.price_cost - outcome.objective
    checks.append(
        CheckResult(
            "weak_duality",
            duality >= -1e-6 * scale,
            duality,
            1e-6 * scale,
        )
    )
    if math.isfinite(outcome.certificate):
        cert_slack = outcome.certificate * outcome.objective - outcome.price_cost
        checks.append(
            CheckResult(
                "certificate_chain",
                cert_slack >= -1e-6 * scale,
                cert_slack,
                1e-6 * scale,
                "covering value <= certificate * packing objective",
            )
        )
    summary = {
        "objective": outcome.objective,
        "dual_sum_w": outcome.dual_sum_w,
        "dual_sum_y": outcome.dual_sum_y,
        "price_cost": outcome.price_cost,
        "residual_at_rho_z": outcome.residual_at_rho_z,
        "certificate": outcome.certificate,
        "bound_formula": outcome.bound_formula,
    }
    if oracle is not None:
        summary["oracle_value"] = oracle.value
        summary["oracle_status"] = oracle.status
        summary["oracle_certificate"] = oracle.certificate
        if oracle.usable and outcome.objective > 0:
            ratio = oracle.value / outcome.objective
            summary["ratio"] = ratio
            checks.append(
                CheckResult(
                    "ratio_within_certificate",
                    ratio <= outcome.certificate * (1.0 + 1e-9) + FP_SLACK,
                    ratio - outcome.certificate,
                    FP_SLACK,
                )
            )
    params = {
        "rho": outcome.rho,
        "lambda": outcome.pre.lam if math.isfinite(outcome.pre.lam) else None,
        "n": instance.n,
        "m": instance.m,
    }
    return RunReport("packing", "packing", params, rows, summary, checks)


def _run_auction_report(instance, rho, with_oracle, keep_trace) -> RunReport:
    state, outcome = run_auction(instance, rho, keep_trace)
    oracle = auction_opt(instance) if with_oracle else None
    masks_prices = None
    from .auction import subset_masks

    masks = subset_masks(instance.n)
    prices = masks @ state.x
    rows = []
    for rec in state.buyers:
        rows.append(
            {
                "buyer": rec.index,
                "mass": rec.mass,
                "utility": state.u[rec.index],
                "utility_posthoc": rec.utility_posthoc,
                "active_time": rec.active_time,
                "tick": rec.tick if math.isfinite(rec.tick) else 0.0,
                "max_drift": rec.max_drift,
                "z_contribution": [float(v) for v in rec.z_contribution],
                **(
                    {"trace": [[t, s, r] for (t, s, r) in rec.trace]}
                    if rec.trace is not None
                    else {}
                ),
            }
        )
    scale = max(1.0, abs(outcome.welfare), outcome.residual_at_rho_z)
    checks = []
    mass_dev = max((abs(b.mass - 1.0) for b in state.buyers), default=0.0)
    checks.append(CheckResult("unit_mass_per_buyer", mass_dev <= 1e-12, mass_dev, 1e-12))
    z_re = np.zeros(instance.n)
    for rec in state.buyers:
        z_re += rec.z_contribution
    z_dev = float(np.max(np.abs(z_re - state.z))) if instance.n else 0.0
    checks.append(CheckResult("demand_matches_allocations", z_dev <= 1e-9, z_dev, 1e-9))
    feas_worst = math.inf
    for j, vals in enumerate(outcome.absorbed_values):
        feas_worst = min(
            feas_worst, state.u[j] - float(np.max(vals - prices))
        )
    checks.append(
        CheckResult(
            "utility_covers_best_surplus",
            feas_worst >= -FEAS_TOL,
            feas_worst,
            FEAS_TOL,
            "u_k >= value(S) - price(S) for every subset at final prices",
        )
    )
    eps = state.epsilon if state.epsilon is not None else 0.0
    agg = (
        sum(float(v @ y) for v, y in zip(outcome.absorbed_values, state.y))
        - sum(state.u)
        - outcome.residual_at_rho_z / outcome.rho
        + outcome.eps_times_active
        + max(outcome.discretization_budget, 0.0)
    )
    checks.append(
        CheckResult(
            "allocation_value_lower_bound",
            agg >= -FP_SLACK * scale,
            agg,
            FP_SLACK * scale,
            "absorbed value >= utilities + residual(rho z)/rho - slack budgets",
        )
    )
    checks.append(
        CheckResult(
            "discretization_within_slack",
            outcome.discretization_budget <= outcome.eps_times_active + FP_SLACK * scale,
            outcome.discretization_budget - outcome.eps_times_active,
            FP_SLACK * scale,
        )
    )
    drift_ok = outcome.max_drift <= eps + 1e-12 if eps else outcome.max_drift == 0.0
    checks.append(
        CheckResult(
            "selection_slack_audit",
            drift_ok,
            outcome.max_drift - eps,
            1e-12,
            "within-tick price drift stays below epsilon",
        )
    )
    if outcome.params is not None and float(np.sum(np.abs(state.z))) >= outcome.params.r0:
        lim = 0.1 * outcome.residual_at_z + 1e-9
        checks.append(
            CheckResult(
                "selection_budget_bound",
                outcome.eps_times_active <= lim,
                outcome.eps_times_active - lim,
                1e-9,
                "eps * active time <= a tenth of the final production cost",
            )
        )
    duality = outcome.covering_value - outcome.welfare
    checks.append(
        CheckResult("weak_duality", duality >= -1e-6 * scale, duality, 1e-6 * scale)
    )
    summary = {
        "welfare": outcome.welfare,
        "welfare_original": outcome.welfare_original,
        "covering_value": outcome.covering_value,
        "price_cost": outcome.price_cost,
        "active_total": outcome.active_total,
        "eps_times_active": outcome.eps_times_active,
        "residual_at_z": outcome.residual_at_z,
        "discretization_budget": outcome.discretization_budget,
        "certificate": outcome.certificate,
        "bound_formula": outcome.bound_formula,
        "value_shift_total": outcome.shift_total,
    }
    if oracle is not None:
        summary["oracle_value"] = oracle.value
        summary["oracle_status"] = oracle.status
        summary["oracle_certificate"] = oracle.certificate
        if oracle.usable and outcome.welfare > 0:
            summary["ratio"] = oracle.value / outcome.welfare
    p = outcome.params
    params = {
        "rho": outcome.rho,
        "epsilon": p.epsilon if p else None,
        "delta_first": p.delta if p else None,
        "lipschitz_first": p.lipschitz if p else None,
        "r0": p.r0 if p else None,
        "n": instance.n,
        "m": instance.m,
    }
    return RunReport("auction", "auction", params, rows, summary, checks)


# ---------------------------------------------------------------------------
# re-validation of a stored report
# ---------------------------------------------------------------------------


def check(instance, report: RunReport) -> list[CheckResult]:
    """Re-validate a report from its logged snapshots.

    Recomputes state-derived inequalities (monotonicity, demand
    consistency, feasibility, weak duality, dual growth) directly from the
    instance and the per-round rows, without trusting the stored checks.
    """
    if report.kind == "covering":
        return _check_covering(instance, report)
    if report.kind == "packing":
        return _check_packing(instance, report)
    if report.kind == "auction":
        return _check_auction(instance, report)
    raise ValueError(report.kind)


def _rebuild_run_cost(instance, report):
    mode = report.mode
    lam = report.params.get("lambda")
    if mode in ("general", "sharp"):
        return instance.cost
    if mode == "homogeneous":
        return build_homogeneous_surrogate(instance.cost, Fraction(lam).limit_denominator(10**9)).surrogate
    if mode == "general-poly":
        return build_general_surrogate(instance.cost, Fraction(lam).limit_denominator(10**9)).surrogate
    if mode == "lp":
        from .surrogate import PowerOfLinearForms

        return PowerOfLinearForms(instance.cost, lam)
    raise ValueError(mode)


def _check_covering(instance, report) -> list[CheckResult]:
    rows = report.rows
    rho = report.params["rho"]
    run_cost = _rebuild_run_cost(instance, report)
    checks = []
    prev = None
    mono = True
    ys = []
    for row in rows:
        x = np.asarray(row["x"], dtype=float)
        ys.append(row["y_k"])
        if row["y_k"] < 0 or (prev is not None and np.any(x < prev - 1e-12)):
            mono = False
        prev = x
    checks.append(CheckResult("monotone_state", mono, 0.0, 0.0))
    z_re = np.zeros(instance.n)
    for a, y in zip(instance.rounds, ys):
        z_re += a * y
    z_logged = np.asarray(rows[-1]["z"], dtype=float) if rows else z_re
    dev = float(np.max(np.abs(z_re - z_logged))) if rows else 0.0
    checks.append(CheckResult("z_matches_dual_mass", dev <= 1e-9 * max(1.0, float(np.max(np.abs(z_logged)) if z_logged.size else 1)), dev, 1e-9))
    feas_ok = True
    worst = 0.0
    if rows:
        x_final = np.asarray(rows[-1]["x"], dtype=float)
        for k, a in enumerate(instance.rounds):
            if k >= len(rows):
                break
            cov = float(a @ x_final) - 1.0
            worst = min(worst, cov)
            if cov < -FEAS_TOL:
                feas_ok = False
    checks.append(CheckResult("feasibility", feas_ok, worst, FEAS_TOL))
    if rows:
        x_final = np.asarray(rows[-1]["x"], dtype=float)
        c_final = run_cost.evaluate(x_final)
        budget = report.summary.get("integration_budget", 0.0)
        seed_cost = report.summary.get("seed_cost", 0.0)
        x0 = np.zeros(instance.n)
        if report.mode == "general":
            # warm-start value is not logged per se; derive from the additive term
            f0 = report.summary.get("additive_term", 0.0)
            tau = instance.cost.curvature_degree()
            f0 = f0 / tau if tau > 0 else 0.0
        else:
            f0 = 0.0
        slack = sum(ys) - (c_final - f0 - seed_cost - budget) / rho
        checks.append(
            CheckResult(
                "dual_covers_cost_increase",
                slack >= -FP_SLACK * max(1.0, c_final),
                slack,
                FP_SLACK,
            )
        )
        dual = report.summary.get("dual_objective_final")
        if dual is not None and isinstance(dual, (int, float)):
            checks.append(
                CheckResult(
                    "weak_duality",
                    c_final >= dual - 1e-6 * max(1.0, abs(c_final)),
                    c_final - dual,
                    1e-6,
                )
            )
    return checks


def _check_packing(instance, report) -> list[CheckResult]:
    from .packing import preprocess_linear

    rows = report.rows
    rho = report.params["rho"]
    pre = preprocess_linear(instance)
    checks = []
    ys = [row["y_k"] for row in rows]
    ws = [row["w_k"] for row in rows]
    checks.append(CheckResult("monotone_state", all(y >= 0 for y in ys), 0.0, 0.0))
    z = np.zeros(instance.n)
    for a, y in zip(instance.rounds, ys):
        z += a * y
    z_logged = np.asarray(rows[-1]["z"], dtype=float) if rows else z
    dev = float(np.max(np.abs(z - z_logged))) if rows else 0.0
    checks.append(CheckResult("z_matches_dual_mass", dev <= 1e-9 * max(1.0, float(np.max(np.abs(z_logged)) if z_logged.size else 1)), dev, 1e-9))
    if pre.residual.monomials:
        x = pre.residual.gradient(rho * z)
        worst = math.inf
        for k, a in enumerate(instance.rounds):
            if k < len(rows) and not rows[k]["skipped"]:
                worst = min(worst, float(a @ x) / pre.b[k] - 1.0)
        if math.isfinite(worst):
            checks.append(CheckResult("price_feasibility", worst >= -FEAS_TOL, worst, FEAS_TOL))
        res_rho = pre.residual.evaluate(rho * z)
        slack = sum(ws) - res_rho / rho
        checks.append(
            CheckResult(
                "dual_mass_lower_bound",
                slack >= -1e-9 * max(1.0, res_rho),
                slack,
                1e-9,
            )
        )
        obj = sum(ys) - instance.cost_star.evaluate(z)
        ident = abs(obj - (sum(ws) - pre.residual.evaluate(z)))
        checks.append(CheckResult("rescaling_identity", ident <= 1e-9 * max(1.0, abs(obj)), ident, 1e-9))
    return checks


def _check_auction(instance, report) -> list[CheckResult]:
    from .auction import subset_masks
    from .packing import preprocess_linear, PackingInstance as PInst

    rows = report.rows
    rho = report.params["rho"]
    pre = preprocess_linear(PInst(instance.n, instance.cost_star, ()))
    masks = subset_masks(instance.n)
    csub = masks @ pre.linear_part
    checks = []
    mass_dev = max((abs(row["mass"] - 1.0) for row in rows), default=0.0)
    checks.append(CheckResult("unit_mass_per_buyer", mass_dev <= 1e-12, mass_dev, 1e-12))
    z = np.zeros(instance.n)
    for row in rows:
        z += np.asarray(row["z_contribution"], dtype=float)
    x = pre.residual.gradient(rho * z) if pre.residual.monomials else np.zeros(instance.n)
    prices = masks @ x
    worst = math.inf
    for j, row in enumerate(rows):
        vals = instance.values[j] - csub
        worst = min(worst, row["utility"] - float(np.max(vals - prices)))
    if rows:
        checks.append(
            CheckResult("utility_covers_best_surplus", worst >= -FEAS_TOL, worst, FEAS_TOL)
        )
    eps = report.params.get("epsilon") or 0.0
    active = sum(row["active_time"] for row in rows)
    if pre.residual.monomials and report.params.get("r0") is not None:
        if float(np.sum(np.abs(z))) >= report.params["r0"]:
            lim = 0.1 * pre.residual.evaluate(z) + 1e-9
            checks.append(
                CheckResult(
                    "selection_budget_bound",
                    eps * active <= lim,
                    eps * active - lim,
                    1e-9,
                )
            )
    return checks
