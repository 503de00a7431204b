"""Covering engine: round dynamics, parameter resolution, pipelines."""

import math

import numpy as np
import pytest
from fractions import Fraction

from opd.covering import (
    CoveringConfig,
    CoveringInstance,
    PrimalDualState,
    bound_sharp,
    resolve_params_general,
    resolve_params_sharp,
    rho_sharp,
    run_covering,
    run_general_mode,
    run_general_poly_pipeline,
    run_homogeneous_pipeline,
    run_lp_pipeline,
    run_round,
    run_sharp_mode,
    seed_floor,
)
from opd.errors import DegenerateParams, StallError
from opd.poly import Polynomial, profile
from opd.surrogate import LpSumCost


def make_state(n):
    return PrimalDualState(x=np.zeros(n), y=[], z=np.zeros(n))


def test_single_round_reaches_boundary_with_analytic_dual_mass():
    # dx/dy = rho * x / (2x) = rho/2, so y_1 = 2 (1 - 0.01) / rho exactly
    f = Polynomial(1, [(1, (2,))])
    inst = CoveringInstance.create(f, [[1.0]])
    cfg = CoveringConfig(rho=1.0, initial=np.array([0.01]))
    state, _ = run_covering(inst, cfg)
    assert state.x == pytest.approx([1.0], abs=1e-12)
    assert state.y[0] >= 0.9999  # at least the cost increase over rho
    assert state.y[0] == pytest.approx(1.98, rel=1e-6)


def test_round_noop_when_already_satisfied():
    f = Polynomial(1, [(1, (2,))])
    cfg = CoveringConfig(rho=1.0)
    state = make_state(1)
    state.x[0] = 2.0
    run_round(state, np.array([1.0]), f, cfg, index=0)
    assert state.y == [0.0]
    assert state.x[0] == 2.0


def test_only_constrained_coordinate_moves():
    f = Polynomial(2, [(1, (2, 0)), (1, (0, 2))])
    cfg = CoveringConfig(rho=1.0, initial=np.array([0.05, 0.05]))
    inst = CoveringInstance.create(f, [[1.0, 0.0]])
    state, _ = run_covering(inst, cfg)
    assert state.x[0] == pytest.approx(1.0, abs=1e-12)
    assert state.x[1] == 0.05


def test_two_identical_rounds_second_is_noop():
    f = Polynomial(1, [(1, (2,))])
    inst = CoveringInstance.create(f, [[1.0], [1.0]])
    cfg = CoveringConfig(rho=1.0, initial=np.array([0.01]))
    state, _ = run_covering(inst, cfg)
    assert state.y[1] == 0.0


def test_decoupled_rounds_reach_unit_box():
    f = Polynomial(2, [(1, (2, 0)), (1, (0, 2))])
    inst = CoveringInstance.create(f, [[1.0, 0.0], [0.0, 1.0]])
    out = run_sharp_mode(inst)
    assert out.state.x == pytest.approx([1.0, 1.0], abs=1e-9)
    assert out.base_cost_final == pytest.approx(2.0, abs=1e-8)


def test_stall_without_seed():
    f = Polynomial(1, [(1, (2,))])
    inst = CoveringInstance.create(f, [[1.0]])
    cfg = CoveringConfig(rho=1.0)  # zero start, no seed floor
    with pytest.raises(StallError):
        run_covering(inst, cfg)


def test_free_increase_costless_coordinate():
    # cost ignores x2 entirely; a constraint on x2 is absorbed for free
    f = Polynomial(2, [(1, (2, 0))])
    inst = CoveringInstance.create(f, [[0.0, 2.0]])
    cfg = CoveringConfig(rho=1.0, initial=np.array([0.1, 0.0]), eta=1e-9)
    state, out = run_covering(inst, cfg)
    assert state.x[1] == pytest.approx(0.5)
    assert state.y[0] == 0.0
    assert out.base_cost_final == pytest.approx(f.evaluate(np.array([0.1, 0.0])))
    assert state.rounds[0].free_increase


def test_resolve_params_general_formula():
    f = Polynomial(1, [(1, (2,))])
    inst = CoveringInstance.create(f, [[1.0]])
    # L chosen so that ln(mu) = 1
    L = np.array([1.0 / math.e])
    rho, mu, additive = resolve_params_general(inst, L)
    assert mu == pytest.approx(math.e)
    assert rho == pytest.approx(2.0)
    assert additive == pytest.approx(2.0 * f.evaluate(L))

    lin = Polynomial(1, [(1, (1,))])
    inst_lin = CoveringInstance.create(lin, [[1.0]])
    rho_lin, mu_lin, _ = resolve_params_general(inst_lin, np.array([0.1]))
    assert rho_lin == pytest.approx(math.log(10.0))

    with pytest.raises(DegenerateParams):
        resolve_params_general(inst, np.array([1.0]))  # mu == 1


def test_sharp_rho_formulas():
    assert rho_sharp(4, 1) == pytest.approx(64.0)
    assert rho_sharp(3, 3) == pytest.approx(1.0 / 3.0)
    assert bound_sharp(3, 3) == pytest.approx(1.0)
    assert rho_sharp(2, 1) == pytest.approx(2.0)
    assert bound_sharp(2, 1) == pytest.approx(4.0)
    prof = profile(Polynomial(2, [(1, (4, 0)), (1, (0, 4))]))
    assert resolve_params_sharp(prof) == pytest.approx(4 ** 3 / 3 ** 4)
    with pytest.raises(DegenerateParams):
        resolve_params_sharp(profile(Polynomial(1, [(1, (1,))])))


def test_warm_start_mode_reports_additive_term():
    f = Polynomial(2, [(1, (2, 0)), (1, (0, 2)), (0.5, (1, 1))])
    inst = CoveringInstance.create(f, [[1.0, 0.5], [0.2, 1.0]])
    out = run_general_mode(inst)
    assert out.mode == "general"
    assert out.mu is not None and out.mu > 1.0
    assert out.additive_term > 0.0
    cov = min(float(a @ out.state.x) for a in inst.rounds)
    assert cov >= 1.0 - 1e-9


def test_homogeneous_pipeline_single_variable_clamps_lambda():
    f = Polynomial(1, [(1, (3,))])
    inst = CoveringInstance.create(f, [[2.0]])
    out = run_homogeneous_pipeline(inst)
    assert out.lam == 1.0
    assert out.state.x[0] >= 0.5 - 1e-9


def test_homogeneous_pipeline_feasible_and_bounded():
    f = Polynomial(2, [(1, (2, 0)), (1, (1, 1)), (1, (0, 2))])
    inst = CoveringInstance.create(f, [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    out = run_homogeneous_pipeline(inst)
    for a in inst.rounds:
        assert float(a @ out.state.x) >= 1.0 - 1e-9
    assert out.bound_base > out.bound_run ** 0  # positive, formula resolved
    assert "2**" in out.bound_formula


def test_general_poly_pipeline_with_linear_terms():
    f = Polynomial(1, [(1, (1,)), (1, (2,))])
    inst = CoveringInstance.create(f, [[1.0]])
    out = run_general_poly_pipeline(inst)
    assert out.state.x[0] >= 1.0 - 1e-9
    # run cost is the degree-inflated surrogate with both terms scaled
    assert profile(out.run_cost).min_degree == pytest.approx(2.0)


def test_general_poly_pipeline_single_term_clamp():
    f = Polynomial(1, [(2, (1,))])
    inst = CoveringInstance.create(f, [[1.0]])
    out = run_general_poly_pipeline(inst)
    assert out.lam == 1.0
    assert out.run_cost == Polynomial(1, [(4, (2,))])


def test_lp_pipeline_runs_without_expansion():
    forms = np.array([[1.0, 1.0, 0.0], [0.0, 0.5, 1.5]])
    inst = CoveringInstance.create(LpSumCost(forms, 2.0), [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    out = run_lp_pipeline(inst)
    for a in inst.rounds:
        assert float(a @ out.state.x) >= 1.0 - 1e-9
    assert out.mode == "lp"


def test_seed_floor_definition():
    f = Polynomial(2, [(1, (2, 0)), (1, (0, 2))])
    inst = CoveringInstance.create(f, [[2.0, 0.0], [0.0, 0.5]])
    # coordinate targets: 1/2 and 2; the floor keys off the smaller one
    assert seed_floor(inst, 1e-9) == pytest.approx(0.5e-9)


def test_seed_floor_insensitivity_of_final_cost():
    f = Polynomial(2, [(1, (2, 0)), (0.7, (0, 4)), (0.2, (1, 1))])
    inst = CoveringInstance.create(f, [[1.0, 0.3], [0.4, 1.0]])
    finals = []
    for mult in (1e-6, 1e-9, 1e-12):
        out = run_general_poly_pipeline(inst, eta_multiplier=mult)
        finals.append(out.base_cost_final)
    spread = (max(finals) - min(finals)) / max(finals)
    assert spread < 0.005


def test_integration_budget_within_two_percent():
    f = Polynomial(2, [(1, (4, 0)), (1, (0, 4))])
    inst = CoveringInstance.create(f, [[1.0, 1.0], [1.0, 0.2]])
    out = run_homogeneous_pipeline(inst)
    budgets = out.budgets()
    assert budgets["integration_budget"] <= 0.02 * out.run_cost_final
