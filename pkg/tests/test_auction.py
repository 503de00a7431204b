"""Auction engine: slack parameters, buyer rounds, aggregate inequalities."""

import numpy as np
import pytest

from opd.auction import (
    AuctionInstance,
    certified_sphere_minimum,
    compute_epsilon_delta,
    run_auction,
    subset_masks,
)
from opd.errors import DegenerateParams, Unbounded
from opd.poly import Polynomial


def quad(n, coeffs=None):
    coeffs = coeffs or [1.0] * n
    return Polynomial(n, [(c, tuple(2 if j == i else 0 for j in range(n))) for i, c in enumerate(coeffs)])


def test_masks_layout():
    m = subset_masks(2)
    assert m.tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]


def test_epsilon_delta_worked_example():
    params = compute_epsilon_delta(quad(1), 1, 2.0, beta=1.0)
    assert params.lipschitz == pytest.approx(2.0)
    assert params.r0 == pytest.approx(0.25)
    assert params.epsilon == pytest.approx(1.0 / 40.0)
    assert params.delta == pytest.approx(1.0 / 160.0)


def test_epsilon_positive_for_min_degree_two():
    params = compute_epsilon_delta(
        Polynomial(2, [(1, (2, 0)), (0.5, (0, 2)), (0.3, (1, 1))]), 2, 2.0, beta=0.7
    )
    assert params.epsilon > 0.0


def test_sphere_minimum_certified_positive():
    certified, raw, res = certified_sphere_minimum(quad(2, [1.0, 2.0]), 0.5)
    # min over the l1-sphere of x^2 + 2 y^2 at radius 1/2: u* = (2/3, 1/3)
    want = (2.0 / 3.0 * 0.5) ** 2 + 2.0 * (1.0 / 3.0 * 0.5) ** 2
    assert raw == pytest.approx(want, rel=1e-2)
    assert 0.0 < certified <= raw


def test_single_buyer_quadratic_bracket():
    inst = AuctionInstance.create(quad(1), [[0.0, 1.0]])
    state, out = run_auction(inst, rho=2.0)
    assert state.buyers[0].mass == pytest.approx(1.0, abs=1e-12)
    assert out.welfare >= 3.0 / 16.0 - out.eps_times_active - 1e-6
    assert out.welfare <= 0.25 + 1e-12
    assert state.z[0] == pytest.approx(0.25, abs=out.params.delta + 1e-12)


def test_zero_values_trivial_round():
    inst = AuctionInstance.create(quad(1), [[0.0, 0.0]])
    state, out = run_auction(inst)
    assert state.buyers[0].mass == 1.0
    assert state.u[0] == 0.0
    assert np.all(state.z == 0.0)
    assert out.welfare == 0.0


def test_deferral_then_active_buyer():
    inst = AuctionInstance.create(quad(1), [[0.0, 0.0], [0.0, 1.0]])
    state, out = run_auction(inst, rho=2.0)
    assert state.params is not None
    assert state.buyers[0].active_time == 0.0
    assert state.buyers[1].active_time > 0.0


def test_second_identical_buyer_gets_less():
    inst = AuctionInstance.create(quad(1), [[0.0, 1.0], [0.0, 1.0]])
    state, _ = run_auction(inst, rho=2.0)
    assert float(state.y[1][1]) < float(state.y[0][1])


def test_empty_set_value_normalized_and_reported():
    inst = AuctionInstance.create(quad(1), [[0.4, 1.4]])
    assert inst.shifts == (0.4,)
    state, out = run_auction(inst, rho=2.0)
    assert out.welfare_original == pytest.approx(out.welfare + 0.4, abs=1e-12)


def test_utilities_cover_every_subset_at_final_prices():
    rng = np.random.default_rng(3)
    cost = Polynomial(2, [(0.8, (2, 0)), (1.2, (0, 2)), (0.3, (1, 1))])
    tables = []
    for _ in range(3):
        w = rng.uniform(0.0, 1.2, size=2)
        tables.append([0.0, w[0], w[1], w[0] + w[1] + 0.2])
    inst = AuctionInstance.create(cost, tables)
    state, out = run_auction(inst)
    masks = subset_masks(2)
    prices = masks @ state.x
    for j, vals in enumerate(out.absorbed_values):
        assert state.u[j] >= float(np.max(vals - prices)) - 1e-9


def test_aggregate_value_bound_and_budgets():
    cost = Polynomial(2, [(1.0, (2, 0)), (0.6, (0, 2))])
    inst = AuctionInstance.create(
        cost, [[0.0, 1.0, 0.8, 1.7], [0.0, 0.5, 1.1, 1.5]]
    )
    state, out = run_auction(inst)
    lhs = sum(float(v @ y) for v, y in zip(out.absorbed_values, state.y))
    rhs = (
        sum(state.u)
        + out.residual_at_rho_z / out.rho
        - out.eps_times_active
        - max(out.discretization_budget, 0.0)
    )
    assert lhs >= rhs - 1e-9
    assert out.discretization_budget <= out.eps_times_active + 1e-9
    assert out.max_drift <= out.params.epsilon + 1e-12
    if float(np.sum(state.z)) >= out.params.r0:
        assert out.eps_times_active <= 0.1 * out.residual_at_z + 1e-9


def test_linear_terms_absorbed_into_values():
    cost = Polynomial(1, [(0.5, (1,)), (1.0, (2,))])
    inst = AuctionInstance.create(cost, [[0.0, 1.0]])
    state, out = run_auction(inst, rho=2.0)
    assert out.absorbed_values[0][1] == pytest.approx(0.5)
    # objective identity: absorbed and original accounting agree
    value_norm = float(inst.values[0] @ state.y[0])
    assert out.welfare == pytest.approx(
        value_norm - cost.evaluate(state.z), abs=1e-12
    )


def test_purely_linear_cost_with_surplus_unbounded():
    cost = Polynomial(1, [(0.5, (1,))])
    with pytest.raises(Unbounded):
        run_auction(AuctionInstance.create(cost, [[0.0, 1.0]]))


def test_purely_linear_cost_no_surplus_ok():
    cost = Polynomial(1, [(2.0, (1,))])
    state, out = run_auction(AuctionInstance.create(cost, [[0.0, 1.0]]))
    assert out.welfare == 0.0


def test_fractional_min_degree_rejected():
    cost = Polynomial(1, [(1.0, ("3/2",))])
    with pytest.raises(DegenerateParams):
        run_auction(AuctionInstance.create(cost, [[0.0, 1.0]]))


def test_weak_duality_random_auctions():
    rng = np.random.default_rng(8)
    for trial in range(5):
        n = int(rng.integers(1, 3))
        cost = quad(n, list(rng.uniform(0.4, 1.5, size=n)))
        tables = []
        for _ in range(int(rng.integers(1, 4))):
            w = rng.uniform(0.0, 1.5, size=n)
            vals = [0.0] * (2 ** n)
            for s in range(1, 2 ** n):
                vals[s] = sum(w[i] for i in range(n) if (s >> i) & 1)
            tables.append(vals)
        inst = AuctionInstance.create(cost, tables)
        state, out = run_auction(inst)
        assert out.covering_value >= out.welfare - 1e-9
        for rec in state.buyers:
            assert rec.mass == pytest.approx(1.0, abs=1e-12)
