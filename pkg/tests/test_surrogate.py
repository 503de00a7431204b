"""Surrogate constructions: exact shapes, sandwich bounds, form powers."""

import numpy as np
import pytest
from fractions import Fraction

from opd.errors import LeadTermMissing, NotHomogeneous
from opd.poly import Polynomial, check_convexity, profile
from opd.surrogate import (
    LpSumCost,
    PolynomialPower,
    PowerOfLinearForms,
    build_general_surrogate,
    build_homogeneous_surrogate,
    build_lp_norm_cost,
    default_lambda,
    homogeneous_sandwich_slacks,
    validate_lead_terms,
)

from conftest import random_convex_poly, random_point


def test_lead_terms_valid_cases():
    assert validate_lead_terms(Polynomial(2, [(1, (2, 0)), (1, (1, 1)), (1, (0, 2))])) == []
    assert validate_lead_terms(Polynomial(2, [(1, (3, 0))])) == []


def test_lead_terms_missing_certifies_nonconvexity():
    p = Polynomial(2, [(1, (1, 1))])
    assert validate_lead_terms(p) == [0, 1]
    assert not check_convexity(p, trials=16, seed=0).convex


def test_lead_terms_requires_homogeneous():
    with pytest.raises(NotHomogeneous):
        validate_lead_terms(Polynomial(1, [(1, (1,)), (1, (2,))]))


def test_homogeneous_surrogate_unit_coefficients():
    s = build_homogeneous_surrogate(Polynomial(2, [(1, (2, 0)), (1, (0, 2))]), 1)
    assert s.surrogate == Polynomial(2, [(1, (4, 0)), (1, (0, 4))])


def test_homogeneous_surrogate_alpha_scaling():
    s = build_homogeneous_surrogate(Polynomial(1, [(4, (2,))]), 1)
    assert s.alpha == pytest.approx([2.0])
    assert s.surrogate == Polynomial(1, [(16, (4,))])


def test_homogeneous_surrogate_cross_terms():
    s = build_homogeneous_surrogate(
        Polynomial(2, [(1, (2, 0)), (1, (1, 1)), (1, (0, 2))]), 1
    )
    assert s.surrogate == Polynomial(2, [(1, (4, 0)), (1, (2, 2)), (1, (0, 4))])


def test_homogeneous_surrogate_rejects_missing_lead():
    with pytest.raises(LeadTermMissing):
        build_homogeneous_surrogate(Polynomial(2, [(1, (1, 1))]), 1)


def test_surrogate_profile_gains_margin():
    rng = np.random.default_rng(2)
    for _ in range(5):
        f = random_convex_poly(rng, 3, 3)
        pr = profile(f)
        if not pr.is_homogeneous or validate_lead_terms(f):
            continue
        lam = default_lambda(3)
        s = build_homogeneous_surrogate(f, lam)
        spr = profile(s.surrogate)
        assert spr.lambda_mono is not None and spr.lambda_mono >= float(lam) - 1e-12
        assert spr.tau_exact == (1 + lam) * pr.tau_exact


def test_surrogate_euler_bound_and_convexity():
    f = Polynomial(2, [(1, (2, 0)), (1, (1, 1)), (1, (0, 2))])
    s = build_homogeneous_surrogate(f, Fraction(1, 2))
    rng = np.random.default_rng(4)
    tau_hat = float(s.tau)
    for _ in range(20):
        x = random_point(rng, 2)
        lhs = float(s.surrogate.gradient(x) @ x)
        assert lhs <= tau_hat * s.surrogate.evaluate(x) + 1e-9
    assert check_convexity(s.surrogate, trials=32, seed=7).convex


def test_general_surrogate_shapes():
    assert build_general_surrogate(Polynomial(1, [(1, (1,)), (1, (2,))]), 1).surrogate == Polynomial(
        1, [(1, (2,)), (1, (4,))]
    )
    assert build_general_surrogate(Polynomial(1, [(2, (1,))]), 1).surrogate == Polynomial(
        1, [(4, (2,))]
    )


def test_homogeneous_sandwich_worked_point():
    f = Polynomial(2, [(1, (2, 0)), (1, (0, 2))])
    s = build_homogeneous_surrogate(f, 1)
    up, lo = homogeneous_sandwich_slacks(f, s, np.array([1.0, 1.0]))
    # f(1,1)^2 = 4, surrogate = 2: upper slack 4*2-4, lower slack 4 - 2/32
    assert up == pytest.approx(4.0)
    assert lo == pytest.approx(4.0 - 2.0 / 32.0)
    assert homogeneous_sandwich_slacks(f, s, np.zeros(2)) == (0.0, 0.0)


def test_homogeneous_sandwich_random_sweep():
    rng = np.random.default_rng(9)
    f = Polynomial(3, [(1, (2, 0, 0)), (2, (0, 2, 0)), (0.5, (0, 0, 2)), (1, (1, 1, 0))])
    s = build_homogeneous_surrogate(f, Fraction(1, 2))
    for _ in range(100):
        x = rng.uniform(0.0, 4.0, size=3)
        up, lo = homogeneous_sandwich_slacks(f, s, x)
        scale = 1.0 + abs(f.evaluate(x)) ** 1.5 + s.surrogate.evaluate(x)
        assert up >= -1e-9 * scale
        assert lo >= -1e-9 * scale


def test_general_surrogate_envelope_comparison():
    # surrogate <= f**(1+lam) <= N**lam * surrogate, and gradients dominate
    rng = np.random.default_rng(10)
    for _ in range(5):
        f = random_convex_poly(rng, 3, 3)
        count = len(f.monomials)
        lam = default_lambda(count)
        s = build_general_surrogate(f, lam)
        lamf = float(lam)
        g = PolynomialPower(f, 1.0 + lamf)
        for _ in range(20):
            x = random_point(rng, 3, 0.0, 3.0)
            ft = s.surrogate.evaluate(x)
            gv = g.evaluate(x)
            scale = 1.0 + gv + count ** lamf * ft
            assert ft <= gv + 1e-9 * scale
            assert gv <= count ** lamf * ft + 1e-9 * scale
            assert np.all(
                s.surrogate.gradient(x) <= g.gradient(x) + 1e-9 * (1.0 + np.abs(g.gradient(x)))
            )


def test_power_of_linear_forms_single():
    base, h = build_lp_norm_cost([[1.0]], 2, 1)
    x = np.array([1.7])
    assert h.evaluate(x) == pytest.approx(x[0] ** 2)


def test_power_of_linear_forms_ones_form():
    base, h = build_lp_norm_cost([[1.0, 1.0]], 2, 1)
    x = np.array([1.5, 0.7])
    assert h.evaluate(x) == pytest.approx(x[0] ** 2 + x[1] ** 2)
    assert base.evaluate(x) == pytest.approx((x[0] + x[1]) ** 2)


def test_power_of_linear_forms_additive():
    base1, h1 = build_lp_norm_cost([[1.0, 0.5]], 3, Fraction(1, 2))
    base2, h2 = build_lp_norm_cost([[1.0, 0.5], [1.0, 0.5]], 3, Fraction(1, 2))
    x = np.array([0.8, 1.9])
    assert h2.evaluate(x) == pytest.approx(2 * h1.evaluate(x))


def test_power_of_linear_forms_euler_identity():
    rng = np.random.default_rng(12)
    forms = rng.uniform(0.0, 2.0, size=(3, 4))
    forms[forms < 0.5] = 0.0
    forms[:, 0] += 0.5
    base, h = build_lp_norm_cost(forms, 3, Fraction(1, 3))
    for _ in range(20):
        x = random_point(rng, 4, 0.0, 2.0)
        lhs = float(h.gradient(x) @ x)
        rhs = 3.0 * h.evaluate(x)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_power_of_linear_forms_gradient_fd():
    rng = np.random.default_rng(14)
    forms = np.array([[1.0, 0.4], [0.0, 2.0]])
    base, h = build_lp_norm_cost(forms, 2.5, Fraction(1, 2))
    x = random_point(rng, 2, 0.3, 2.0)
    g = h.gradient(x)
    for j in range(2):
        eps = 1e-6
        xp, xm = x.copy(), x.copy()
        xp[j] += eps
        xm[j] -= eps
        fd = (h.evaluate(xp) - h.evaluate(xm)) / (2 * eps)
        assert fd == pytest.approx(g[j], rel=1e-5)


def test_per_form_sandwich():
    rng = np.random.default_rng(15)
    forms = np.array([[1.0, 0.7, 0.0], [0.0, 0.5, 1.2]])
    base, h = build_lp_norm_cost(forms, 2)
    for _ in range(100):
        x = rng.uniform(0.0, 3.0, size=3)
        up, lo = h.per_form_sandwich_slacks(x)
        scale = 1.0 + base.evaluate(x) + h.evaluate(x)
        assert up >= -1e-9 * scale
        assert lo >= -1e-9 * scale


def test_default_lambda_values():
    assert default_lambda(1) == 1
    assert default_lambda(2) == 1
    assert default_lambda(3) == Fraction(1, 2)
    assert default_lambda(4) == Fraction(1, 2)
    assert default_lambda(5) == Fraction(1, 3)
    assert default_lambda(16) == Fraction(1, 4)
