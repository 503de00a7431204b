"""Polynomial representation, evaluation, gradients and structure queries."""

import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from opd.errors import DimensionMismatch
from opd.poly import Polynomial, check_convexity, profile

from conftest import random_convex_poly, random_point


def test_evaluate_basic():
    p = Polynomial(2, [(1, (2, 0)), (1, (1, 1))])
    assert p.evaluate([1.0, 1.0]) == pytest.approx(2.0)
    assert p.evaluate([0.0, 0.0]) == 0.0


def test_evaluate_single_monomial_fraction_coeff():
    p = Polynomial(1, [(Fraction(1, 3), (3,))])
    assert p.evaluate([2.0]) == pytest.approx(8.0 / 3.0)


def test_evaluate_dimension_mismatch():
    p = Polynomial(2, [(1, (2, 0))])
    with pytest.raises(DimensionMismatch):
        p.evaluate([1.0])


def test_gradient_analytic():
    p = Polynomial(2, [(1, (2, 0)), (1, (1, 1))])
    assert p.gradient([1.0, 2.0]) == pytest.approx([4.0, 1.0])


def test_gradient_cubic():
    p = Polynomial(1, [(Fraction(1, 3), (3,))])
    assert p.gradient([2.0]) == pytest.approx([4.0])


def test_gradient_zero_at_origin_when_min_degree_two():
    p = Polynomial(2, [(1, (2, 0)), (2, (0, 3)), (1, (2, 2))])
    assert np.all(p.gradient([0.0, 0.0]) == 0.0)


def test_gradient_at_boundary_with_degree_one():
    # d/dx1 of x1*x2^2 at x1=0 is x2^2, finite and nonzero
    p = Polynomial(2, [(1, (1, 2))])
    g = p.gradient([0.0, 3.0])
    assert g == pytest.approx([9.0, 0.0])


def test_canonical_merge_and_zero_drop():
    p = Polynomial(1, [(1, (2,)), (2, (2,)), (0, (1,))])
    assert len(p.monomials) == 1
    assert p.monomials[0].coeff == 3.0


def test_rejects_negative_coeff_and_constant_term():
    with pytest.raises(ValueError):
        Polynomial(1, [(-1, (2,))])
    with pytest.raises(ValueError):
        Polynomial(1, [(1, (0,))])
    with pytest.raises(ValueError):
        Polynomial(1, [(1, ("1/2",))])  # singular gradient at zero


def test_profile_examples():
    p = Polynomial(2, [(1, (4, 0)), (1, (0, 4))])
    pr = profile(p)
    assert pr.tau == 4 and pr.lambda_mono == 3 and pr.is_homogeneous

    q = Polynomial(2, [(1, (2, 0)), (1, (1, 1))])
    qr = profile(q)
    assert qr.tau == 2 and qr.lambda_mono is None and qr.is_homogeneous

    r = Polynomial(1, [(1, (1,)), (1, (2,))])
    rr = profile(r)
    assert rr.tau == 2 and rr.min_degree == 1 and rr.lambda_mono is None
    assert not rr.is_homogeneous


def test_convexity_rejects_pure_cross_term():
    verdict = check_convexity(Polynomial(2, [(1, (1, 1))]), trials=16, seed=1)
    assert not verdict.convex
    assert verdict.witness is not None
    # eigenvalues of [[0,1],[1,0]] are +-1
    assert verdict.min_eigenvalue == pytest.approx(-1.0, abs=1e-12)


def test_convexity_accepts_diagonal_and_psd():
    assert check_convexity(Polynomial(2, [(1, (2, 0)), (1, (0, 2))]), trials=16, seed=1).convex
    # Hessian [[2,1],[1,2]] has eigenvalues 1 and 3
    p = Polynomial(2, [(1, (2, 0)), (1, (1, 1)), (1, (0, 2))])
    assert check_convexity(p, trials=32, seed=1).convex


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(5)
    p = random_convex_poly(rng, 3, 4)
    x = random_point(rng, 3, 0.3, 2.0)
    h = p.hessian(x)
    fd = np.zeros((3, 3))
    eps = 1e-5
    for j in range(3):
        xp, xm = x.copy(), x.copy()
        xp[j] += eps
        xm[j] -= eps
        fd[:, j] = (p.gradient(xp) - p.gradient(xm)) / (2 * eps)
    assert h == pytest.approx(fd, rel=1e-5, abs=1e-7)


# -- randomized structural properties ---------------------------------------


@st.composite
def convex_polys(draw):
    n = draw(st.integers(1, 4))
    tau = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    return random_convex_poly(rng, n, tau), rng


@given(convex_polys(), st.floats(1.0, 8.0))
@settings(max_examples=60, deadline=None)
def test_scaling_never_beats_degree_power(pack, delta):
    p, rng = pack
    x = random_point(rng, p.n)
    tau = float(profile(p).tau)
    lhs = p.evaluate(delta * x)
    rhs = delta ** tau * p.evaluate(x)
    assert lhs <= rhs + 1e-9 * max(1.0, abs(rhs))


@given(convex_polys())
@settings(max_examples=60, deadline=None)
def test_euler_inner_product_under_degree(pack):
    p, rng = pack
    x = random_point(rng, p.n)
    tau = float(profile(p).tau)
    lhs = float(p.gradient(x) @ x)
    rhs = tau * p.evaluate(x)
    assert lhs <= rhs + 1e-9 * max(1.0, abs(rhs))


@given(convex_polys())
@settings(max_examples=60, deadline=None)
def test_gradient_monotone_coordinatewise(pack):
    p, rng = pack
    x = random_point(rng, p.n)
    xp = x + rng.uniform(0.0, 2.0, size=p.n)
    assert np.all(p.gradient(x) <= p.gradient(xp) + 1e-12)


@given(convex_polys())
@settings(max_examples=40, deadline=None)
def test_gradient_power_ratio_monotone_when_margin_present(pack):
    p, rng = pack
    pr = profile(p)
    if pr.lambda_mono is None:
        return
    lam = pr.lambda_mono
    x = random_point(rng, p.n, 0.2, 2.0)
    xp = x + rng.uniform(0.0, 2.0, size=p.n)
    r1 = p.gradient(x) / x ** lam
    r2 = p.gradient(xp) / xp ** lam
    assert np.all(r1 <= r2 + 1e-9 * (1.0 + np.abs(r2)))


@given(convex_polys())
@settings(max_examples=40, deadline=None)
def test_gradient_matches_central_differences(pack):
    p, rng = pack
    x = random_point(rng, p.n, 0.5, 2.0)
    g = p.gradient(x)
    for j in range(p.n):
        eps = 1e-6 * (1.0 + x[j])
        xp, xm = x.copy(), x.copy()
        xp[j] += eps
        xm[j] -= eps
        fd = (p.evaluate(xp) - p.evaluate(xm)) / (2 * eps)
        assert abs(fd - g[j]) <= 1e-6 * max(1.0, abs(g[j]))
