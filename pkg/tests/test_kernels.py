"""The numba kernels and the numpy fallback must compute identical values."""

import numpy as np
import pytest

from opd import _kernels


CASES = []
rng = np.random.default_rng(42)
for n, terms in [(1, 1), (2, 3), (4, 6), (6, 10)]:
    degs = rng.integers(0, 4, size=(terms, n)).astype(float)
    degs[degs == 0.0] = 0.0
    coeffs = rng.uniform(0.1, 2.0, size=terms)
    x = rng.uniform(0.0, 2.0, size=n)
    x[rng.uniform(size=n) < 0.3] = 0.0  # exercise boundary handling
    CASES.append((coeffs, degs, x))


@pytest.mark.parametrize("coeffs,degs,x", CASES)
def test_poly_value_paths_agree(coeffs, degs, x):
    fast = _kernels.poly_value(coeffs, degs, x)
    ref = _kernels._poly_value_np(coeffs, degs, x)
    assert fast == pytest.approx(ref, rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("coeffs,degs,x", CASES)
def test_poly_gradient_paths_agree(coeffs, degs, x):
    fast = np.asarray(_kernels.poly_gradient(coeffs, degs, x))
    ref = _kernels._poly_gradient_np(coeffs, degs, x)
    assert fast == pytest.approx(ref, rel=1e-13, abs=1e-13)


def test_gradient_keeps_degree_one_term_at_zero():
    # d/dx0 of x0 * x1^2 at x0 = 0 must be x1^2, not 0
    coeffs = np.array([1.0])
    degs = np.array([[1.0, 2.0]])
    x = np.array([0.0, 3.0])
    for impl in (_kernels.poly_gradient, _kernels._poly_gradient_np):
        assert np.asarray(impl(coeffs, degs, x)) == pytest.approx([9.0, 0.0])


def test_gradient_two_zero_factors_is_zero():
    coeffs = np.array([1.0])
    degs = np.array([[1.0, 1.0, 1.0]])
    x = np.array([0.0, 0.0, 5.0])
    for impl in (_kernels.poly_gradient, _kernels._poly_gradient_np):
        assert np.all(np.asarray(impl(coeffs, degs, x)) == 0.0)


def test_forms_paths_agree():
    chat = rng.uniform(0.0, 1.5, size=(3, 4))
    x = rng.uniform(0.0, 2.0, size=4)
    x[0] = 0.0
    for inner, outer in [(1.0, 2.0), (1.5, 2.0), (2.0, 1.0)]:
        v1 = _kernels.forms_value(chat, inner, outer, x)
        v2 = _kernels._forms_value_np(chat, inner, outer, x)
        assert v1 == pytest.approx(v2, rel=1e-14)
        g1 = np.asarray(_kernels.forms_gradient(chat, inner, outer, x))
        g2 = _kernels._forms_gradient_np(chat, inner, outer, x)
        assert g1 == pytest.approx(g2, rel=1e-13, abs=1e-14)


def test_batch_eval_matches_pointwise():
    coeffs, degs, _ = CASES[2]
    pts = rng.uniform(0.0, 2.0, size=(50, degs.shape[1]))
    batch = _kernels.poly_value_batch(coeffs, degs, pts, chunk=16)
    single = np.array([_kernels._poly_value_np(coeffs, degs, p) for p in pts])
    assert batch == pytest.approx(single, rel=1e-13)
