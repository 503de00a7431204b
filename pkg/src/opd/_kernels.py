"""Hot numeric kernels: sparse-polynomial and power-of-linear-forms evaluation.

These functions sit inside the inner loops of the round integrators, the
conjugate ascent and the offline oracles, so they carry a numba ``@njit``
fast path.  Setting the environment variable ``OPD_NO_NUMBA=1`` (before
import) selects a pure-numpy fallback computing the same expressions; the
two paths agree to machine precision and are compared in
``benchmarks/bench_kernels.py``.

Conventions shared by both paths:
  * ``0**0 == 1`` (absent variables contribute factor 1);
  * per-variable degrees are either 0 or >= 1, so gradients stay finite
    at the boundary of the non-negative orthant.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = os.environ.get("OPD_NO_NUMBA", "").strip().lower() not in (
    "1",
    "true",
    "yes",
)

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# numba implementations (scalar loops, compiled)
# ---------------------------------------------------------------------------


def _poly_value_loop(coeffs, degs, x):
    n_mono, n = degs.shape
    total = 0.0
    for k in range(n_mono):
        term = coeffs[k]
        for j in range(n):
            d = degs[k, j]
            if d != 0.0:
                term *= x[j] ** d
        total += term
    return total


def _poly_gradient_loop(coeffs, degs, x):
    n_mono, n = degs.shape
    out = np.zeros(n)
    for k in range(n_mono):
        # product over the positive coordinates; count zeros separately so
        # the single-zero-with-degree-one case keeps its finite derivative
        nz = 0
        zi = -1
        prod_pos = coeffs[k]
        for j in range(n):
            d = degs[k, j]
            if d == 0.0:
                continue
            xv = x[j]
            if xv == 0.0:
                nz += 1
                zi = j
                if nz > 1:
                    break
            else:
                prod_pos *= xv ** d
        if nz == 0:
            for j in range(n):
                d = degs[k, j]
                if d != 0.0:
                    out[j] += d * prod_pos / x[j]
        elif nz == 1:
            if degs[k, zi] == 1.0:
                out[zi] += prod_pos
            # degree > 1 at a zero coordinate: derivative is 0
    return out


def _forms_value_loop(chat, inner, outer, x):
    l, n = chat.shape
    total = 0.0
    for k in range(l):
        s = 0.0
        for j in range(n):
            c = chat[k, j]
            if c != 0.0:
                s += c * x[j] ** inner
        total += s ** outer
    return total


def _forms_gradient_loop(chat, inner, outer, x):
    l, n = chat.shape
    out = np.zeros(n)
    for k in range(l):
        s = 0.0
        for j in range(n):
            c = chat[k, j]
            if c != 0.0:
                s += c * x[j] ** inner
        if s == 0.0:
            continue
        scale = outer * s ** (outer - 1.0) * inner
        for j in range(n):
            c = chat[k, j]
            if c != 0.0 and x[j] > 0.0:
                out[j] += scale * c * x[j] ** (inner - 1.0)
    return out


# ---------------------------------------------------------------------------
# numpy fallback (vectorised)
# ---------------------------------------------------------------------------


def _poly_value_np(coeffs, degs, x):
    pw = np.power(x[None, :], degs)  # 0**0 == 1, 0**positive == 0
    return float(np.dot(coeffs, np.prod(pw, axis=1)))


def _poly_gradient_np(coeffs, degs, x):
    n = degs.shape[1]
    pw = np.power(x[None, :], degs)
    out = np.zeros(n)
    for j in range(n):
        dj = degs[:, j]
        active = dj > 0.0
        if not np.any(active):
            continue
        excl = pw.copy()
        excl[:, j] = 1.0
        rest = coeffs * np.prod(excl, axis=1)
        out[j] = float(
            np.sum(dj[active] * rest[active] * np.power(x[j], dj[active] - 1.0))
        )
    return out


def _forms_value_np(chat, inner, outer, x):
    s = chat @ np.power(x, inner)
    return float(np.sum(np.power(s, outer)))


def _forms_gradient_np(chat, inner, outer, x):
    s = chat @ np.power(x, inner)
    pos = s > 0.0
    xin = np.where(x > 0.0, np.power(x, inner - 1.0), 0.0)
    coef = np.zeros_like(s)
    coef[pos] = outer * np.power(s[pos], outer - 1.0) * inner
    return (coef @ chat) * xin


if NUMBA_ENABLED:
    poly_value = njit(cache=True)(_poly_value_loop)
    poly_gradient = njit(cache=True)(_poly_gradient_loop)
    forms_value = njit(cache=True)(_forms_value_loop)
    forms_gradient = njit(cache=True)(_forms_gradient_loop)
else:
    poly_value = _poly_value_np
    poly_gradient = _poly_gradient_np
    forms_value = _forms_value_np
    forms_gradient = _forms_gradient_np


def poly_value_batch(coeffs, degs, pts, chunk=65536):
    """Evaluate a polynomial at many points (rows of ``pts``), chunked.

    Batch evaluation is already memory-bound numpy broadcasting, so it has a
    single vectorised implementation regardless of the numba flag.
    """
    m = pts.shape[0]
    out = np.empty(m)
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        pw = np.power(pts[lo:hi, None, :], degs[None, :, :])
        out[lo:hi] = np.prod(pw, axis=2) @ coeffs
    return out
