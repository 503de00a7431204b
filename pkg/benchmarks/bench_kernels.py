"""Compare the numba kernel path against the pure-numpy fallback.

Runs the polynomial and form-power kernels that dominate engine runtime,
in both code paths, and prints per-call timings plus a full engine round
for context.  Usage:

    python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

REPEAT = 20000


def bench_kernels(tag):
    from opd import _kernels
    from opd.covering import CoveringConfig, CoveringInstance, run_covering
    from opd.poly import Polynomial

    rng = np.random.default_rng(0)
    n, terms = 4, 6
    degs = rng.integers(0, 4, size=(terms, n)).astype(float)
    degs[0] = [4, 0, 0, 0]
    coeffs = rng.uniform(0.2, 2.0, size=terms)
    x = rng.uniform(0.1, 2.0, size=n)

    _kernels.poly_value(coeffs, degs, x)  # warm any jit cache
    _kernels.poly_gradient(coeffs, degs, x)

    t0 = time.perf_counter()
    acc = 0.0
    for _ in range(REPEAT):
        acc += _kernels.poly_value(coeffs, degs, x)
    t_val = (time.perf_counter() - t0) / REPEAT

    t0 = time.perf_counter()
    for _ in range(REPEAT):
        g = _kernels.poly_gradient(coeffs, degs, x)
    t_grad = (time.perf_counter() - t0) / REPEAT

    chat = rng.uniform(0.1, 1.0, size=(3, n))
    _kernels.forms_gradient(chat, 1.5, 2.0, x)
    t0 = time.perf_counter()
    for _ in range(REPEAT):
        _kernels.forms_gradient(chat, 1.5, 2.0, x)
    t_forms = (time.perf_counter() - t0) / REPEAT

    # one representative engine round (quartic cost, zero start)
    f = Polynomial(2, [(1.0, (4, 0)), (1.0, (0, 4)), (0.5, (2, 2))])
    inst = CoveringInstance.create(f, [[1.0, 1.0]])
    cfg = CoveringConfig(rho=2.0, eta=1e-9, step_rel=0.0025, lam=1.0)
    t0 = time.perf_counter()
    state, _ = run_covering(inst, cfg)
    t_round = time.perf_counter() - t0
    steps = state.rounds[0].steps

    print(
        f"{tag:>12}: poly_value {t_val * 1e6:8.2f} us | poly_gradient {t_grad * 1e6:8.2f} us"
        f" | forms_gradient {t_forms * 1e6:8.2f} us | engine round {t_round * 1e3:8.1f} ms"
        f" ({steps} steps, {t_round / max(steps, 1) * 1e6:6.1f} us/step)"
    )
    print(f"{'':>12}  checksum {acc:.6g}, gradient tail {g[-1]:.6g}")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        bench_kernels(sys.argv[1])
    else:
        env = dict(os.environ)
        env.pop("OPD_NO_NUMBA", None)
        subprocess.run([sys.executable, __file__, "numba"], env=env, check=True)
        env["OPD_NO_NUMBA"] = "1"
        subprocess.run([sys.executable, __file__, "numpy-only"], env=env, check=True)
