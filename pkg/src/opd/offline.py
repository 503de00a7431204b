"""Offline optimum oracles: the denominators of every empirical ratio.

Three solvers, one per program kind:

  * covering: two independent weak methods that must agree: multi-start
    penalty descent (escalating quadratic penalty plus an exact feasibility
    upscale at the end, with a KKT certificate via non-negative least
    squares) and recursive grid refinement over the feasible box, where
    every grid point is scaled up onto the constraint boundary before
    evaluation.  Disagreement beyond 1e-4 relative is reported as a failed
    status carrying both values.
  * packing: projected gradient ascent (clamp at zero) on the concave
    objective, finished by an active-set Newton polish, with a first-order
    (KKT) residual certificate.
  * auction: projected gradient ascent where each buyer's mass vector is
    projected onto the capped simplex {w >= 0, sum w <= 1} by the
    sorting-based threshold rule.

All randomness is seeded from a digest of the instance data so repeated
calls are bit-identical.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from . import _kernels
from .auction import AuctionInstance, subset_masks
from .cost import CostFunction
from .covering import CoveringInstance
from .packing import PackingInstance
from .poly import Polynomial
from .surrogate import LpSumCost

AGREE_REL_TOL = 1e-4
KKT_TOL = 1e-7
RESTARTS = 8


@dataclass
class OracleResult:
    value: float
    arg: Optional[np.ndarray]
    status: str  # converged | grid-certified | failed | unbounded
    certificate: float  # KKT residual, or grid level gap
    detail: str = ""

    @property
    def usable(self) -> bool:
        return self.status in ("converged", "grid-certified")


def _digest(*arrays) -> int:
    h = 0
    for a in arrays:
        h = zlib.crc32(np.ascontiguousarray(a, dtype=float).tobytes(), h)
    return h


def _batch_eval(cost: CostFunction, pts: np.ndarray) -> np.ndarray:
    if isinstance(cost, Polynomial):
        if not cost.monomials:
            return np.zeros(pts.shape[0])
        return _kernels.poly_value_batch(cost._coeffs, cost._degs, pts)
    if isinstance(cost, LpSumCost):
        return np.sum(np.power(pts @ cost.forms.T, cost.p), axis=1)
    return np.array([cost.evaluate(p) for p in pts])


# ---------------------------------------------------------------------------
# covering
# ---------------------------------------------------------------------------


def _scale_to_feasible(pts: np.ndarray, A: np.ndarray):
    """Scale each point up just enough to satisfy every constraint."""
    cov = pts @ A.T
    worst = np.min(cov, axis=1)
    ok = worst > 0
    s = np.ones(pts.shape[0])
    s[ok] = np.maximum(1.0, 1.0 / worst[ok])
    return pts[ok] * s[ok, None], ok


def _penalty_descent(cost, A, x0, iters=350):
    x = np.maximum(np.asarray(x0, dtype=float), 0.0)
    m = 100.0
    while True:

        def fval(pt):
            gap = np.maximum(1.0 - A @ pt, 0.0)
            return cost.evaluate(pt) + m * float(gap @ gap)

        val = fval(x)
        step = 1.0 / m
        for _ in range(iters):
            gap = np.maximum(1.0 - A @ x, 0.0)
            grad = cost.gradient(x) - 2.0 * m * (A.T @ gap)
            moved = False
            for _ in range(50):
                cand = np.maximum(x - step * grad, 0.0)
                cval = fval(cand)
                if cval < val - 1e-18:
                    x, val = cand, cval
                    step *= 2.0
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
        violation = float(np.max(np.maximum(1.0 - A @ x, 0.0)))
        if violation < 1e-9 or m >= 1e13:
            break
        m *= 10.0
    # exact feasibility upscale
    cov = A @ x
    worst = float(np.min(cov))
    if worst <= 0.0:
        return None
    x = x * max(1.0, 1.0 / worst)
    return x


def _kkt_polish(cost, A, x, iters: int = 40):
    """Newton steps on the active-set stationarity system.

    Treats the constraints with positive fitted multipliers as equalities
    and solves grad f = A^T nu on the support to machine precision.  Falls
    back to the unpolished point if the polish leaves feasibility or
    increases the cost.
    """
    best = x.copy()
    x = x.copy()
    for _ in range(iters):
        x = np.maximum(x, 0.0)
        sup = x > 1e-12
        act = (A @ x) <= 1.0 + 1e-8
        I = np.nonzero(sup)[0]
        if I.size == 0 or not np.any(act):
            break
        rows_all = A[act][:, I]
        g = cost.gradient(x)
        nu_fit, _ = nnls(rows_all.T, g[I])
        eq = nu_fit > 1e-12
        if not np.any(eq):
            break
        rows = rows_all[eq]
        nu = nu_fit[eq]
        f1 = g[I] - rows.T @ nu
        f2 = rows @ x[I] - 1.0
        if max(np.max(np.abs(f1)), np.max(np.abs(f2))) < 1e-14 * max(1.0, float(np.max(np.abs(g)))):
            break
        h = cost.hessian(np.maximum(x, 1e-300))[np.ix_(I, I)]
        k = rows.shape[0]
        kkt = np.block([[h, -rows.T], [rows, np.zeros((k, k))]])
        rhs = -np.concatenate([f1, f2])
        try:
            delta = np.linalg.solve(kkt + 1e-30 * np.eye(kkt.shape[0]), rhs)
        except np.linalg.LinAlgError:
            break
        x[I] = x[I] + delta[: I.size]
    x = np.maximum(x, 0.0)
    worst = float(np.min(A @ x)) if A.shape[0] else 1.0
    if worst <= 0.0:
        return best
    x = x * max(1.0, 1.0 / worst)
    if cost.evaluate(x) <= cost.evaluate(best):
        return x
    return best


def _covering_kkt_residual(cost, A, x) -> float:
    """Stationarity + complementarity residual with multipliers fit by NNLS."""
    g = cost.gradient(x)
    scale = max(1.0, float(np.max(np.abs(g))))
    active = (A @ x) <= 1.0 + 1e-6
    inter = x > 1e-10
    rows = A[active][:, inter]
    if rows.size == 0:
        return float(np.max(np.abs(g[inter]))) / scale if np.any(inter) else 0.0
    nu, _ = nnls(rows.T, g[inter])
    atnu = A[active].T @ nu
    res_inter = np.max(np.abs(g[inter] - atnu[inter])) if np.any(inter) else 0.0
    res_bound = (
        np.max(np.maximum(atnu[~inter] - g[~inter], 0.0)) if np.any(~inter) else 0.0
    )
    comp = np.max(np.abs(nu * ((rows @ x[inter]) - 1.0))) if nu.size else 0.0
    return float(max(res_inter, res_bound, comp)) / scale


def _pattern_polish(cost, A, p0, step0, steps=20000):
    """Derivative-free pattern search on the scale-to-feasible objective.

    Keeps the grid route independent of the gradient-based machinery while
    removing the last grid-resolution bias.  Works on pre-scaling points;
    every candidate is pushed onto the constraint boundary before costing.
    Besides the coordinate directions the stencil carries all signed
    coordinate pairs, which track the ridges the feasibility scaling cuts
    into the landscape.
    """

    def phi(p):
        cov = A @ p
        worst = float(np.min(cov))
        if worst <= 0.0:
            return math.inf, p
        q = p * max(1.0, 1.0 / worst)
        return cost.evaluate(q), q

    n = p0.shape[0]
    scale_vec = np.maximum(np.abs(p0), 0.1 * max(1.0, float(np.max(np.abs(p0)))))
    base_dirs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = scale_vec[i]
        base_dirs.append(e)
        base_dirs.append(-e)
    for i in range(n):
        for j in range(i + 1, n):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    e = np.zeros(n)
                    e[i] = si * scale_vec[i]
                    e[j] = sj * scale_vec[j]
                    base_dirs.append(e)

    def edge_dirs(q):
        # moves inside the null space of the active rows track the edges and
        # corners of the boundary, which coordinate stencils cannot follow
        act = (A @ q) <= 1.0 + 1e-9
        if not np.any(act):
            return []
        rows = A[act]
        u, s, vt = np.linalg.svd(rows, full_matrices=True)
        null = vt[np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 1.0)) :]
        out = []
        for v in null:
            w = v * float(np.max(scale_vec))
            out.append(w)
            out.append(-w)
        return out

    p = np.maximum(p0.copy(), 0.0)
    best, bq = phi(p)
    p = bq.copy()  # search from the feasible representative so null-space
    # moves really track the active edges
    h0 = float(step0) / max(1.0, float(np.max(scale_vec)))
    h = h0
    floor = 1e-10
    used = 0
    while h > floor and used < steps:
        moved = False
        for d in base_dirs + edge_dirs(p):
            cand = np.maximum(p + h * d, 0.0)
            used += 1
            v, q = phi(cand)
            if v < best - 1e-15 * max(1.0, abs(best)):
                best, bq = v, q
                p = q.copy()
                moved = True
        h = min(2.0 * h, h0) if moved else 0.5 * h
    return best, bq


def _grid_refinement(cost, A, box_hi, points_per_dim, max_levels=14, beam=6):
    """Recursive grid refinement with a beam of separated incumbents.

    The boundary surface the feasibility scaling projects onto is a union
    of facets, and the cost restricted to it can have one local minimum
    per facet; refining around several well-separated incumbents keeps the
    facet holding the global minimum in play.  A pattern-search polish
    shaves the final cell-size bias off the best incumbent.
    """
    n = box_hi.shape[0]
    boxes = [(np.zeros(n), box_hi.copy())]
    best_val, best_pt, prev = math.inf, None, math.inf
    gap = math.inf
    depth = 0
    for level in range(max_levels):
        pts_all = []
        for lo, hi in boxes:
            axes = [np.linspace(lo[i], hi[i], points_per_dim) for i in range(n)]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts_all.append(np.stack([m.ravel() for m in mesh], axis=1))
        pts = np.concatenate(pts_all, axis=0)
        feas, _ = _scale_to_feasible(pts, A)
        if feas.shape[0] == 0:
            break
        vals = _batch_eval(cost, feas)
        order = np.argsort(vals, kind="stable")
        sep = float(np.max(box_hi)) * (1.5 / (points_per_dim - 1)) / (level + 1.0)
        leaders = []
        for idx in order:
            p = feas[idx]
            if all(float(np.max(np.abs(p - q))) > sep for q in leaders):
                leaders.append(p.copy())
            if len(leaders) >= beam:
                break
        depth = level + 1
        if float(vals[order[0]]) < best_val:
            best_val, best_pt = float(vals[order[0]]), feas[order[0]].copy()
        gap = abs(prev - best_val)
        if level >= 5 and gap < 1e-7 * max(1.0, abs(best_val)):
            break
        prev = best_val
        span_all = box_hi * (2.5 / (points_per_dim - 1)) * 0.55 ** level
        boxes = [
            (np.maximum(p - span_all, 0.0), np.minimum(p + span_all, box_hi))
            for p in leaders
        ]
    if best_pt is not None:
        step0 = float(np.max(box_hi)) / (points_per_dim - 1)
        polished, ppt = _pattern_polish(cost, A, best_pt, step0)
        if polished < best_val:
            gap = min(gap, best_val - polished)
            best_val, best_pt = polished, ppt
    return best_val, best_pt, depth, gap


def covering_opt(instance: CoveringInstance, restarts: int = RESTARTS) -> OracleResult:
    """Constrained minimum of the covering program by two independent methods."""
    A = np.stack(instance.rounds)
    cost = instance.cost
    n = instance.n
    u = instance.upper_bounds()
    touched = np.isfinite(u)
    box = np.where(touched, u, 0.0)
    rng = np.random.default_rng(_digest(A, box))

    cands = []
    start = np.where(touched, box, 0.0)
    descent = _penalty_descent(cost, A, start)
    if descent is not None:
        cands.append(descent)
    for _ in range(restarts - 1):
        x0 = rng.uniform(0.0, 1.0, size=n) * box
        descent = _penalty_descent(cost, A, x0)
        if descent is not None:
            cands.append(descent)
    if not cands:
        return OracleResult(math.nan, None, "failed", math.inf, "penalty descent found no feasible point")
    vals = [cost.evaluate(x) for x in cands]
    i = int(np.argmin(vals))
    x_pen = _kkt_polish(cost, A, cands[i])
    v_pen = cost.evaluate(x_pen)

    ppd = 15 if n <= 2 else (11 if n == 3 else (9 if n <= 4 else 7))
    v_grid, x_grid, depth, gap = _grid_refinement(cost, A, box, ppd)

    ref = max(1.0, abs(v_pen), abs(v_grid))
    if abs(v_pen - v_grid) > AGREE_REL_TOL * ref:
        return OracleResult(
            min(v_pen, v_grid),
            x_pen if v_pen <= v_grid else x_grid,
            "failed",
            abs(v_pen - v_grid) / ref,
            f"penalty={v_pen!r} grid={v_grid!r}",
        )
    if v_pen <= v_grid:
        kkt = _covering_kkt_residual(cost, A, x_pen)
        if kkt < KKT_TOL:
            return OracleResult(v_pen, x_pen, "converged", kkt, f"grid agrees at {v_grid!r}")
    if depth >= 3 and gap < 1e-6 * max(1.0, abs(v_grid)):
        best = min(v_pen, v_grid)
        arg = x_pen if v_pen <= v_grid else x_grid
        return OracleResult(best, arg, "grid-certified", gap, f"depth={depth}")
    kkt = _covering_kkt_residual(cost, A, x_pen)
    status = "converged" if kkt < KKT_TOL else "failed"
    return OracleResult(v_pen, x_pen, status, kkt, f"grid={v_grid!r} depth={depth}")


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------


def _packing_objective(instance: PackingInstance, A, y):
    z = A.T @ y
    return float(np.sum(y)) - instance.cost_star.evaluate(z)


def _packing_grad(instance, A, y):
    z = A.T @ y
    return 1.0 - A @ instance.cost_star.gradient(z)


def packing_opt(instance: PackingInstance, restarts: int = RESTARTS) -> OracleResult:
    """Unconstrained concave maximum of the packing program over y >= 0."""
    if instance.m == 0:
        return OracleResult(0.0, np.zeros(0), "converged", 0.0, "no rounds")
    A = np.stack(instance.rounds)
    m = instance.m
    rng = np.random.default_rng(_digest(A, instance.cost_star._coeffs, instance.cost_star._degs))
    starts = [np.zeros(m), np.full(m, 0.1)]
    for _ in range(restarts - 2):
        starts.append(rng.uniform(0.0, 1.0, size=m))
    best_y, best_v = None, -math.inf
    for y0 in starts:
        res = _ascend_clamped(
            lambda y: _packing_objective(instance, A, y),
            lambda y: _packing_grad(instance, A, y),
            y0,
        )
        if res is None:
            return OracleResult(math.inf, None, "unbounded", math.inf, "iterates diverged")
        y, v = res
        if v > best_v:
            best_y, best_v = y, v
    best_y, best_v = _newton_polish_packing(instance, A, best_y, best_v)
    g = _packing_grad(instance, A, best_y)
    scale = max(1.0, float(np.max(np.abs(g))) if g.size else 1.0)
    res_pos = np.max(np.abs(g[best_y > 1e-12])) if np.any(best_y > 1e-12) else 0.0
    res_zero = np.max(np.maximum(g[best_y <= 1e-12], 0.0)) if np.any(best_y <= 1e-12) else 0.0
    kkt = float(max(res_pos, res_zero)) / scale
    status = "converged" if kkt < KKT_TOL else "failed"
    return OracleResult(best_v, best_y, status, kkt)


def _ascend_clamped(fval, fgrad, y0, max_iter=4000, bound=1e10):
    y = np.maximum(np.asarray(y0, dtype=float), 0.0)
    v = fval(y)
    step = 1.0
    for _ in range(max_iter):
        g = fgrad(y)
        proj = np.where((y <= 0.0) & (g < 0.0), 0.0, g)
        if float(np.linalg.norm(proj)) < 1e-12:
            break
        moved = False
        for _ in range(60):
            cand = np.maximum(y + step * g, 0.0)
            cv = fval(cand)
            if cv > v + 1e-18:
                y, v = cand, cv
                step *= 2.0
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        if float(np.max(y)) > bound:
            return None
    return y, v


def _newton_polish_packing(instance, A, y, v):
    cost = instance.cost_star
    for _ in range(40):
        g = _packing_grad(instance, A, y)
        free = (y > 1e-12) | (g > 0.0)
        if not np.any(free):
            break
        gf = g[free]
        if float(np.linalg.norm(gf)) < 1e-15:
            break
        z = A.T @ y
        h = A[free] @ cost.hessian(np.maximum(z, 1e-300)) @ A[free].T
        try:
            delta = np.linalg.solve(h + 1e-18 * np.eye(h.shape[0]), gf)
        except np.linalg.LinAlgError:
            break
        cand = y.copy()
        cand[free] = np.maximum(cand[free] + delta, 0.0)
        cv = _packing_objective(instance, A, cand)
        if cv >= v:
            y, v = cand, cv
        else:
            break
    return y, v


# ---------------------------------------------------------------------------
# auction
# ---------------------------------------------------------------------------


def project_capped_simplex(w: np.ndarray, cap: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x <= cap} (sorting rule)."""
    p = np.maximum(w, 0.0)
    if float(np.sum(p)) <= cap:
        return p
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - cap
    ks = np.arange(1, w.shape[0] + 1)
    cond = u - css / ks > 0.0
    k = int(np.nonzero(cond)[0][-1]) + 1
    theta = css[k - 1] / k
    return np.maximum(w - theta, 0.0)


def auction_opt(instance: AuctionInstance, restarts: int = 4, max_iter: int = 6000) -> OracleResult:
    """Welfare maximum over fractional allocations with per-buyer unit mass.

    Works on the normalized values (empty-set value zero); the reported
    optimum matches the engine's normalized welfare.
    """
    n, m = instance.n, instance.m
    if m == 0:
        return OracleResult(0.0, None, "converged", 0.0, "no buyers")
    masks = subset_masks(n)
    vmat = np.stack(instance.values)  # (m, 2**n)
    cost = instance.cost_star

    def zvec(Y):
        return masks.T @ Y.sum(axis=0)

    def fval(Y):
        return float(np.sum(vmat * Y)) - cost.evaluate(zvec(Y))

    def fgrad(Y):
        gz = cost.gradient(zvec(Y))
        return vmat - (masks @ gz)[None, :]

    rng = np.random.default_rng(_digest(vmat, cost._coeffs, cost._degs))
    starts = [np.zeros((m, 2 ** n))]
    for _ in range(restarts - 1):
        Y0 = rng.uniform(0.0, 1.0, size=(m, 2 ** n))
        starts.append(np.stack([project_capped_simplex(row) for row in Y0]))
    best_Y, best_v = None, -math.inf
    for Y in starts:
        v = fval(Y)
        step = 1.0
        for _ in range(max_iter):
            G = fgrad(Y)
            moved = False
            for _ in range(60):
                cand = Y + step * G
                cand = np.stack([project_capped_simplex(row) for row in cand])
                cv = fval(cand)
                if cv > v + 1e-16:
                    Y, v = cand, cv
                    step *= 2.0
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
        if v > best_v:
            best_Y, best_v = Y, v

    # KKT residual with per-buyer cap multipliers
    G = fgrad(best_Y)
    scale = max(1.0, float(np.max(np.abs(G))))
    worst = 0.0
    for j in range(m):
        gj, yj = G[j], best_Y[j]
        mass = float(np.sum(yj))
        theta = max(0.0, float(np.max(gj))) if mass >= 1.0 - 1e-9 else 0.0
        on = yj > 1e-10
        if np.any(on):
            worst = max(worst, float(np.max(np.abs(gj[on] - theta))))
        if np.any(~on):
            worst = max(worst, float(np.max(np.maximum(gj[~on] - theta, 0.0))))
    kkt = worst / scale
    status = "converged" if kkt < KKT_TOL else "failed"
    return OracleResult(best_v, best_Y, status, kkt)


# ---------------------------------------------------------------------------
# brute-force cross checks (used by the test suite)
# ---------------------------------------------------------------------------


def brute_force_covering(instance: CoveringInstance, resolution: float = 1e-3) -> float:
    """Dense-grid covering minimum for tiny instances (n <= 2)."""
    A = np.stack(instance.rounds)
    u = instance.upper_bounds()
    box = np.where(np.isfinite(u), u, 0.0)
    axes = [np.arange(0.0, b + resolution, resolution * max(b, 1.0)) for b in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    feas, _ = _scale_to_feasible(pts, A)
    vals = _batch_eval(instance.cost, feas)
    return float(np.min(vals))


def brute_force_packing(instance: PackingInstance, y_max: float, resolution: float = 1e-3) -> float:
    """Dense-grid packing maximum for tiny instances (m <= 2)."""
    A = np.stack(instance.rounds)
    axes = [np.arange(0.0, y_max + resolution, resolution * max(y_max, 1.0))] * instance.m
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    zs = pts @ A
    costs = _batch_eval(instance.cost_star, zs)
    return float(np.max(np.sum(pts, axis=1) - costs))
