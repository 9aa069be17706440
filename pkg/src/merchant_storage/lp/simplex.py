"""Bounded-variable revised simplex with full dual extraction.

Every row ``a x (sense) b`` receives a logical variable ``r`` so that
``a x + r = b`` with ``r >= 0`` (<=), ``r <= 0`` (>=) or ``r = 0`` (=).
The starting basis is the all-logical identity. Feasibility is reached by
a composite phase 1 that minimises the sum of bound infeasibilities of the
basic variables; phase 2 then minimises the true cost. The basis inverse
is kept explicitly (dense) with product-form rank-one updates and periodic
reinversion.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy import sparse

from ..errors import SolverError
from .model import EQ, GE, LE, LinearModel, LpSolution

FEAS_TOL = float(os.environ.get("FEASTOL", 1e-7))
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
REINVERT_EVERY = 64
DEGENERATE_STREAK = 40

_AT_LB, _AT_UB, _FREE, _BASIC = 0, 1, 2, 3


class _Simplex:
    def __init__(self, c, A, senses, b, lb, ub, feas_tol, opt_tol, max_iter):
        m, n = A.shape
        self.m, self.n = m, n
        self.A = sparse.csc_matrix(A)
        self.b = np.asarray(b, dtype=float)
        self.feas_tol, self.opt_tol = feas_tol, opt_tol
        self.max_iter = max_iter or 200 * (m + n) + 1000

        log_lb = np.array([0.0 if s in (LE, EQ) else -math.inf for s in senses])
        log_ub = np.array([0.0 if s in (GE, EQ) else math.inf for s in senses])
        self.lb = np.concatenate([np.asarray(lb, dtype=float), log_lb])
        self.ub = np.concatenate([np.asarray(ub, dtype=float), log_ub])
        self.cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])

        N = n + m
        self.x = np.zeros(N)
        self.state = np.empty(N, dtype=np.int8)
        for j in range(n):
            if math.isfinite(self.lb[j]):
                self.x[j], self.state[j] = self.lb[j], _AT_LB
            elif math.isfinite(self.ub[j]):
                self.x[j], self.state[j] = self.ub[j], _AT_UB
            else:
                self.x[j], self.state[j] = 0.0, _FREE
        self.head = np.arange(n, n + m)
        self.state[n:] = _BASIC
        self.Binv = np.eye(m)
        self.iterations = 0
        self.bland = False
        self._recompute_basics()

    # -- linear algebra ------------------------------------------------------

    def _column(self, j):
        col = np.zeros(self.m)
        if j < self.n:
            s, e = self.A.indptr[j], self.A.indptr[j + 1]
            col[self.A.indices[s:e]] = self.A.data[s:e]
        else:
            col[j - self.n] = 1.0
        return col

    def _ftran(self, j):
        if j < self.n:
            s, e = self.A.indptr[j], self.A.indptr[j + 1]
            rows = self.A.indices[s:e]
            if rows.size == 0:
                return np.zeros(self.m)
            return self.Binv[:, rows] @ self.A.data[s:e]
        return self.Binv[:, j - self.n].copy()

    def _reinvert(self):
        B = np.column_stack([self._column(j) for j in self.head]) if self.m else np.zeros((0, 0))
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular basis at iteration {self.iterations}") from exc
        if not np.all(np.isfinite(self.Binv)):
            raise SolverError(f"non-finite basis inverse at iteration {self.iterations}")
        self._recompute_basics()

    def _recompute_basics(self):
        nonbasic = self.state != _BASIC
        xn = np.where(nonbasic, self.x, 0.0)
        rhs = self.b - self.A @ xn[: self.n] - xn[self.n:]
        self.x[self.head] = self.Binv @ rhs

    # -- pricing -------------------------------------------------------------

    def _infeasibility(self):
        xb = self.x[self.head]
        below = self.lb[self.head] - xb
        above = xb - self.ub[self.head]
        return below, above

    def _phase_costs(self):
        below, above = self._infeasibility()
        tol = self.feas_tol
        if np.any(below > tol) or np.any(above > tol):
            cb = np.where(below > tol, -1.0, np.where(above > tol, 1.0, 0.0))
            return 1, cb, np.zeros(self.n + self.m)
        return 2, self.cost[self.head], self.cost

    def _reduced_costs(self, y, cost):
        d = np.empty(self.n + self.m)
        d[: self.n] = cost[: self.n] - self.A.T @ y
        d[self.n:] = cost[self.n:] - y
        return d

    def _choose_entering(self, d):
        st = self.state
        tol = self.opt_tol
        fixed = self.lb == self.ub
        cand_up = ((st == _AT_LB) | (st == _FREE)) & (d < -tol) & ~fixed
        cand_dn = ((st == _AT_UB) | (st == _FREE)) & (d > tol) & ~fixed
        cand = cand_up | cand_dn
        if not cand.any():
            return -1
        idx = np.flatnonzero(cand)
        if self.bland:
            return int(idx[0])
        return int(idx[np.argmax(np.abs(d[idx]))])

    # -- ratio test ----------------------------------------------------------

    def _ratio_test(self, q, direction, alpha, phase):
        rate = -direction * alpha
        xb = self.x[self.head]
        lb, ub = self.lb[self.head], self.ub[self.head]
        tol = self.feas_tol
        limit = np.full(self.m, math.inf)
        target = np.zeros(self.m, dtype=np.int8)

        dec = rate < -PIVOT_TOL
        inc = rate > PIVOT_TOL
        if phase == 1:
            above = xb > ub + tol
            below = xb < lb - tol
        else:
            above = below = np.zeros(self.m, dtype=bool)
        # decreasing: block at ub if currently above it, else at lb unless already below
        m1 = dec & above
        limit[m1] = (xb[m1] - ub[m1]) / -rate[m1]
        target[m1] = _AT_UB
        m2 = dec & ~above & ~below & np.isfinite(lb)
        limit[m2] = np.maximum(xb[m2] - lb[m2], 0.0) / -rate[m2]
        target[m2] = _AT_LB
        m3 = inc & below
        limit[m3] = (lb[m3] - xb[m3]) / rate[m3]
        target[m3] = _AT_LB
        m4 = inc & ~below & ~above & np.isfinite(ub)
        limit[m4] = np.maximum(ub[m4] - xb[m4], 0.0) / rate[m4]
        target[m4] = _AT_UB

        own = self.ub[q] - self.lb[q]
        theta = float(limit.min()) if self.m else math.inf
        if own <= theta:
            return own, -1, None
        if not math.isfinite(theta):
            return math.inf, -1, None
        ties = np.flatnonzero(limit <= theta + 1e-12)
        if self.bland:
            r = int(ties[np.argmin(self.head[ties])])
        else:
            r = int(ties[np.argmax(np.abs(alpha[ties]))])
        return theta, r, int(target[r])

    # -- main loop -----------------------------------------------------------

    def run(self):
        since_reinvert = 0
        degenerate = 0
        verified = False
        while True:
            if self.iterations >= self.max_iter:
                raise SolverError(f"simplex iteration limit {self.max_iter} reached")
            phase, cb, cost = self._phase_costs()
            y = cb @ self.Binv if self.m else np.zeros(0)
            d = self._reduced_costs(y, cost)
            q = self._choose_entering(d)
            if q < 0:
                if not verified:
                    self._reinvert()
                    since_reinvert = 0
                    verified = True
                    continue
                if phase == 1:
                    return "infeasible", y
                return "optimal", y
            verified = False
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self._ftran(q)
            theta, r, target = self._ratio_test(q, direction, alpha, phase)
            if not math.isfinite(theta):
                if phase == 1:
                    raise SolverError("phase 1 ray without blocking variable")
                return "unbounded", y
            self.iterations += 1
            step = direction * theta
            self.x[q] += step
            self.x[self.head] -= step * alpha
            if r < 0:
                self.state[q] = _AT_UB if direction > 0 else _AT_LB
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
            else:
                leaving = self.head[r]
                self.state[leaving] = target
                self.x[leaving] = self.lb[leaving] if target == _AT_LB else self.ub[leaving]
                self.head[r] = q
                self.state[q] = _BASIC
                piv = alpha[r]
                if abs(piv) < PIVOT_TOL:
                    raise SolverError(f"pivot {piv:.3e} too small at iteration {self.iterations}")
                row = self.Binv[r] / piv
                self.Binv -= np.outer(alpha, row)
                self.Binv[r] = row
                since_reinvert += 1
                if since_reinvert >= REINVERT_EVERY:
                    self._reinvert()
                    since_reinvert = 0
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_STREAK:
                    self.bland = True
            else:
                degenerate = 0
                self.bland = False


def simplex(c, A, senses, b, lb, ub, maximize=False, constant=0.0, feas_tol=FEAS_TOL,
            opt_tol=OPT_TOL, max_iter=None, row_names=None) -> LpSolution:
    """Solve an LP given in array form; see :func:`solve_lp` for conventions."""
    c = np.asarray(c, dtype=float)
    sign = -1.0 if maximize else 1.0
    m, n = A.shape
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub):
        return LpSolution("infeasible", engine="simplex")
    eng = _Simplex(sign * c, A, senses, b, lb, ub, feas_tol, opt_tol, max_iter)
    status, y = eng.run()
    if status == "infeasible":
        rows = []
        if row_names is not None:
            rows = [row_names[i] for i in np.flatnonzero(np.abs(y) > 1e-9)]
        return LpSolution("infeasible", iterations=eng.iterations, infeasible_rows=rows,
                          engine="simplex")
    if status == "unbounded":
        return LpSolution("unbounded", iterations=eng.iterations, engine="simplex")
    x = eng.x[:n].copy()
    # basic values can sit a hair outside their bounds; snap them back
    x = np.minimum(np.maximum(x, lb), ub)
    d = eng._reduced_costs(y, eng.cost)[:n]
    return LpSolution(
        status="optimal",
        x=x,
        duals=sign * y,
        reduced_costs=sign * d,
        objective=float(c @ x) + constant,
        iterations=eng.iterations,
        engine="simplex",
    )


def solve_lp(model: LinearModel, feas_tol=FEAS_TOL, opt_tol=OPT_TOL, max_iter=None) -> LpSolution:
    """Solve ``model`` (binaries must be absent or already relaxed).

    Returned duals are sensitivities ``d objective / d rhs`` in the model's
    own sense, so a binding ``<=`` row of a maximisation has a nonnegative
    dual. Reduced costs are ``c - A^T y``.
    """
    if model.binaries:
        raise ValueError("solve_lp: model has binary variables; relax them first")
    arr = model.arrays()
    return simplex(arr.c, arr.A, arr.senses, arr.b, arr.lb, arr.ub, arr.maximize, arr.constant,
                   feas_tol, opt_tol, max_iter,
                   row_names=[con.name for con in model.constraints])
