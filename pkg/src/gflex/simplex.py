"""Dense revised simplex.

Used both as the restricted-master solver of the column-generation loop and
as an LP engine for the reference checks.  Problems are small (at most a few
thousand nonzeros), so the basis inverse is kept explicitly and refactored
periodically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._jit import jit

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
BLAND_AFTER = 20  # consecutive degenerate pivots before switching rules


@jit
def _pivot_loop(A, Binv, xB, basis, costs, blocked, artificial, phase2, opt_tol, budget,
                degenerate):
    """Pivot in place until optimal, unbounded or ``budget`` pivots are spent.

    Entering column: most negative reduced cost, or the lowest eligible
    index (Bland) after ``BLAND_AFTER`` consecutive degenerate pivots.
    Leaving row: minimum ratio, ties to the lowest basic column index.  In
    phase two an artificial still basic at zero leaves first.

    Returns ``(code, pivots, degenerate)`` with code 0 optimal, 1 unbounded,
    2 budget spent.
    """
    m, n = A.shape
    y = np.empty(m)
    d = np.empty(m)
    row = np.empty(m)
    is_basic = np.zeros(n, dtype=np.bool_)
    pivots = 0
    while pivots < budget:
        for r in range(m):
            acc = 0.0
            for i in range(m):
                acc += costs[basis[i]] * Binv[i, r]
            y[r] = acc
        is_basic[:] = False
        for i in range(m):
            is_basic[basis[i]] = True
        bland = degenerate >= BLAND_AFTER
        j = -1
        best = -opt_tol
        for col in range(n):
            if blocked[col] or is_basic[col]:
                continue
            rc = costs[col]
            for i in range(m):
                rc -= y[i] * A[i, col]
            if rc < best:
                best = rc
                j = col
                if bland:
                    break
        if j < 0:
            return 0, pivots, degenerate
        for r in range(m):
            acc = 0.0
            for i in range(m):
                acc += Binv[r, i] * A[i, j]
            d[r] = acc
        theta = np.inf
        for r in range(m):
            if d[r] > PIVOT_TOL and xB[r] / d[r] < theta:
                theta = xB[r] / d[r]
        leave = -1
        for r in range(m):
            if d[r] > PIVOT_TOL and xB[r] / d[r] <= theta + 1e-12:
                if leave < 0 or basis[r] < basis[leave]:
                    leave = r
        if phase2:
            stuck = -1
            for r in range(m):
                if artificial[basis[r]] and abs(d[r]) > PIVOT_TOL:
                    if stuck < 0 or basis[r] < basis[stuck]:
                        stuck = r
            if stuck >= 0:
                leave = stuck
                theta = 0.0
        if leave < 0:
            return 1, pivots, degenerate
        theta = max(theta, 0.0)
        if theta * d[leave] <= 1e-12:
            degenerate += 1
        else:
            degenerate = 0
        for r in range(m):
            xB[r] = max(xB[r] - theta * d[r], 0.0)
        xB[leave] = theta
        piv = d[leave]
        for c in range(m):
            row[c] = Binv[leave, c] / piv
        for r in range(m):
            if r != leave and d[r] != 0.0:
                f = d[r]
                for c in range(m):
                    Binv[r, c] -= f * row[c]
        for c in range(m):
            Binv[leave, c] = row[c]
        basis[leave] = j
        pivots += 1
    return 2, pivots, degenerate


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class RevisedSimplex:
    """``min c x  s.t.  A x = b, x >= 0`` with ``b >= 0`` and a unit starting basis.

    ``basis[r]`` must be a column equal to the ``r``-th unit vector.  Columns
    flagged ``artificial`` drive phase one and never re-enter afterwards.
    Columns can be appended between solves; the current basis stays primal
    feasible, so solving continues from where it stopped.
    """

    def __init__(self, A, b, c, basis, artificial, max_iter: int = 50_000):
        self.A = np.ascontiguousarray(np.array(A, dtype=float, ndmin=2))
        self.b = np.array(b, dtype=float)
        self.c = np.array(c, dtype=float)
        self.artificial = np.array(artificial, dtype=bool)
        self.basis = np.array(basis, dtype=np.int64)
        self.m = self.A.shape[0]
        if (self.b < 0).any():
            raise ValueError("right-hand side must be nonnegative")
        if len(self.basis) != self.m:
            raise ValueError("need one basic column per row")
        self.Binv = np.eye(self.m)
        self.xB = self.b.copy()
        self.max_iter = max_iter
        self.iterations = 0
        self._since_refactor = 0
        self.phase = 1 if self.artificial[self.basis].any() else 2

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def add_columns(self, cols, costs, artificial=False) -> list[int]:
        cols = np.array(cols, dtype=float).reshape(self.m, -1)
        start = self.n
        self.A = np.ascontiguousarray(np.hstack([self.A, cols]))
        self.c = np.concatenate([self.c, np.atleast_1d(np.asarray(costs, dtype=float))])
        self.artificial = np.concatenate(
            [self.artificial, np.full(cols.shape[1], bool(artificial))])
        return list(range(start, self.n))

    def _phase_costs(self) -> np.ndarray:
        return self.artificial.astype(float) if self.phase == 1 else self.c

    def _refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self._since_refactor = 0

    def _pivot(self, r: int, j: int, d: np.ndarray, theta: float):
        self.xB -= theta * d
        self.xB[r] = theta
        np.maximum(self.xB, 0.0, out=self.xB)
        piv_row = self.Binv[r] / d[r]
        self.Binv -= d[:, None] * piv_row
        self.Binv[r] = piv_row
        self.basis[r] = j
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self._refactor()

    def duals(self, costs=None) -> np.ndarray:
        costs = self._phase_costs() if costs is None else costs
        return costs[self.basis] @ self.Binv

    def objective(self, costs=None) -> float:
        costs = self._phase_costs() if costs is None else costs
        return float(costs[self.basis] @ self.xB)

    def x(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.basis] = self.xB
        return out

    def _iterate(self) -> str:
        costs = np.ascontiguousarray(self._phase_costs())
        opt_tol = 1e-11 * (1.0 + np.abs(costs).max(initial=0.0))
        blocked = self.artificial if self.phase == 2 else np.zeros(self.n, dtype=bool)
        degenerate = 0
        while True:
            left = self.max_iter - self.iterations
            if left <= 0:
                return ITERATION_LIMIT
            budget = min(left, REFACTOR_EVERY - self._since_refactor)
            code, pivots, degenerate = _pivot_loop(
                self.A, self.Binv, self.xB, self.basis, costs, blocked, self.artificial,
                self.phase == 2, opt_tol, budget, degenerate)
            self.iterations += pivots
            self._since_refactor += pivots
            if code == 0:
                return OPTIMAL
            if code == 1:
                return UNBOUNDED
            if self._since_refactor >= REFACTOR_EVERY:
                self._refactor()

    def _leave_phase_one(self):
        self.phase = 2
        for r in range(self.m):
            if not self.artificial[self.basis[r]]:
                continue
            row = self.Binv[r] @ self.A
            is_basic = np.zeros(self.n, dtype=bool)
            is_basic[self.basis] = True
            cand = np.flatnonzero((np.abs(row) > PIVOT_TOL) & ~self.artificial & ~is_basic)
            if cand.size:
                j = int(cand[0])
                self._pivot(r, j, self.Binv @ self.A[:, j], 0.0)

    def solve(self, feas_tol: float = 1e-9, refactor: bool = True) -> str:
        """Run phase one (if still needed) and phase two.

        ``refactor`` recomputes the basis inverse from scratch at the end;
        callers re-solving after every column addition may defer that.
        """
        if self.phase == 1:
            status = self._iterate()
            if status != OPTIMAL:
                return status
            self._refactor()
            if self.objective() > feas_tol * (1.0 + np.abs(self.b).max(initial=0.0)):
                return INFEASIBLE
            self._leave_phase_one()
        status = self._iterate()
        if status == OPTIMAL and refactor and self._since_refactor:
            self._refactor()
        return status


def simplex_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
                  max_iter: int = 50_000) -> LPResult:
    """Minimize ``c x`` subject to ``A_ub x <= b_ub``, ``A_eq x == b_eq`` and bounds.

    ``bounds`` is a list of ``(lo, hi)`` pairs (``None`` or infinities for
    free directions) or a single pair applied to every variable; the default
    is ``x >= 0``.  Duals follow the sensitivity convention: ``duals_ub[i]`` is
    the derivative of the optimal value with respect to ``b_ub[i]`` (so it is
    nonpositive), likewise for ``duals_eq``.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if len(b_ub) != A_ub.shape[0] or len(b_eq) != A_eq.shape[0]:
        raise ValueError("constraint matrix and right-hand side disagree")
    for arr in (c, A_ub, b_ub, A_eq, b_eq):
        if not np.isfinite(arr).all():
            raise ValueError("LP data must be finite")
    if bounds is None:
        bounds = [(0.0, None)] * n
    elif len(bounds) == 2 and not isinstance(bounds[0], (tuple, list)):
        bounds = [tuple(bounds)] * n
    if len(bounds) != n:
        raise ValueError("one bound pair per variable")

    # x = offset + M z with z >= 0
    offset = np.zeros(n)
    cols = []
    extra_rows = []  # (column of z, upper bound)
    for i, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            return LPResult(INFEASIBLE, duals_ub=np.zeros(len(b_ub)),
                            duals_eq=np.zeros(len(b_eq)))
        if np.isfinite(lo):
            offset[i] = lo
            cols.append((i, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    nz = len(cols)
    M = np.zeros((n, nz))
    for k, (i, sgn) in enumerate(cols):
        M[i, k] = sgn

    n_ub = A_ub.shape[0] + len(extra_rows)
    rows_ub = np.zeros((n_ub, nz))
    rhs_ub = np.zeros(n_ub)
    rows_ub[:A_ub.shape[0]] = A_ub @ M
    rhs_ub[:A_ub.shape[0]] = b_ub - A_ub @ offset
    for r, (k, ub) in enumerate(extra_rows, start=A_ub.shape[0]):
        rows_ub[r, k] = 1.0
        rhs_ub[r] = ub
    rows_eq = A_eq @ M
    rhs_eq = b_eq - A_eq @ offset

    m = n_ub + rows_eq.shape[0]
    sign = np.ones(m)
    rhs = np.concatenate([rhs_ub, rhs_eq])
    sign[rhs < 0] = -1.0
    body = np.vstack([rows_ub, rows_eq]) if m else np.zeros((0, nz))
    slack = np.vstack([np.eye(n_ub), np.zeros((rows_eq.shape[0], n_ub))]) if m else np.zeros((0, 0))
    A_std = sign[:, None] * np.hstack([body, slack])
    b_std = sign * rhs
    c_std = np.concatenate([M.T @ c, np.zeros(n_ub)])
    n_std = nz + n_ub
    basis = []
    art_cols = []
    for r in range(m):
        if r < n_ub and sign[r] > 0:
            basis.append(nz + r)
        else:
            basis.append(n_std + len(art_cols))
            art_cols.append(r)
    art = np.zeros((m, len(art_cols)))
    for k, r in enumerate(art_cols):
        art[r, k] = 1.0
    A_full = np.hstack([A_std, art]) if m else np.zeros((0, n_std))
    c_full = np.concatenate([c_std, np.zeros(len(art_cols))])
    artificial = np.concatenate([np.zeros(n_std, dtype=bool), np.ones(len(art_cols), dtype=bool)])

    if m == 0:
        if (c_std < 0).any():
            return LPResult(UNBOUNDED)
        x = offset.copy()
        return LPResult(OPTIMAL, x=x, objective=float(c @ x))

    lp = RevisedSimplex(A_full, b_std, c_full, basis, artificial, max_iter=max_iter)
    status = lp.solve()
    res = LPResult(status, iterations=lp.iterations,
                   duals_ub=np.zeros(len(b_ub)), duals_eq=np.zeros(len(b_eq)))
    if status != OPTIMAL:
        return res
    z = lp.x()[:nz]
    x = offset + M @ z
    y = lp.duals(c_full) * sign
    res.x = x
    res.objective = float(c @ x)
    res.duals_ub = y[:A_ub.shape[0]]
    res.duals_eq = y[n_ub:]
    return res
