"""Linear programs: container, a revised simplex with Bland's rule, and a
HiGHS backend for the large scenario LPs.

An LP is ``min c'x  s.t.  A x (<=|=|>=) b,  lb <= x <= ub`` with ``A`` in
sparse triplet form.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"

FEAS_TOL = 1e-9
CHECK_TOL = 1e-7

# LPs at most this big go to the simplex under method="auto"
SMALL_ROWS = 60
SMALL_COLS = 250


class LpError(RuntimeError):
    pass


class LinearProgram:
    def __init__(self, c, rows, cols, vals, senses, b, lb=None, ub=None):
        self.c = np.asarray(c, dtype=float)
        n = len(self.c)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=float)
        self.senses = np.asarray(list(senses) if isinstance(senses, str) else senses, dtype="<U1")
        self.b = np.asarray(b, dtype=float)
        self.lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
        self.ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        m = len(self.b)
        if not (len(self.rows) == len(self.cols) == len(self.vals)):
            raise LpError("triplet arrays differ in length")
        if len(self.senses) != m or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LpError("inconsistent LP dimensions")
        if len(self.rows) and (self.rows.max() >= m or self.cols.max() >= n
                               or self.rows.min() < 0 or self.cols.min() < 0):
            raise LpError("triplet index out of range")
        if not set(self.senses.tolist()) <= {"L", "E", "G"}:
            raise LpError("row senses must be L, E or G")
        if not (np.isfinite(self.c).all() and np.isfinite(self.vals).all()
                and np.isfinite(self.b).all()):
            raise LpError("non-finite LP coefficient")

    @property
    def n_vars(self):
        return len(self.c)

    @property
    def n_rows(self):
        return len(self.b)

    def matrix(self):
        return sp.csr_matrix((self.vals, (self.rows, self.cols)),
                             shape=(self.n_rows, self.n_vars))

    def residual(self, x):
        """Largest violation of rows and bounds at x."""
        ax = self.matrix() @ x
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.senses == "L", self.senses == "G", self.senses == "E"
        viol[le] = np.maximum(ax[le] - self.b[le], 0)
        viol[ge] = np.maximum(self.b[ge] - ax[ge], 0)
        viol[eq] = np.abs(ax[eq] - self.b[eq])
        bound = np.maximum(np.maximum(self.lb - x, 0), np.maximum(x - self.ub, 0))
        return max(viol.max(initial=0.0), bound.max(initial=0.0))

    def dumps(self):
        """One line per constraint; debugging aid, not a stable format."""
        out = ["min " + " ".join(f"{v:+.17g}*x{j}" for j, v in enumerate(self.c) if v)]
        A = self.matrix().tocsr()
        op = {"L": "<=", "E": "=", "G": ">="}
        for i in range(self.n_rows):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            terms = " ".join(f"{v:+.17g}*x{j}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            out.append(f"r{i}: {terms} {op[self.senses[i]]} {self.b[i]:.17g}")
        for j in range(self.n_vars):
            if self.lb[j] != 0 or self.ub[j] != np.inf:
                out.append(f"bound x{j}: [{self.lb[j]:.17g}, {self.ub[j]:.17g}]")
        return "\n".join(out) + "\n"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = None
    objective: float = None
    iterations: int = 0
    method: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL


class LpBuilder:
    """Incremental construction of a :class:`LinearProgram`."""

    def __init__(self):
        self.c, self.lb, self.ub = [], [], []
        self.rows, self.cols, self.vals = [], [], []
        self.senses, self.b = [], []

    def add_vars(self, n, cost=0.0, lb=0.0, ub=np.inf):
        start = len(self.c)
        self.c.extend(np.broadcast_to(np.asarray(cost, dtype=float), (n,)).tolist())
        self.lb.extend(np.broadcast_to(np.asarray(lb, dtype=float), (n,)).tolist())
        self.ub.extend(np.broadcast_to(np.asarray(ub, dtype=float), (n,)).tolist())
        return np.arange(start, start + n)

    def add_rows(self, row_idx, col_idx, vals, senses, rhs):
        """Append a block of rows; ``row_idx`` are block-local (0-based)."""
        base = len(self.b)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        self.rows.append(np.asarray(row_idx, dtype=np.int64) + base)
        self.cols.append(np.asarray(col_idx, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))
        self.senses.extend([senses] * len(rhs) if isinstance(senses, str) and len(senses) == 1
                           else list(senses))
        self.b.extend(rhs.tolist())
        return np.arange(base, base + len(rhs))

    def build(self):
        cat = (lambda parts, dt: np.concatenate(parts).astype(dt) if parts
               else np.zeros(0, dtype=dt))
        return LinearProgram(self.c, cat(self.rows, np.int64), cat(self.cols, np.int64),
                             cat(self.vals, float), self.senses, self.b, self.lb, self.ub)


# ---------------------------------------------------------------------------
# revised simplex (dense, two-phase, Bland's rule)


def _standard_form(lp):
    """Rewrite as min c's  s.t.  M s = r, s >= 0, r >= 0.

    Returns (M, r, c, recover, const) where x = recover(s) and the objective
    of the original LP is c's + const.
    """
    n = lp.n_vars
    A = lp.matrix().toarray()
    lb, ub = lp.lb, lp.ub
    cols, costs, maps = [], [], []  # maps: (orig var, sign)
    shift = np.where(np.isfinite(lb), lb, 0.0)
    extra_rows, extra_rhs = [], []
    for j in range(n):
        if np.isfinite(lb[j]):
            cols.append(A[:, j])
            costs.append(lp.c[j])
            maps.append((j, 1.0))
            if np.isfinite(ub[j]):
                extra_rows.append((len(cols) - 1, 1.0))
                extra_rhs.append(ub[j] - lb[j])
        elif np.isfinite(ub[j]):
            # x = ub - s
            shift[j] = ub[j]
            cols.append(-A[:, j])
            costs.append(-lp.c[j])
            maps.append((j, -1.0))
        else:
            cols.append(A[:, j])
            costs.append(lp.c[j])
            maps.append((j, 1.0))
            cols.append(-A[:, j])
            costs.append(-lp.c[j])
            maps.append((j, -1.0))
    m = lp.n_rows
    rhs = lp.b - A @ shift
    nstruct = len(cols)
    M = np.column_stack(cols) if cols else np.zeros((m, 0))
    senses = list(lp.senses)
    if extra_rows:
        block = np.zeros((len(extra_rows), nstruct))
        for r, (col, val) in enumerate(extra_rows):
            block[r, col] = val
        M = np.vstack([M, block])
        rhs = np.concatenate([rhs, extra_rhs])
        senses += ["L"] * len(extra_rows)
    c = np.array(costs, dtype=float)
    # slacks
    slack_cols = []
    for i, s in enumerate(senses):
        if s == "E":
            continue
        col = np.zeros(M.shape[0])
        col[i] = 1.0 if s == "L" else -1.0
        slack_cols.append(col)
    if slack_cols:
        M = np.hstack([M, np.column_stack(slack_cols)])
        c = np.concatenate([c, np.zeros(len(slack_cols))])
    neg = rhs < 0
    M[neg] *= -1
    rhs = np.where(neg, -rhs, rhs)
    const = float(lp.c @ shift)

    def recover(s):
        x = shift.copy()
        for k, (j, sign) in enumerate(maps):
            x[j] += sign * s[k]
        return x

    return M, rhs, c, recover, const


class _Simplex:
    """Bounded-size revised simplex on M s = r, s >= 0 with explicit B^-1."""

    def __init__(self, M, r, max_iter):
        self.M = M
        self.r = r
        self.m, self.n = M.shape
        self.max_iter = max_iter
        self.iterations = 0

    def run(self, cost, basis, allowed):
        """Optimize from a feasible basis.  Returns status."""
        M, m = self.M, self.m
        Binv = np.linalg.inv(M[:, basis])
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                return FAILED, basis
            xb = Binv @ self.r
            y = cost[basis] @ Binv
            reduced = cost - y @ M
            # Bland: first improving non-basic column by index
            in_basis = np.zeros(self.n, dtype=bool)
            in_basis[basis] = True
            cand = np.flatnonzero((reduced < -1e-10) & allowed & ~in_basis)
            if len(cand) == 0:
                return OPTIMAL, basis
            q = cand[0]
            d = Binv @ M[:, q]
            ratios = np.full(m, np.inf)
            pos = d > 1e-11
            ratios[pos] = np.maximum(xb[pos], 0.0) / d[pos]
            # artificial variables pinned at zero leave on any nonzero entry
            art = ~allowed[basis] & (np.abs(d) > 1e-11)
            ratios[art] = 0.0
            if not np.isfinite(ratios).any():
                return UNBOUNDED, basis
            tmin = ratios.min()
            ties = np.flatnonzero(ratios <= tmin + 1e-12)
            p = ties[np.argmin(np.asarray(basis)[ties])]
            basis[p] = q
            self.iterations += 1
            since_refactor += 1
            if since_refactor >= 50:
                Binv = np.linalg.inv(M[:, basis])
                since_refactor = 0
            else:
                piv = d[p]
                row = Binv[p] / piv
                Binv -= np.outer(d, row)
                Binv[p] = row


def _simplex(lp, max_iter=20000):
    M, r, c, recover, const = _standard_form(lp)
    m, n = M.shape
    if m == 0:
        if np.any(c < -1e-12):
            return LpSolution(UNBOUNDED, method="simplex")
        x = recover(np.zeros(n))
        return LpSolution(OPTIMAL, x, float(lp.c @ x), 0, "simplex")
    # phase 1 with one artificial per row
    Mfull = np.hstack([M, np.eye(m)])
    solver = _Simplex(Mfull, r, max_iter)
    basis = list(range(n, n + m))
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    status, basis = solver.run(cost1, basis, allowed)
    if status != OPTIMAL:
        return LpSolution(FAILED, iterations=solver.iterations, method="simplex")
    Binv = np.linalg.inv(Mfull[:, basis])
    xb = Binv @ r
    infeas = sum(xb[i] for i, j in enumerate(basis) if j >= n)
    if infeas > FEAS_TOL * max(1.0, np.abs(r).max()):
        return LpSolution(INFEASIBLE, iterations=solver.iterations, method="simplex")
    # phase 2: artificials may stay basic at zero but never enter
    allowed[n:] = False
    cost2 = np.concatenate([c, np.zeros(m)])
    status, basis = solver.run(cost2, basis, allowed)
    if status != OPTIMAL:
        return LpSolution(status, iterations=solver.iterations, method="simplex")
    xb = np.linalg.solve(Mfull[:, basis], r)
    s = np.zeros(n + m)
    s[basis] = xb
    s = np.maximum(s, 0.0)
    x = recover(s[:n])
    return LpSolution(OPTIMAL, x, float(lp.c @ x), solver.iterations, "simplex")


# ---------------------------------------------------------------------------
# HiGHS


def _highs(lp):
    A = lp.matrix()
    le, ge, eq = lp.senses == "L", lp.senses == "G", lp.senses == "E"
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = lp.b[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isfinite(lp.lb), lp.lb, -np.inf),
                              np.where(np.isfinite(lp.ub), lp.ub, np.inf)])
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options={"primal_feasibility_tolerance": FEAS_TOL,
                                           "dual_feasibility_tolerance": FEAS_TOL})
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        return LpSolution(OPTIMAL, res.x, float(lp.c @ res.x), iters, "highs")
    if res.status == 2:
        return LpSolution(INFEASIBLE, iterations=iters, method="highs")
    if res.status == 3:
        return LpSolution(UNBOUNDED, iterations=iters, method="highs")
    return LpSolution(FAILED, iterations=iters, method="highs")


def solve_lp(lp, method="auto"):
    """Solve ``lp``; an optimal answer is always checked for feasibility.

    ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"`` (simplex for small
    LPs, HiGHS otherwise).  A result whose residual exceeds 1e-7 comes back
    with status ``"failed"`` rather than as a wrong optimum.
    """
    if method == "auto":
        small = lp.n_rows <= SMALL_ROWS and lp.n_vars <= SMALL_COLS
        method = "simplex" if small else "highs"
    if method == "simplex":
        try:
            sol = _simplex(lp)
        except np.linalg.LinAlgError:
            sol = LpSolution(FAILED, method="simplex")
        if sol.status == FAILED:
            sol = _highs(lp)
    elif method == "highs":
        sol = _highs(lp)
    else:
        raise LpError(f"unknown LP method {method!r}")
    if sol.optimal:
        scale = 1.0 + max(np.abs(lp.b).max(initial=0.0), 1.0)
        if lp.residual(sol.x) > CHECK_TOL * scale:
            return LpSolution(FAILED, sol.x, sol.objective, sol.iterations, sol.method)
    return sol
