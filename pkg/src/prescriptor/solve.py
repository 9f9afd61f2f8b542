"""Weighted prescriptions: min_z sum_i w_i c(z; y_i) and its special cases.

Nonnegative weights go through the problem's LP epigraph.  Large portfolio
and shipment instances use trust-region cutting planes driven by exact
value/subgradient oracles (sorted CVaR tails, network-flow recourse duals).  Negative weights (local-linear) on the portfolio problem
are handled by a big-M branch and bound over the max-term indicators.
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import censoring, trees
from . import weights as wts
from ._rng import derive_seed
from .cutplane import minimize_pwl
from .lp import LpBuilder, solve_lp
from .problems import (CapacitatedNewsvendorProblem, NewsvendorProblem, PortfolioProblem,
                       ShipmentProblem, WEIGHT_FLOOR)


class SolveError(RuntimeError):
    pass


class MethodError(ValueError):
    pass


# scenario counts above which cutting planes replace the monolithic LP
CUTTING_PLANE_MIN = {"shipment": 400, "portfolio": 4000}
WARM_START_SIZE = 100


def _dense_weights(weights, n):
    if isinstance(weights, wts.WeightVector):
        if weights.n_train != n:
            raise SolveError("weight vector does not match the training sample")
        return weights.dense()
    w = np.asarray(weights, dtype=float).ravel()
    if len(w) != n:
        raise SolveError("one weight per scenario required")
    if not np.isfinite(w).all():
        raise SolveError("non-finite weight")
    return w


def _polish(problem, z):
    """Remove solver-tolerance infeasibility from an LP decision."""
    z = np.array(z, dtype=float)
    if isinstance(problem, PortfolioProblem):
        a = np.maximum(z[:-1], 0.0)
        z[:-1] = a / a.sum()
    elif isinstance(problem, ShipmentProblem):
        z = np.maximum(z, 0.0)
    elif isinstance(problem, CapacitatedNewsvendorProblem):
        z = np.maximum(z, 0.0)
        s = z.sum()
        if s > problem.capacity:
            z *= problem.capacity / s
    return z


def weighted_objective(problem, z, w, Y):
    """sum_i w_i c(z; y_i) with exactly rounded summation."""
    return math.fsum(w * problem.cost(z, Y))


def solve_weighted(problem, weights, Y, method="auto"):
    """Minimize sum_i w_i c(z; y_i) over the problem's feasible set.

    Parameters
    ----------
    problem : problem object
    weights : WeightVector or array of length N
    Y : (N, d_y) array
    method : LP backend, ``"auto"``, ``"simplex"`` or ``"highs"``

    Returns
    -------
    z : ndarray
    objective : float
        sum_i w_i c(z; y_i) evaluated directly at the returned z.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    w = _dense_weights(weights, Y.shape[0])
    keep = np.abs(w) >= WEIGHT_FLOOR
    w, Y = w[keep], Y[keep]
    if len(w) == 0:
        raise SolveError("all weights are zero")
    if np.any(w < 0):
        if not isinstance(problem, PortfolioProblem):
            raise SolveError("negative weights unsupported for this problem")
        z = _portfolio_bnb(problem, w, Y, method)
    elif len(w) > CUTTING_PLANE_MIN.get(problem.name, np.inf):
        z = _large_instance(problem, w, Y, method)
    else:
        lp, decode = problem.epigraph(w, Y)
        sol = solve_lp(lp, method)
        if not sol.optimal:
            raise SolveError(f"weighted LP {sol.status}")
        z = decode(sol.x)
    z = _polish(problem, z)
    return z, weighted_objective(problem, z, w, Y)


def solve_saa(problem, Y, method="auto"):
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] == 1 and isinstance(problem, NewsvendorProblem):
        Y = Y.reshape(-1, 1)
    n = Y.shape[0]
    return solve_weighted(problem, np.full(n, 1.0 / n), Y, method)


def solve_point_pred(problem, y_hat, method="auto"):
    y_hat = np.asarray(y_hat, dtype=float).reshape(1, -1)
    if not np.isfinite(y_hat).all():
        raise SolveError("point prediction must be finite")
    return solve_weighted(problem, np.ones(1), y_hat, method)[0]


# ---------------------------------------------------------------------------
# large instances: trust-region cutting planes


def _large_instance(problem, w, Y, method):
    """Warm start from a subsample LP, then trust-region cutting planes."""
    sub = np.linspace(0, len(w) - 1, min(len(w), WARM_START_SIZE)).round().astype(int)
    lp, decode = problem.epigraph(w[sub], Y[sub])
    sol = solve_lp(lp, method)
    z0 = _polish(problem, decode(sol.x)) if sol.optimal else None
    if isinstance(problem, ShipmentProblem):
        zmax = float(Y.max(axis=0).sum())
        z0 = np.zeros(problem.d_z) if z0 is None else np.minimum(z0, zmax)
        return minimize_pwl(lambda z: problem.weighted_value_grad(z, w, Y), z0,
                              [(0.0, zmax)] * problem.d_z)

    def oracle(z):
        v, g, _ = problem.weighted_value_grad(z, w, Y)
        return v, g

    z0 = np.full(problem.d_y, 1.0 / problem.d_y) if z0 is None else z0[:-1]
    z = minimize_pwl(oracle, z0, [(0.0, 1.0)] * problem.d_y, simplex=True)
    z = np.maximum(z, 0.0)
    z /= z.sum()
    return np.append(z, problem.weighted_value_grad(z, w, Y)[2])


# ---------------------------------------------------------------------------
# portfolio with negative weights: big-M branch and bound


def _portfolio_milp_relaxation(problem, w, Y, beta_range, m_off, m_on):
    """LP relaxation with indicator columns for negative-weight scenarios.

    Returns (lp builder, indicator column indices).  With indicator b_i = 0
    the max term m_i is forced to 0 and its argument a_i = -z'y_i - beta
    satisfies a_i <= 0; with b_i = 1, m_i = a_i >= 0.  ``m_off`` bounds -a_i
    and ``m_on`` bounds a_i from above.
    """
    d = problem.d_y
    n = len(w)
    eps = problem.epsilon
    lb = LpBuilder()
    z = lb.add_vars(d, -problem.lam * (w @ Y), 0.0)
    beta = lb.add_vars(1, w.sum(), *beta_range)
    m = lb.add_vars(n, w / eps, 0.0)
    rows = np.repeat(np.arange(n), d + 2)
    cols = np.column_stack([np.tile(z, (n, 1)), np.full(n, beta[0]), m]).ravel()
    vals = np.column_stack([Y, np.ones(n), np.ones(n)]).ravel()
    # m_i >= a_i = -z'y_i - beta
    lb.add_rows(rows, cols, vals, "G", np.zeros(n))
    lb.add_rows(np.zeros(d), z, np.ones(d), "E", [1.0])
    neg = np.flatnonzero(w < 0)
    b = lb.add_vars(len(neg), 0.0, 0.0, 1.0)
    for k, i in enumerate(neg):
        # m_i <= a_i + M_off (1 - b_i)  <=>  m_i + z'y_i + beta + M_off b_i <= M_off
        lb.add_rows(np.zeros(d + 3, dtype=int),
                    np.concatenate([[m[i]], z, beta, [b[k]]]),
                    np.concatenate([[1.0], Y[i], [1.0], [m_off[i]]]), "L", [m_off[i]])
        # m_i <= M_on b_i
        lb.add_rows([0, 0], [m[i], b[k]], [1.0, -m_on[i]], "L", [0.0])
    return lb, b


def _portfolio_bnb(problem, w, Y, method="auto", tol=1e-9, max_nodes=200_000):
    if not w.sum() > 0:
        raise SolveError("weights must have a positive total")
    # with positive total weight an optimal beta is one of the losses -z'y_i,
    # and each loss lies between -max_j y_ij and -min_j y_ij
    lo_loss, hi_loss = -Y.max(axis=1), -Y.min(axis=1)
    beta_range = (float(lo_loss.min()), float(hi_loss.max()))
    # a_i = loss_i - beta ranges over [lo_loss_i - beta_hi, hi_loss_i - beta_lo]
    m_off = np.maximum(beta_range[1] - lo_loss, 0.0)
    m_on = np.maximum(hi_loss - beta_range[0], 0.0)
    builder, bcols = _portfolio_milp_relaxation(problem, w, Y, beta_range, m_off, m_on)
    base = builder.build()
    d = problem.d_y

    def relax(fix):
        lb, ub = base.lb.copy(), base.ub.copy()
        for col, val in fix.items():
            lb[col] = ub[col] = val
        lp = base.__class__(base.c, base.rows, base.cols, base.vals, base.senses, base.b, lb, ub)
        return solve_lp(lp, method)

    best_x, best_obj = None, np.inf

    def prunable(value):
        return np.isfinite(best_obj) and value >= best_obj - tol * (1.0 + abs(best_obj))

    counter = 0
    root = relax({})
    if not root.optimal:
        raise SolveError(f"branch-and-bound root LP {root.status}")
    heap = [(root.objective, counter, {}, root)]
    nodes = 0
    while heap:
        bound, _, fix, sol = heapq.heappop(heap)
        if prunable(bound):
            continue
        nodes += 1
        if nodes > max_nodes:
            raise SolveError("branch and bound node limit reached")
        frac = np.abs(sol.x[bcols] - np.round(sol.x[bcols]))
        if frac.max(initial=0.0) <= 1e-9:
            best_x, best_obj = sol.x, sol.objective
            continue
        col = int(bcols[np.argmax(frac)])
        for val in (0.0, 1.0):
            child = dict(fix)
            child[col] = val
            csol = relax(child)
            if csol.optimal and not prunable(csol.objective):
                counter += 1
                heapq.heappush(heap, (csol.objective, counter, child, csol))
            elif csol.status not in ("optimal", "infeasible"):
                raise SolveError(f"branch-and-bound node LP {csol.status}")
    if best_x is None:
        raise SolveError("branch and bound found no integer solution")
    return best_x[: d + 1].copy()


# ---------------------------------------------------------------------------
# full-information benchmark


def full_info_oracle(problem, sampler, x, m=20000, seed=0, n_halves=5, method="auto"):
    """Monte Carlo approximation of min_z E[c(z; Y) | X = x].

    ``sampler(x, m, seed)`` returns m conditional draws of Y.  The value's
    standard error comes from ``n_halves`` refits on random half-samples.

    Returns
    -------
    z : ndarray
    value : float
    se : float
    """
    Y = np.asarray(sampler(x, m, seed), dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    z, v = solve_saa(problem, Y, method)
    rng = np.random.default_rng(derive_seed(seed, "oracle-halves"))
    halves = []
    for _ in range(n_halves):
        idx = rng.permutation(len(Y))[: len(Y) // 2]
        halves.append(solve_saa(problem, Y[idx], method)[1])
    se = float(np.std(halves, ddof=1) / math.sqrt(2.0)) if n_halves > 1 else float("nan")
    return z, v, se


# ---------------------------------------------------------------------------
# prescription registry


# h = KR_BANDWIDTH_C * N^(-1/(d_x+2)); picked by pilot runs on the portfolio instance
KR_BANDWIDTH_C = 3.0

METHODS = ("knn", "radius-knn", "kr", "recursive-kr", "loess", "cart", "rf", "saa", "point-pred")

DECAYS = {
    "inverse": lambda d: 1.0 / (1.0 + d),
    "exponential": lambda d: math.exp(-d),
    "constant": lambda d: 1.0,
}


@dataclass(frozen=True)
class Prescription:
    """A fitted predictive prescription x -> z."""

    method: str
    hyperparams: dict
    problem: object
    X: np.ndarray
    Y: np.ndarray
    engine: object = None
    censor: tuple = None
    fixed_decision: np.ndarray = None

    @property
    def n_train(self):
        return self.X.shape[0]

    def weights(self, x):
        """Training weights at query x (after any censoring correction)."""
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.X.shape[1]:
            raise MethodError(f"query has dimension {x.shape[0]}, training data {self.X.shape[1]}")
        w = _engine_weights(self, x)
        if self.censor is not None:
            u, delta = self.censor
            w = censoring.km_transform(w, u, delta)
        return w

    def __call__(self, x):
        return prescribe(self, x)


def _engine_weights(p, x):
    hp = p.hyperparams
    n = p.n_train
    if p.method == "knn":
        return wts.knn_weights(p.X, x, hp["k"])
    if p.method == "radius-knn":
        return wts.radius_knn_weights(p.X, x, hp["k"], DECAYS[hp["decay"]])
    if p.method in ("kr", "recursive-kr"):
        try:
            if p.method == "kr":
                return wts.kr_weights(p.X, x, hp["kernel"], hp["h"])
            schedule = wts.BandwidthSchedule(hp["c"], hp["delta_exp"], "per-point")
            return wts.recursive_kr_weights(p.X, x, schedule, hp["kernel"])
        except wts.EmptyNeighborhood:
            if hp.get("empty") == "error":
                raise
            return wts.WeightVector.uniform(n)
    if p.method == "loess":
        return wts.loess_weights(p.X, x, hp["k"], hp["kernel"])
    if p.method in ("cart", "rf"):
        return p.engine.weights(x)
    if p.method == "saa":
        return wts.WeightVector.uniform(n)
    raise MethodError(f"method {p.method!r} has no weight function")


def _resolve_hyperparams(method, hp, n, d_x):
    hp = dict(hp or {})
    if method in ("knn", "radius-knn"):
        hp.setdefault("k", wts.default_k(n))
        if method == "radius-knn":
            hp.setdefault("decay", "inverse")
            if hp["decay"] not in DECAYS:
                raise MethodError(f"unknown decay {hp['decay']!r}")
    elif method == "kr":
        hp.setdefault("kernel", wts.NAIVE)
        if "h" not in hp:
            sched = wts.BandwidthSchedule.default_fixed(d_x, hp.pop("c", KR_BANDWIDTH_C))
            hp["h"] = sched.fixed(n)
    elif method == "recursive-kr":
        hp.setdefault("kernel", wts.NAIVE)
        sched = wts.BandwidthSchedule.default_recursive(d_x, hp.get("c", 1.0))
        hp.setdefault("c", sched.c)
        hp.setdefault("delta_exp", sched.delta_exp)
    elif method == "loess":
        hp.setdefault("k", wts.default_loess_k(n, d_x))
        hp.setdefault("kernel", wts.TRICUBIC)
    elif method == "cart":
        # a single tree needs leaves that grow with N to average out noise
        hp.setdefault("min_leaf", max(5, wts.default_k(n)))
        hp.setdefault("max_depth", None)
    elif method in ("rf", "point-pred"):
        defaults = trees.TreeConfig.forest_defaults(d_x)
        hp.setdefault("n_trees", defaults.n_trees)
        hp.setdefault("min_leaf", defaults.min_leaf)
        hp.setdefault("mtry", defaults.mtry)
        hp.setdefault("subsample", defaults.subsample)
        hp.setdefault("max_depth", None)
    return hp


def make_prescription(method, hyperparams, X, Y, problem, censor=None, seed=0):
    """Fit a prescription.

    Parameters
    ----------
    method : str
        One of ``METHODS``.
    hyperparams : dict or None
        Method options; missing entries get the package defaults.
    X, Y : training covariates and outcomes (Y holds U when censored)
    censor : None or (u, delta)
        Observed values and event indicators; enables the Kaplan-Meier
        weight correction.  Requires univariate outcomes.
    seed : int
        Seed for randomized learners (forests).
    """
    if method not in METHODS:
        raise MethodError(f"unknown method {method!r}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if X.shape[0] != Y.shape[0]:
        raise MethodError("X and Y differ in row count")
    n, d_x = X.shape
    hp = _resolve_hyperparams(method, hyperparams, n, d_x)
    if censor is not None:
        if Y.shape[1] != 1:
            raise MethodError("censoring supports univariate outcomes only")
        u, delta = censor
        censor = (np.asarray(u, dtype=float).ravel(), np.asarray(delta, dtype=bool).ravel())
        if len(censor[0]) != n or len(censor[1]) != n:
            raise MethodError("censoring data do not match the sample")
    engine = None
    fixed = None
    if method == "cart":
        cfg = trees.TreeConfig(max_depth=hp["max_depth"], min_leaf=hp["min_leaf"], seed=seed)
        engine = trees.fit_tree(X, Y, cfg)
    elif method in ("rf", "point-pred"):
        cfg = trees.TreeConfig(max_depth=hp["max_depth"], min_leaf=hp["min_leaf"],
                               mtry=hp["mtry"], subsample=hp["subsample"],
                               n_trees=hp["n_trees"], seed=seed)
        engine = trees.fit_forest(X, Y, cfg)
    elif method == "saa":
        w = wts.WeightVector.uniform(n)
        if censor is not None:
            w = censoring.km_transform(w, *censor)
        fixed = solve_weighted(problem, w, Y)[0]
    return Prescription(method, hp, problem, X, Y, engine, censor, fixed)


def prescribe(prescription, x):
    """Decision for query covariates x."""
    p = prescription
    if p.fixed_decision is not None:
        return p.fixed_decision.copy()
    if p.method == "point-pred":
        x = np.asarray(x, dtype=float).ravel()
        return solve_point_pred(p.problem, p.engine.predict(x))
    return solve_weighted(p.problem, p.weights(x), p.Y)[0]
