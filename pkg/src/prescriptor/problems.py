"""Decision problems: cost oracles and LP epigraph formulations.

Each problem exposes ``cost(decision, Y)`` (vectorized over the rows of Y),
``feasible(decision)`` and ``epigraph(weights, Y)``, which returns a
:class:`LinearProgram` whose optimal value is min over feasible decisions of
sum_i w_i c(z; y_i) plus a decoder mapping an LP solution to the decision.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import flow
from .lp import LpBuilder, LpError, solve_lp

WEIGHT_FLOOR = 1e-12


class ProblemError(ValueError):
    pass


def _scenarios(weights, Y):
    weights = np.asarray(weights, dtype=float).ravel()
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if len(weights) != Y.shape[0]:
        raise ProblemError("one weight per scenario required")
    if np.any(weights < 0):
        raise ProblemError("epigraph formulation invalid for negative weights")
    keep = weights >= WEIGHT_FLOOR
    return weights[keep], Y[keep]


@dataclass(frozen=True)
class PortfolioProblem:
    """Mean-CVaR allocation; the decision is (z_1..z_d, beta)."""

    lam: float = 0.0
    epsilon: float = 0.15
    d_y: int = 12
    name: str = field(default="portfolio", init=False)

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ProblemError("epsilon must lie in (0, 1)")
        if self.lam < 0:
            raise ProblemError("lambda must be >= 0")

    @property
    def decision_dim(self):
        return self.d_y + 1

    @property
    def supports_negative_weights(self):
        return True

    def cost(self, decision, Y):
        decision = np.asarray(decision, dtype=float)
        z, beta = decision[:-1], decision[-1]
        ret = np.atleast_2d(Y) @ z
        return beta + np.maximum(-ret - beta, 0.0) / self.epsilon - self.lam * ret

    def feasible(self, decision, tol=1e-7):
        z = np.asarray(decision)[:-1]
        return bool(np.all(z >= -tol) and abs(z.sum() - 1.0) <= tol)

    def epigraph(self, weights, Y, beta_bound=None):
        w, Y = _scenarios(weights, Y)
        d = self.d_y
        lb = LpBuilder()
        wsum = w.sum()
        zc = -self.lam * (w @ Y)
        z = lb.add_vars(d, zc, 0.0)
        blo, bhi = (-np.inf, np.inf) if beta_bound is None else (-beta_bound, beta_bound)
        beta = lb.add_vars(1, wsum, blo, bhi)
        m = lb.add_vars(len(w), w / self.epsilon, 0.0)
        n = len(w)
        # m_i + z'y_i + beta >= 0
        rows = np.repeat(np.arange(n), d + 2)
        cols = np.column_stack([np.tile(z, (n, 1)), np.full(n, beta[0]), m]).ravel()
        vals = np.column_stack([Y, np.ones(n), np.ones(n)]).ravel()
        lb.add_rows(rows, cols, vals, "G", np.zeros(n))
        lb.add_rows(np.zeros(d), z, np.ones(d), "E", [1.0])
        lp = lb.build()
        return lp, lambda x: x[: d + 1].copy()

    def weighted_value_grad(self, z, w, Y):
        """min over beta of sum_i w_i c((z, beta); y_i), a subgradient in z and
        the minimizing beta.

        The minimizing beta is the weighted (1 - epsilon) quantile of the
        losses -z'y; the tie at the quantile gets the fractional weight that
        makes the beta-subgradient vanish.
        """
        loss = -(Y @ z)
        order = np.argsort(-loss, kind="stable")
        cw = np.cumsum(w[order])
        target = self.epsilon * cw[-1]
        k = min(int(np.searchsorted(cw, target)), len(cw) - 1)
        tail = np.zeros(len(w))
        tail[order[:k]] = w[order[:k]]
        tail[order[k]] = target - (cw[k - 1] if k > 0 else 0.0)
        beta = loss[order[k]]
        value = math.fsum(tail * loss) / self.epsilon - self.lam * math.fsum(w * (Y @ z))
        grad = -(tail @ Y) / self.epsilon - self.lam * (w @ Y)
        return value, grad, beta

    def point_value(self, y):
        """min over the feasible set of c(.; y)."""
        return -float(np.max(y)) * (1.0 + self.lam)

    def to_dict(self):
        return {"name": self.name, "lam": self.lam, "epsilon": self.epsilon, "d_y": self.d_y}


def shipment_network(n_locations=12, n_warehouses=4, radius=0.85):
    """Distance matrix (warehouses x locations) for locations evenly spaced
    on the unit circle and warehouses evenly spaced on a smaller circle."""
    a = 2 * np.pi * np.arange(n_locations) / n_locations
    b = 2 * np.pi * np.arange(n_warehouses) / n_warehouses
    loc = np.column_stack([np.cos(a), np.sin(a)])
    wh = radius * np.column_stack([np.cos(b), np.sin(b)])
    return np.linalg.norm(wh[:, None, :] - loc[None, :, :], axis=2)


@dataclass(frozen=True)
class ShipmentProblem:
    """Two-stage shipment planning; the decision is the stock z (d_z)."""

    ship_cost: np.ndarray = None
    p1: float = 5.0
    p2: float = 100.0
    name: str = field(default="shipment", init=False)

    def __post_init__(self):
        sc = 10.0 * shipment_network() if self.ship_cost is None else self.ship_cost
        sc = np.asarray(sc, dtype=float)
        if sc.ndim != 2 or np.any(sc < 0):
            raise ProblemError("ship_cost must be a non-negative matrix")
        if not self.p2 > self.p1 > 0:
            raise ProblemError("need p2 > p1 > 0")
        object.__setattr__(self, "ship_cost", sc)

    @property
    def d_z(self):
        return self.ship_cost.shape[0]

    @property
    def d_y(self):
        return self.ship_cost.shape[1]

    @property
    def decision_dim(self):
        return self.d_z

    @property
    def supports_negative_weights(self):
        return False

    def cost(self, decision, Y):
        """Vectorized cost via the exact network-flow recourse solver."""
        z = np.asarray(decision, dtype=float)
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return self.p1 * z.sum() + flow.recourse(z, Y, self.ship_cost, self.p2)

    def extended_cost(self, Z, Y, subgradient=False):
        """Cost with first stage p1 * sum(max(z, 0)), defined for any real z.

        Z holds one decision per row of Y.  With ``subgradient=True`` also
        returns a subgradient per row.
        """
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        val, rho = flow.recourse(Z, Y, self.ship_cost, self.p2, duals=True)
        val = val + self.p1 * np.maximum(Z, 0.0).sum(axis=1)
        if not subgradient:
            return val
        return val, self.p1 * (Z > 0) - rho

    def feasible(self, decision, tol=1e-7):
        return bool(np.all(np.asarray(decision) >= -tol))

    def weighted_value_grad(self, z, w, Y):
        """sum_i w_i c(z; y_i) for z >= 0 and a subgradient."""
        q, rho = flow.recourse(z, Y, self.ship_cost, self.p2, duals=True)
        value = self.p1 * float(z.sum()) * math.fsum(w) + math.fsum(w * q)
        return value, self.p1 * w.sum() - w @ rho

    def _recourse_block(self, lb, z, w, y):
        dz, dy = self.ship_cost.shape
        t = lb.add_vars(dz, w * self.p2, 0.0)
        s = lb.add_vars(dz * dy, w * self.ship_cost.ravel(), 0.0)
        s_mat = s.reshape(dz, dy)
        # sum_i s_ij >= y_j
        lb.add_rows(np.repeat(np.arange(dy), dz), s_mat.T.ravel(), np.ones(dz * dy), "G", y)
        # sum_j s_ij - z_i - t_i <= 0
        rows = np.repeat(np.arange(dz), dy + 2)
        cols = np.column_stack([s_mat, z, t]).ravel()
        vals = np.column_stack([np.ones((dz, dy)), -np.ones(dz), -np.ones(dz)]).ravel()
        lb.add_rows(rows, cols, vals, "L", np.zeros(dz))

    def epigraph(self, weights, Y):
        w, Y = _scenarios(weights, Y)
        lb = LpBuilder()
        z = lb.add_vars(self.d_z, self.p1 * w.sum(), 0.0)
        for wi, yi in zip(w, Y):
            self._recourse_block(lb, z, wi, yi)
        return lb.build(), lambda x: x[: self.d_z].copy()

    def point_value(self, y):
        return float(np.asarray(y) @ (self.p1 + self.ship_cost.min(axis=0)))

    def to_dict(self):
        return {"name": self.name, "p1": self.p1, "p2": self.p2,
                "ship_cost": self.ship_cost.tolist()}


def shipment_cost(problem, z, y, method="auto"):
    """First-stage cost plus the second-stage LP value."""
    z = np.asarray(z, dtype=float)
    lb = LpBuilder()
    zvar = lb.add_vars(problem.d_z, 0.0, z, z)
    problem._recourse_block(lb, zvar, 1.0, np.asarray(y, dtype=float))
    sol = solve_lp(lb.build(), method)
    if not sol.optimal:
        raise LpError(f"second-stage LP {sol.status}")
    return problem.p1 * float(z.sum()) + sol.objective


@dataclass(frozen=True)
class CapacitatedNewsvendorProblem:
    """Multi-item newsvendor with a shared capacity; cost is minus sales."""

    d: int = 2
    capacity: float = 1.0
    name: str = field(default="cap-newsvendor", init=False)

    def __post_init__(self):
        if not self.capacity > 0:
            raise ProblemError("capacity must be positive")

    @property
    def decision_dim(self):
        return self.d

    @property
    def supports_negative_weights(self):
        return False

    def cost(self, decision, Y):
        return -np.minimum(np.atleast_2d(Y), np.asarray(decision)).sum(axis=1)

    def feasible(self, decision, tol=1e-7):
        z = np.asarray(decision)
        return bool(np.all(z >= -tol) and z.sum() <= self.capacity + tol)

    def epigraph(self, weights, Y):
        w, Y = _scenarios(weights, Y)
        n, d = Y.shape
        lb = LpBuilder()
        z = lb.add_vars(d, 0.0, 0.0)
        m = lb.add_vars(n * d, -np.repeat(w, d), 0.0, np.maximum(Y, 0.0).ravel())
        # m_ij - z_j <= 0
        rows = np.repeat(np.arange(n * d), 2)
        cols = np.column_stack([m, np.tile(z, n)]).ravel()
        vals = np.tile([1.0, -1.0], n * d)
        lb.add_rows(rows, cols, vals, "L", np.zeros(n * d))
        lb.add_rows(np.zeros(d), z, np.ones(d), "L", [self.capacity])
        return lb.build(), lambda x: x[:d].copy()

    def point_value(self, y):
        return -min(float(np.sum(np.maximum(y, 0))), self.capacity) if len(y) else 0.0

    def to_dict(self):
        return {"name": self.name, "d": self.d, "capacity": self.capacity}


@dataclass(frozen=True)
class NewsvendorProblem:
    """Scalar newsvendor / pinball loss with service level tau."""

    tau: float = 0.5
    name: str = field(default="newsvendor", init=False)

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ProblemError("tau must lie in (0, 1)")

    @property
    def decision_dim(self):
        return 1

    @property
    def d_y(self):
        return 1

    @property
    def supports_negative_weights(self):
        return False

    def cost(self, decision, Y):
        z = float(np.asarray(decision).ravel()[0])
        y = np.asarray(Y, dtype=float).ravel()
        return np.maximum((1 - self.tau) * (z - y), self.tau * (y - z))

    def cost_and_subgradient(self, z, y):
        """Elementwise pinball loss and a subgradient in z."""
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        over = z >= y
        val = np.where(over, (1 - self.tau) * (z - y), self.tau * (y - z))
        return val, np.where(over, 1 - self.tau, -self.tau)

    def feasible(self, decision, tol=1e-7):
        return True

    def epigraph(self, weights, Y):
        w, Y = _scenarios(weights, Y)
        y = Y[:, 0]
        n = len(y)
        lb = LpBuilder()
        z = lb.add_vars(1, 0.0, -np.inf, np.inf)
        th = lb.add_vars(n, w, -np.inf, np.inf)
        # theta_i - (1-tau) z >= -(1-tau) y_i ; theta_i + tau z >= tau y_i
        rows = np.repeat(np.arange(n), 2)
        lb.add_rows(rows, np.column_stack([th, np.full(n, z[0])]).ravel(),
                    np.tile([1.0, -(1 - self.tau)], n), "G", -(1 - self.tau) * y)
        lb.add_rows(rows, np.column_stack([th, np.full(n, z[0])]).ravel(),
                    np.tile([1.0, self.tau], n), "G", self.tau * y)
        return lb.build(), lambda x: x[:1].copy()

    def point_value(self, y):
        return 0.0

    def to_dict(self):
        return {"name": self.name, "tau": self.tau}


def portfolio_cost(problem, z_beta, y):
    return float(problem.cost(z_beta, np.asarray(y, dtype=float).reshape(1, -1))[0])


def capacitated_newsvendor_cost(problem, z, y):
    return float(problem.cost(z, np.asarray(y, dtype=float).reshape(1, -1))[0])


def newsvendor_cost(spec, z, y):
    return float(spec.cost(np.atleast_1d(z), np.atleast_1d(y))[0])


def lp_epigraph(problem, scenarios):
    """LP for min_z sum_i w_i c(z; y_i) over (weight, y) pairs."""
    if not scenarios:
        raise ProblemError("no scenarios")
    w = np.array([s[0] for s in scenarios], dtype=float)
    Y = np.array([np.atleast_1d(s[1]) for s in scenarios], dtype=float)
    return problem.epigraph(w, Y)[0]


def default_capacity(Y_pilot, quantile=0.6):
    """60th percentile of total demand on a pilot sample."""
    totals = np.asarray(Y_pilot, dtype=float).sum(axis=1)
    return float(np.quantile(totals, quantile))


def problem_from_dict(d):
    name = d["name"]
    if name == "portfolio":
        return PortfolioProblem(d.get("lam", 0.0), d.get("epsilon", 0.15), d.get("d_y", 12))
    if name == "shipment":
        sc = d.get("ship_cost")
        return ShipmentProblem(None if sc is None else np.asarray(sc),
                               d.get("p1", 5.0), d.get("p2", 100.0))
    if name == "cap-newsvendor":
        return CapacitatedNewsvendorProblem(d.get("d", 2), d.get("capacity", 1.0))
    if name == "newsvendor":
        return NewsvendorProblem(d.get("tau", 0.5))
    raise ProblemError(f"unknown problem {name!r}")


def is_close(a, b, tol=1e-7):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
