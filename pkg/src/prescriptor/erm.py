"""Empirical risk minimization over linear decision rules z(x) = W [x; 1].

Only problems with an unconstrained decision space are supported: the scalar
newsvendor and the shipment problem with its cost extended to negative stock
(first stage charged on the positive part, second stage unchanged).  Fitted
shipment policies are clamped to the positive part at prediction time.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cutplane import minimize_pwl
from .problems import NewsvendorProblem, ShipmentProblem

NONE = "none"
ROWWISE = "rowwise"
SCHATTEN = "schatten"
FROBENIUS_PENALTY = "frobenius-penalty"


class ErmError(ValueError):
    pass


@dataclass(frozen=True)
class NormSpec:
    """Norm restriction or penalty on the non-intercept columns of W.

    ``rowwise``: ||(gamma_k ||W_k||_p)_k||_p_dual <= radius.
    ``schatten``: ||singular values||_p <= radius.
    ``frobenius-penalty``: adds lam_reg ||W||_F^2 to the objective.
    """

    kind: str = NONE
    p: float = 2.0
    p_dual: float = 2.0
    gamma: tuple = None
    radius: float = np.inf
    lam_reg: float = 0.0

    def __post_init__(self):
        if self.kind not in (NONE, ROWWISE, SCHATTEN, FROBENIUS_PENALTY):
            raise ErmError(f"unknown norm kind {self.kind!r}")
        if not 1 <= self.p <= np.inf or not 1 <= self.p_dual <= np.inf:
            raise ErmError("norm exponents must lie in [1, inf]")
        if self.gamma is not None and np.any(np.asarray(self.gamma) <= 0):
            raise ErmError("gamma must be positive")
        if self.lam_reg < 0:
            raise ErmError("lam_reg must be >= 0")
        if not self.radius > 0:
            raise ErmError("radius must be positive")

    def norm(self, W):
        if self.kind == ROWWISE:
            gamma = np.ones(W.shape[0]) if self.gamma is None else np.asarray(self.gamma)
            rows = gamma * np.linalg.norm(W, ord=self.p, axis=1)
            return float(np.linalg.norm(rows, ord=self.p_dual))
        if self.kind == SCHATTEN:
            sv = np.linalg.svd(W, compute_uv=False)
            return float(np.linalg.norm(sv, ord=self.p))
        return float(np.linalg.norm(W))

    def project(self, W):
        """Radial rescaling onto the norm ball (no-op for penalties)."""
        if self.kind not in (ROWWISE, SCHATTEN) or not np.isfinite(self.radius):
            return W
        n = self.norm(W)
        return W * (self.radius / n) if n > self.radius else W

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "p_dual": self.p_dual,
                "gamma": None if self.gamma is None else list(self.gamma),
                "radius": self.radius, "lam_reg": self.lam_reg}


@dataclass(frozen=True)
class LinearPolicy:
    """z(x) = W [x; 1] (or W x without intercept), optionally clamped at 0."""

    W: np.ndarray
    post_transform: str = NONE
    intercept: bool = True
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not np.isfinite(self.W).all():
            raise ErmError("policy has non-finite coefficients")
        if self.post_transform not in (NONE, "positive-part"):
            raise ErmError(f"unknown post transform {self.post_transform!r}")

    def raw(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.intercept:
            X = np.column_stack([X, np.ones(len(X))])
        return X @ self.W.T

    def to_dict(self):
        return {"W": self.W.tolist(), "post_transform": self.post_transform,
                "intercept": self.intercept}


def erm_predict(policy, x):
    """Decision(s) of the policy; a single x gives a vector."""
    single = np.asarray(x).ndim <= 1
    z = policy.raw(np.asarray(x, dtype=float).reshape(1, -1) if single else x)
    if policy.post_transform == "positive-part":
        z = np.maximum(z, 0.0)
    return z[0] if single else z


@dataclass(frozen=True)
class ErmConfig:
    """Optimizer settings.

    ``optimizer`` is ``"subgradient"`` (projected subgradient with steps
    a / sqrt(t) along the normalized subgradient, a picked from a 10-point
    grid by pilot runs, best iterate kept) or ``"cutting-plane"`` (exact for
    piecewise-linear objectives without norm terms).
    """

    optimizer: str = "subgradient"
    iterations: int = 5000
    pilot_iterations: int = 200
    grid: tuple = tuple(np.logspace(-3, 1, 10))
    intercept: bool = True
    tol: float = 1e-7


def _check_problem(problem):
    if not isinstance(problem, (NewsvendorProblem, ShipmentProblem)):
        raise ErmError("ERM supports unconstrained decision spaces only")


def _loss_and_grad(problem, Z, Y):
    """Per-sample extended costs and subgradients w.r.t. the decision."""
    if isinstance(problem, NewsvendorProblem):
        val, g = problem.cost_and_subgradient(Z[:, 0], Y[:, 0])
        return val, g.reshape(-1, 1)
    return problem.extended_cost(Z, Y, subgradient=True)


class _Objective:
    def __init__(self, problem, Xt, Y, norm, n_free):
        self.problem, self.Xt, self.Y, self.norm = problem, Xt, Y, norm
        self.n = len(Y)
        self.n_free = n_free  # columns subject to norms (intercept excluded)
        self.lam = norm.lam_reg if norm.kind == FROBENIUS_PENALTY else 0.0

    def __call__(self, W):
        Z = self.Xt @ W.T
        val, g = _loss_and_grad(self.problem, Z, self.Y)
        f = math.fsum(val) / self.n
        G = g.T @ self.Xt / self.n
        if self.lam:
            Wf = W[:, : self.n_free]
            f += self.lam * float(np.sum(Wf * Wf))
            G[:, : self.n_free] += 2.0 * self.lam * Wf
        return f, G


def _constrain(norm, W, n_free):
    if norm.kind in (ROWWISE, SCHATTEN):
        W = W.copy()
        W[:, :n_free] = norm.project(W[:, :n_free])
    return W


def _subgradient(obj, W0, a, iterations, norm, n_free):
    W = W0.copy()
    best_W, best_f = W0.copy(), np.inf
    history = []
    for t in range(1, iterations + 1):
        f, G = obj(W)
        if f < best_f:
            best_W, best_f = W.copy(), f
        history.append(best_f)
        gn = np.linalg.norm(G)
        if gn == 0:
            break
        W = _constrain(norm, W - (a / math.sqrt(t)) * G / gn, n_free)
    return best_W, best_f, history


def _cutting_plane_fit(obj, shape, scale, tol):
    dim = shape[0] * shape[1]

    def oracle(w):
        f, G = obj(w.reshape(shape))
        return f, G.ravel()

    bound = scale
    for _ in range(8):
        w = minimize_pwl(oracle, np.zeros(dim), [(-bound, bound)] * dim, tol=tol)
        if np.max(np.abs(w)) < 0.99 * bound:
            W = w.reshape(shape)
            return W, obj(W)[0]
        bound *= 10.0
    raise ErmError("ERM solution keeps hitting the coefficient box")


def erm_fit(problem, X, Y, norm=NormSpec(), config=ErmConfig()):
    """Fit W by minimizing the average (extended) training cost.

    Returns
    -------
    LinearPolicy
        ``history`` holds the best objective value after each iteration
        (subgradient optimizer).
    """
    _check_problem(problem)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if len(X) != len(Y) or len(X) == 0:
        raise ErmError("X and Y must be nonempty with equal row counts")
    n, d_x = X.shape
    Xt = np.column_stack([X, np.ones(n)]) if config.intercept else X
    d_z = problem.decision_dim
    shape = (d_z, Xt.shape[1])
    obj = _Objective(problem, Xt, Y, norm, d_x)
    W0 = np.zeros(shape)
    post = "positive-part" if isinstance(problem, ShipmentProblem) else NONE
    # coefficient scale mapping typical covariates to typical outcomes
    x_scale = math.sqrt(float(np.mean(np.sum(Xt * Xt, axis=1)))) or 1.0
    y_scale = float(np.mean(np.abs(Y))) * max(1.0, Y.shape[1] / d_z) or 1.0
    scale = y_scale / x_scale

    if config.optimizer == "cutting-plane":
        if norm.kind != NONE:
            raise ErmError("cutting-plane optimizer supports unrestricted fits only")
        W, f = _cutting_plane_fit(obj, shape, 100.0 * scale * math.sqrt(shape[1]), config.tol)
        f0 = obj(W0)[0]
        if f0 < f:
            W, f = W0, f0
        return LinearPolicy(W, post, config.intercept, (f,))
    if config.optimizer != "subgradient":
        raise ErmError(f"unknown optimizer {config.optimizer!r}")
    best_a, best_pilot = None, np.inf
    for a in config.grid:
        _, f, _ = _subgradient(obj, W0, a * scale, config.pilot_iterations, norm, d_x)
        if f < best_pilot:
            best_a, best_pilot = a, f
    W, f, history = _subgradient(obj, W0, best_a * scale, config.iterations, norm, d_x)
    return LinearPolicy(W, post, config.intercept, tuple(history))


def training_objective(problem, policy, X, Y, norm=NormSpec()):
    """Average extended training cost (plus penalty) of a policy's raw rule."""
    _check_problem(problem)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    Xt = np.column_stack([X, np.ones(len(X))]) if policy.intercept else X
    return _Objective(problem, Xt, Y, norm, X.shape[1])(policy.W)[0]


# ---------------------------------------------------------------------------
# complexity and generalization bounds


def rademacher_bound_rowwise(M, R, p, gamma, N):
    """2 M R sqrt((p - 1) / N) sum_k 1 / gamma_k for the row-wise norm ball
    (covariates bounded by M in the conjugate norm)."""
    if not 2 <= p < np.inf:
        raise ErmError("row-wise bound requires p in [2, inf)")
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(gamma <= 0):
        raise ErmError("gamma must be positive")
    if N < 1:
        raise ErmError("N must be >= 1")
    return 2.0 * M * R * math.sqrt((p - 1.0) / N) * math.fsum(1.0 / gamma)


def rademacher_bound_schatten(R, p, d_z, N, second_moment):
    """2 R d_z^r sqrt(second_moment / N) with r = max(1 - 1/p, 1/2)."""
    if second_moment < 0:
        raise ErmError("second moment must be >= 0")
    if N < 1:
        raise ErmError("N must be >= 1")
    r = max(1.0 - 1.0 / p, 0.5)
    return 2.0 * R * d_z ** r * math.sqrt(1.0 / N) * math.sqrt(second_moment)


def generalization_bound(empirical_risk, c_bar, L, N, delta, complexity, empirical=False):
    """High-probability upper bound on the true risk of any rule in the class.

    With ``empirical=True`` ``complexity`` is the sample (empirical)
    Rademacher complexity and the confidence term is 3 c_bar sqrt(log(2/delta)/2N).
    """
    if not 0 < delta <= 1:
        raise ErmError("delta must lie in (0, 1]")
    if c_bar < 0 or L < 0:
        raise ErmError("c_bar and L must be >= 0")
    if empirical:
        conf = 3.0 * c_bar * math.sqrt(math.log(2.0 / delta) / (2.0 * N))
    else:
        conf = c_bar * math.sqrt(math.log(1.0 / delta) / (2.0 * N))
    return empirical_risk + conf + L * complexity
