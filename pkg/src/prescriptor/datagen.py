"""Synthetic instances: ARMA(2,2) covariates, factor-model outcomes,
conditional samplers, feature pollution and synthetic censoring."""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import stream

D_X = 3
D_Y = 12

_PHI1 = [[0.5, -0.9, 0.0], [1.1, -0.7, 0.0], [0.0, 0.0, 0.5]]
_PHI2 = [[0.0, -0.5, 0.0], [-0.5, 0.0, 0.0], [0.0, 0.0, 0.0]]
_THETA1 = [[0.4, 0.8, 0.0], [-1.1, -0.3, 0.0], [0.0, 0.0, 0.0]]
_THETA2 = [[0.0, -0.8, 0.0], [-1.1, 0.0, 0.0], [0.0, 0.0, 0.0]]

_A_PATTERN = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]] * 4
_B_PATTERN = [
    [0, -1, -1], [-1, 0, -1], [-1, -1, 0],
    [0, -1, 1], [-1, 0, 1], [-1, 1, 0],
    [0, 1, -1], [1, 0, -1], [1, -1, 0],
    [0, 1, 1], [1, 0, 1], [1, 1, 0],
]

PORTFOLIO = "portfolio-returns"
SHIPMENT = "shipment-demand"


class DataError(ValueError):
    pass


def innovation_covariance(scale=0.05):
    """(I[i=j] 8/7 - (-1)^(i+j)/7) * scale, 3x3."""
    i, j = np.indices((3, 3))
    return ((i == j) * 8.0 / 7.0 - (-1.0) ** (i + j) / 7.0) * scale


@dataclass(frozen=True)
class ArmaSpec:
    phi1: np.ndarray
    phi2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    sigma_u: np.ndarray
    burn_in: int = 500

    def __post_init__(self):
        for name in ("phi1", "phi2", "theta1", "theta2", "sigma_u"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (3, 3):
                raise DataError(f"{name} must be 3x3, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.burn_in < 0:
            raise DataError("burn_in must be non-negative")

    @classmethod
    def default(cls, innovation_scale=0.05, burn_in=500):
        return cls(_PHI1, _PHI2, _THETA1, _THETA2,
                   innovation_covariance(innovation_scale), burn_in)

    def cholesky(self):
        s = self.sigma_u
        if not np.allclose(s, s.T, rtol=0, atol=1e-12):
            raise DataError("invalid innovation covariance")
        try:
            return np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise DataError("invalid innovation covariance") from None

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist()
                for k in ("phi1", "phi2", "theta1", "theta2", "sigma_u")} | {
                    "burn_in": self.burn_in}

    @classmethod
    def from_dict(cls, d):
        return cls(d["phi1"], d["phi2"], d["theta1"], d["theta2"],
                   d["sigma_u"], int(d.get("burn_in", 500)))


@njit(cache=True)
def _arma_recursion(phi1, phi2, theta1, theta2, u):
    n = u.shape[0]
    x = np.zeros_like(u)
    for t in range(n):
        for a in range(3):
            acc = u[t, a]
            for b in range(3):
                if t >= 1:
                    acc += phi1[a, b] * x[t - 1, b] + theta1[a, b] * u[t - 1, b]
                if t >= 2:
                    acc += phi2[a, b] * x[t - 2, b] + theta2[a, b] * u[t - 2, b]
            x[t, a] = acc
    return x


def simulate_arma(spec, n, seed):
    """n consecutive X(t) after ``spec.burn_in`` steps from a zero state.

    X(t) - phi1 X(t-1) - phi2 X(t-2) = U(t) + theta1 U(t-1) + theta2 U(t-2),
    U ~ N(0, sigma_u).
    """
    if n < 1:
        raise DataError("n must be >= 1")
    chol = spec.cholesky()
    rng = stream(seed, "arma")
    u = rng.standard_normal((spec.burn_in + n, 3)) @ chol.T
    x = _arma_recursion(spec.phi1, spec.phi2, spec.theta1, spec.theta2, u)
    return x[spec.burn_in:]


@dataclass(frozen=True)
class FactorModelSpec:
    A: np.ndarray
    B: np.ndarray
    kind: str = PORTFOLIO

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.shape != B.shape or A.ndim != 2:
            raise DataError("A and B must be matrices of equal shape")
        if self.kind not in (PORTFOLIO, SHIPMENT):
            raise DataError(f"unknown factor model kind {self.kind!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def d_x(self):
        return self.A.shape[1]

    @property
    def d_y(self):
        return self.A.shape[0]

    @classmethod
    def portfolio(cls):
        return cls(0.025 * np.array(_A_PATTERN), 0.075 * np.array(_B_PATTERN), PORTFOLIO)

    @classmethod
    def shipment(cls):
        return cls(0.025 * np.array(_A_PATTERN), 0.075 * np.array(_B_PATTERN), SHIPMENT)

    def to_dict(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        return cls(d["A"], d["B"], d["kind"])

    def _outcomes(self, X, rng):
        n = X.shape[0]
        delta = rng.standard_normal((n, self.d_y, self.d_x))
        eps = rng.standard_normal((n, self.d_y))
        mean_part = X @ self.A.T + np.einsum("jk,njk->nj", self.A, delta) / 4.0
        Y = mean_part + (X @ self.B.T) * eps
        if self.kind == SHIPMENT:
            Y = 100.0 * np.maximum(Y, 0.0)
        return Y


def _check_x(spec, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.d_x:
        raise DataError(f"X must have {spec.d_x} columns, got shape {X.shape}")
    return X


def generate_outcomes(spec, X, seed):
    """Y_i = A_i'(X + delta_i/4) + (B_i'X) eps_i (times 100 and clamped at 0
    for shipment demand), one row per row of X."""
    X = _check_x(spec, X)
    return spec._outcomes(X, stream(seed, "outcomes"))


def conditional_sample(spec, x, m, seed):
    """m iid draws of Y given X = x."""
    if m < 1:
        raise DataError("m must be >= 1")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    x = _check_x(spec, x)
    return spec._outcomes(np.repeat(x, m, axis=0), stream(seed, "conditional"))


def pollute_features(X, extra, seed):
    """Append ``extra`` iid standard-normal columns."""
    X = np.asarray(X, dtype=float)
    if extra < 0:
        raise DataError("extra must be >= 0")
    if extra == 0:
        return X.copy()
    noise = stream(seed, "pollution").standard_normal((X.shape[0], extra))
    return np.hstack([X, noise])


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        self.Y = Y.reshape(-1, 1) if Y.ndim == 1 else Y
        if self.X.shape[0] != self.Y.shape[0]:
            raise DataError("X and Y row counts differ")
        if not (np.isfinite(self.X).all() and np.isfinite(self.Y).all()):
            raise DataError("dataset contains non-finite entries")

    def __len__(self):
        return self.X.shape[0]


@dataclass
class CensoredDataset:
    X: np.ndarray
    U: np.ndarray
    delta: np.ndarray
    true_Y: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.U = np.asarray(self.U, dtype=float).ravel()
        self.delta = np.asarray(self.delta, dtype=bool).ravel()
        if not (len(self.U) == len(self.delta) == self.X.shape[0]):
            raise DataError("X, U and delta lengths differ")

    def __len__(self):
        return self.X.shape[0]

    @property
    def censoring_rate(self):
        return float(1.0 - self.delta.mean())


def censor_dataset(dataset, threshold_mean, threshold_spread, seed):
    """Right-censor a univariate outcome by V ~ N(threshold_mean, threshold_spread^2)
    drawn independently of everything else; U = min(Y, V), delta = I[Y <= V]."""
    if dataset.Y.shape[1] != 1:
        raise DataError("censoring supports univariate outcomes only")
    if threshold_spread <= 0:
        raise DataError("threshold_spread must be positive")
    y = dataset.Y[:, 0]
    v = threshold_mean + threshold_spread * stream(seed, "censoring").standard_normal(len(y))
    delta = y <= v
    u = np.where(delta, y, v)
    return CensoredDataset(dataset.X.copy(), u, delta, y.copy(),
                           dict(dataset.meta, threshold_mean=threshold_mean,
                                threshold_spread=threshold_spread))


def calibrate_threshold_mean(y, rate, spread, seed, n_sim=200_000):
    """Threshold mean giving P(Y > V) ~= rate for outcomes resampled from ``y``."""
    if not 0.0 < rate < 1.0:
        raise DataError("censoring rate must lie in (0, 1)")
    rng = stream(seed, "calibrate")
    ys = rng.choice(np.asarray(y, dtype=float), size=n_sim)
    noise = spread * rng.standard_normal(n_sim)
    # P(Y > V) = P(Y - spread*noise > mean): the (1-rate) quantile of Y - spread*noise
    return float(np.quantile(ys - noise, 1.0 - rate))
