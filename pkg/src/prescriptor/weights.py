"""Local-learning weight functions w_i(x) over a training sample.

Every constructor returns a :class:`WeightVector`: a sparse map from training
row to weight.  Distances are Euclidean on the raw features; neighbour search
is an exact linear scan.
"""

import math
from dataclasses import dataclass

import numpy as np

NAIVE = "naive"
EPANECHNIKOV = "epanechnikov"
TRICUBIC = "tricubic"
GAUSSIAN = "gaussian"
KERNELS = (NAIVE, EPANECHNIKOV, TRICUBIC, GAUSSIAN)


class WeightError(ValueError):
    pass


class EmptyNeighborhood(WeightError):
    pass


class WeightVector:
    """Sparse training-index -> weight map.

    Indices are kept sorted; duplicate indices are not allowed.
    """

    __slots__ = ("indices", "weights", "n_train")

    def __init__(self, indices, weights, n_train):
        indices = np.asarray(indices, dtype=np.int64).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if indices.shape != weights.shape:
            raise WeightError("indices and weights differ in length")
        order = np.argsort(indices, kind="stable")
        indices, weights = indices[order], weights[order]
        if len(indices) and (indices[0] < 0 or indices[-1] >= n_train):
            raise WeightError("index out of range")
        if len(indices) > 1 and np.any(np.diff(indices) == 0):
            raise WeightError("duplicate indices")
        if not np.isfinite(weights).all():
            raise WeightError("non-finite weight")
        self.indices = indices
        self.weights = weights
        self.n_train = int(n_train)

    @classmethod
    def from_dense(cls, dense, tol=0.0):
        dense = np.asarray(dense, dtype=float)
        idx = np.flatnonzero(np.abs(dense) > tol)
        return cls(idx, dense[idx], len(dense))

    @classmethod
    def uniform(cls, n_train):
        return cls(np.arange(n_train), np.full(n_train, 1.0 / n_train), n_train)

    def dense(self):
        out = np.zeros(self.n_train)
        out[self.indices] = self.weights
        return out

    def total(self):
        return math.fsum(self.weights)

    def normalized(self):
        return WeightVector(self.indices, self.weights / self.total(), self.n_train)

    def as_dict(self):
        return dict(zip(self.indices.tolist(), self.weights.tolist()))

    def __len__(self):
        return len(self.indices)

    def __repr__(self):
        return f"WeightVector({self.as_dict()!r}, n_train={self.n_train})"


def _prepare(train_X, x):
    train_X = np.asarray(train_X, dtype=float)
    if train_X.ndim == 1:
        train_X = train_X.reshape(-1, 1)
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != train_X.shape[1]:
        raise WeightError(f"query has dimension {x.shape[0]}, training data {train_X.shape[1]}")
    return train_X, x


def distances(train_X, x):
    train_X, x = _prepare(train_X, x)
    diff = train_X - x
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def standardizer(train_X):
    """Column means/scales for the optional per-column standardization."""
    train_X = np.asarray(train_X, dtype=float)
    scale = train_X.std(axis=0)
    scale[scale == 0] = 1.0
    return train_X.mean(axis=0), scale


def nearest(dist, k):
    """Indices of the k smallest distances, ties to the lower index."""
    n = len(dist)
    if k < 1:
        raise WeightError("k must be >= 1")
    if k > n:
        raise WeightError("k exceeds sample size")
    return np.argsort(dist, kind="stable")[:k]


def knn_weights(train_X, x, k):
    dist = distances(train_X, x)
    idx = nearest(dist, k)
    return WeightVector(idx, np.full(k, 1.0 / k), len(dist))


def radius_knn_weights(train_X, x, k, decay):
    """kNN support, weights proportional to ``decay(distance)``."""
    dist = distances(train_X, x)
    idx = nearest(dist, k)
    raw = np.array([float(decay(d)) for d in dist[idx]])
    if np.any(raw <= 0) or not np.isfinite(raw).all():
        raise WeightError("decay must be positive and finite")
    return WeightVector(idx, raw / raw.sum(), len(dist))


def kernel_profile(kind, r):
    """Kernel value as a function of the norm r = ||u||."""
    r = np.asarray(r, dtype=float)
    inside = r <= 1.0
    if kind == NAIVE:
        return inside.astype(float)
    if kind == EPANECHNIKOV:
        return np.where(inside, 1.0 - r**2, 0.0)
    if kind == TRICUBIC:
        return np.where(inside, (1.0 - r**3) ** 3, 0.0)
    if kind == GAUSSIAN:
        return np.exp(-(r**2) / 2.0)
    raise WeightError(f"unknown kernel {kind!r}")


def kernel_eval(kind, u):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(kernel_profile(kind, np.linalg.norm(u)))


def _normalize_kernel(raw, n):
    idx = np.flatnonzero(raw > 0)
    if len(idx) == 0:
        raise EmptyNeighborhood("empty neighborhood at query point")
    w = raw[idx]
    return WeightVector(idx, w / w.sum(), n)


def kr_weights(train_X, x, kind, h):
    """Nadaraya-Watson weights K((x_i - x)/h) / sum_j K((x_j - x)/h)."""
    if not h > 0:
        raise WeightError("bandwidth must be positive")
    dist = distances(train_X, x)
    return _normalize_kernel(kernel_profile(kind, dist / h), len(dist))


@dataclass(frozen=True)
class BandwidthSchedule:
    """h_N = c N^-delta_exp (fixed-per-N), h_i = c i^-delta_exp (per-point),
    or the distance to the k-th neighbour (knn-adaptive, uses ``k``)."""

    c: float = 1.0
    delta_exp: float = 0.2
    mode: str = "fixed-per-N"
    k: int = None

    def __post_init__(self):
        if not self.c > 0:
            raise WeightError("bandwidth constant must be positive")
        if self.mode != "knn-adaptive" and not 0 < self.delta_exp < 1:
            raise WeightError("delta_exp must lie in (0, 1)")
        if self.mode not in ("fixed-per-N", "per-point", "knn-adaptive"):
            raise WeightError(f"unknown bandwidth mode {self.mode!r}")

    def fixed(self, n):
        return self.c * n ** (-self.delta_exp)

    def per_point(self, n):
        return self.c * np.arange(1, n + 1, dtype=float) ** (-self.delta_exp)

    @classmethod
    def default_fixed(cls, d_x, c=1.0):
        return cls(c, 1.0 / (d_x + 2), "fixed-per-N")

    @classmethod
    def default_recursive(cls, d_x, c=1.0):
        return cls(c, 1.0 / (2 * d_x) - 0.01, "per-point")


def recursive_kr_weights(train_X, x, schedule, kind=NAIVE):
    """Per-point bandwidths h_i: weight_i proportional to K((x_i - x)/h_i)."""
    if schedule.mode != "per-point":
        raise WeightError("recursive kernel weights need a per-point schedule")
    dist = distances(train_X, x)
    h = schedule.per_point(len(dist))
    return _normalize_kernel(kernel_profile(kind, dist / h), len(dist))


def loess_ridge(xi):
    return 1e-8 * (1.0 + np.trace(xi))


def loess_weights(train_X, x, k, kind=TRICUBIC):
    """Local-linear (LOESS) equivalent-kernel weights; may be negative.

    k_i = K(||x_i - x|| / h(x)) with h(x) the distance to the k-th neighbour,
    w_i proportional to k_i (1 - s' Xi^-1 (x_i - x)) where
    s = sum_j k_j (x_j - x) and Xi = sum_j k_j (x_j - x)(x_j - x)'.
    """
    train_X, x = _prepare(train_X, x)
    n = train_X.shape[0]
    dist = distances(train_X, x)
    idx = nearest(dist, k)
    h = dist[idx[-1]]
    if h > 0:
        kv = kernel_profile(kind, dist[idx] / h)
    else:
        kv = (dist[idx] == 0).astype(float)
    keep = kv > 0
    idx, kv = idx[keep], kv[keep]
    if len(idx) == 0:
        raise EmptyNeighborhood("empty neighborhood at query point")
    diff = train_X[idx] - x
    s = kv @ diff
    xi = (diff * kv[:, None]).T @ diff
    try:
        if np.linalg.matrix_rank(xi) < xi.shape[0]:
            raise np.linalg.LinAlgError
        sol = np.linalg.solve(xi, s)
    except np.linalg.LinAlgError:
        sol = np.linalg.solve(xi + loess_ridge(xi) * np.eye(len(s)), s)
    raw = kv * (1.0 - diff @ sol)
    total = raw.sum()
    if abs(total) < 1e-300:
        raise WeightError("degenerate local-linear fit")
    w = raw / total
    nz = w != 0
    return WeightVector(idx[nz], w[nz], n)


def default_k(n):
    return max(1, min(math.ceil(n ** 0.5), n - 1))


def default_loess_k(n, d_x):
    return min(n, max(2 * (d_x + 1), math.ceil(n ** 0.7)))
