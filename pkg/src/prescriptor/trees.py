"""CART regression trees and random forests with multivariate responses.

Splits are axis-aligned at midpoints between consecutive distinct feature
values and maximize the decrease of the summed per-component within-node
sum of squares.  Training rows carry integer multiplicities so that a
bootstrap sample is represented without copying data.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ._rng import derive_seed, stream
from .weights import WeightVector


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = None
    min_leaf: int = 5
    mtry: int = None  # None: all features
    subsample: object = None  # None, "bootstrap", or a fraction in (0, 1]
    n_trees: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise TreeError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise TreeError("max_depth must be >= 0")
        if self.n_trees < 1:
            raise TreeError("n_trees must be >= 1")
        sub = self.subsample
        if not (sub is None or sub == "bootstrap"
                or (isinstance(sub, (int, float)) and 0 < sub <= 1)):
            raise TreeError(f"invalid subsample {sub!r}")

    def resolve_mtry(self, d_x):
        mtry = d_x if self.mtry is None else self.mtry
        if not 1 <= mtry <= d_x:
            raise TreeError(f"mtry must lie in [1, {d_x}]")
        return mtry

    @classmethod
    def forest_defaults(cls, d_x, **overrides):
        base = dict(mtry=math.ceil(d_x / 3), subsample="bootstrap", min_leaf=5, n_trees=100)
        base.update(overrides)
        return cls(**base)


@njit(cache=True, nogil=True)
def _best_split(X, Y, counts, order, s, e, feats, min_leaf, scratch_idx):
    dy = Y.shape[1]
    tot_w = 0.0
    tot = np.zeros(dy)
    for p in range(s, e):
        i = order[p]
        c = counts[i]
        tot_w += c
        for k in range(dy):
            tot[k] += c * Y[i, k]
    base = 0.0
    for k in range(dy):
        base += tot[k] * tot[k] / tot_w
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    left = np.zeros(dy)
    m = e - s
    vals = np.empty(m)
    for f in feats:
        for p in range(m):
            vals[p] = X[order[s + p], f]
        local = np.argsort(vals, kind="mergesort")
        for p in range(m):
            scratch_idx[p] = order[s + local[p]]
        lw = 0.0
        for k in range(dy):
            left[k] = 0.0
        for p in range(m - 1):
            i = scratch_idx[p]
            c = counts[i]
            lw += c
            for k in range(dy):
                left[k] += c * Y[i, k]
            v0 = X[i, f]
            v1 = X[scratch_idx[p + 1], f]
            if v1 <= v0:
                continue
            rw = tot_w - lw
            if lw < min_leaf or rw < min_leaf:
                continue
            score = 0.0
            for k in range(dy):
                r = tot[k] - left[k]
                score += left[k] * left[k] / lw + r * r / rw
            gain = score - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (v0 + v1)
                if thr >= v1:
                    thr = v0
                best_thr = thr
    return best_f, best_thr, best_gain


@njit(cache=True, nogil=True)
def _grow(X, Y, counts, mtry, min_leaf, max_depth, seed):
    np.random.seed(seed)
    n, d = X.shape
    dy = Y.shape[1]
    members = np.flatnonzero(counts > 0)
    m0 = members.shape[0]
    cap = 2 * m0 + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    leaf = np.full(cap, -1, dtype=np.int64)
    nstart = np.zeros(cap, dtype=np.int64)
    nend = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    order = members.copy()
    scratch = np.empty(m0, dtype=np.int64)
    nstart[0] = 0
    nend[0] = m0
    n_nodes = 1
    n_leaves = 0
    stack = [0]
    all_feats = np.arange(d)
    while len(stack) > 0:
        node = stack.pop()
        s = nstart[node]
        e = nend[node]
        w = 0.0
        for p in range(s, e):
            w += counts[order[p]]
        can_split = w >= 2 * min_leaf and (max_depth < 0 or depth[node] < max_depth)
        f = -1
        thr = 0.0
        if can_split:
            if mtry < d:
                perm = np.random.permutation(d)
                feats = np.sort(perm[:mtry])
            else:
                feats = all_feats
            f, thr, gain = _best_split(X, Y, counts, order, s, e, feats, min_leaf, scratch)
            if f >= 0:
                # zero-improvement guard relative to the node's sum of squares
                sse = 0.0
                for k in range(dy):
                    mu = 0.0
                    for p in range(s, e):
                        mu += counts[order[p]] * Y[order[p], k]
                    mu /= w
                    for p in range(s, e):
                        diff = Y[order[p], k] - mu
                        sse += counts[order[p]] * diff * diff
                if not gain > 1e-12 * (1.0 + sse):
                    f = -1
        if f < 0:
            leaf[node] = n_leaves
            n_leaves += 1
            continue
        # stable partition of order[s:e] by X[:, f] <= thr
        q = 0
        for p in range(s, e):
            i = order[p]
            if X[i, f] <= thr:
                scratch[q] = i
                q += 1
        mid = q
        for p in range(s, e):
            i = order[p]
            if X[i, f] > thr:
                scratch[q] = i
                q += 1
        for p in range(e - s):
            order[s + p] = scratch[p]
        feature[node] = f
        threshold[node] = thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        nstart[lc] = s
        nend[lc] = s + mid
        nstart[rc] = s + mid
        nend[rc] = e
        depth[lc] = depth[node] + 1
        depth[rc] = depth[node] + 1
        stack.append(rc)
        stack.append(lc)
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            leaf[:n_nodes], nstart[:n_nodes], nend[:n_nodes], order, n_leaves)


@njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, leaf, Xq):
    out = np.empty(Xq.shape[0], dtype=np.int64)
    for r in range(Xq.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Xq[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = leaf[node]
    return out


class RegressionTree:
    """A fitted tree: node arrays plus, per leaf, its training members.

    ``leaf_members[j]`` / ``leaf_counts[j]`` hold the training indices in
    leaf j and their multiplicities in the sample the tree was grown on.
    """

    def __init__(self, feature, threshold, left, right, leaf, leaf_members,
                 leaf_counts, leaf_mean, n_train, config):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.leaf = leaf
        self.leaf_members = leaf_members
        self.leaf_counts = leaf_counts
        self.leaf_mean = leaf_mean
        self.n_train = n_train
        self.config = config

    @property
    def n_leaves(self):
        return len(self.leaf_members)

    @property
    def d_x(self):
        return self._d_x

    def apply(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        return _apply(self.feature, self.threshold, self.left, self.right, self.leaf, Xq)

    def bin(self, x):
        return int(self.apply(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def leaf_weights(self, leaf_id):
        counts = self.leaf_counts[leaf_id]
        return WeightVector(self.leaf_members[leaf_id], counts / counts.sum(), self.n_train)

    def weights(self, x):
        return self.leaf_weights(self.bin(x))

    def predict(self, x):
        return self.leaf_mean[self.bin(x)].copy()

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf": self.leaf.tolist(),
            "leaf_members": [m.tolist() for m in self.leaf_members],
            "leaf_counts": [c.tolist() for c in self.leaf_counts],
            "leaf_mean": self.leaf_mean.tolist(),
            "config": asdict(self.config),
        }

    def dumps(self):
        return json.dumps(self.to_dict())


def _check_xy(X, Y):
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    Y = np.asarray(Y, dtype=float)
    Y = np.ascontiguousarray(Y.reshape(-1, 1) if Y.ndim == 1 else Y)
    if X.shape[0] == 0:
        raise TreeError("empty data")
    if X.shape[0] != Y.shape[0]:
        raise TreeError("X and Y row counts differ")
    return X, Y


def _build(X, Y, counts, config, seed):
    mtry = config.resolve_mtry(X.shape[1])
    max_depth = -1 if config.max_depth is None else config.max_depth
    (feature, threshold, left, right, leaf, nstart, nend, order,
     n_leaves) = _grow(X, Y, counts, mtry, config.min_leaf, max_depth, seed)
    members, mcounts = [None] * n_leaves, [None] * n_leaves
    means = np.empty((n_leaves, Y.shape[1]))
    for node in np.flatnonzero(leaf >= 0):
        j = leaf[node]
        idx = np.sort(order[nstart[node]:nend[node]])
        c = counts[idx].astype(float)
        members[j] = idx
        mcounts[j] = c
        means[j] = c @ Y[idx] / c.sum()
    tree = RegressionTree(feature, threshold, left, right, leaf, members, mcounts,
                          means, X.shape[0], config)
    tree._d_x = X.shape[1]
    return tree


def fit_tree(X, Y, config=TreeConfig(), counts=None):
    """Grow one CART tree; ``counts`` are optional row multiplicities."""
    X, Y = _check_xy(X, Y)
    if counts is None:
        counts = np.ones(X.shape[0], dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() < 1:
        raise TreeError("empty data")
    return _build(X, Y, counts, config, derive_seed(config.seed, "tree") % (2**31))


class Forest:
    def __init__(self, trees, counts, config):
        self.trees = trees
        self.counts = counts  # per-tree multiplicity of each training row
        self.config = config

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def n_train(self):
        return self.trees[0].n_train

    def weights(self, x):
        x = np.asarray(x, dtype=float).reshape(1, -1)
        dense = np.zeros(self.n_train)
        for tree in self.trees:
            j = int(tree.apply(x)[0])
            c = tree.leaf_counts[j]
            dense[tree.leaf_members[j]] += c / c.sum()
        dense /= self.n_trees
        return WeightVector.from_dense(dense)

    def predict(self, x):
        x = np.asarray(x, dtype=float).reshape(1, -1)
        acc = np.zeros_like(self.trees[0].leaf_mean[0])
        for tree in self.trees:
            acc += tree.leaf_mean[int(tree.apply(x)[0])]
        return acc / self.n_trees


def _sample_counts(n, subsample, rng):
    if subsample is None:
        return np.ones(n, dtype=np.int64)
    if subsample == "bootstrap":
        return np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.int64)
    size = max(1, int(round(subsample * n)))
    counts = np.zeros(n, dtype=np.int64)
    counts[rng.choice(n, size=size, replace=False)] = 1
    return counts


def fit_forest(X, Y, config=None):
    X, Y = _check_xy(X, Y)
    if config is None:
        config = TreeConfig.forest_defaults(X.shape[1])
    n = X.shape[0]
    trees, all_counts = [], []
    for t in range(config.n_trees):
        rng = stream(config.seed, "forest", t)
        counts = _sample_counts(n, config.subsample, rng)
        if config.n_trees == 1 and config.subsample is None:
            tree = fit_tree(X, Y, config, counts)
        else:
            tree = _build(X, Y, counts, config, derive_seed(config.seed, "forest-tree", t) % (2**31))
        trees.append(tree)
        all_counts.append(counts)
    return Forest(trees, all_counts, config)


def tree_weights(tree, x):
    return tree.weights(x)


def forest_weights(forest, x):
    return forest.weights(x)


def predict(model, x):
    return model.predict(x)


def bin(tree, x):  # noqa: A001 - mirrors the binning-rule name
    return tree.bin(x)
