"""Kaplan-Meier correction of local weights for right-censored outcomes.

Only U = min(Y, V) and delta = [Y <= V] are observed.  Censored points get
weight zero and their mass is pushed onto larger uncensored observations by
the conditional product-limit rule.
"""

import math

import numpy as np

from .weights import WeightError, WeightVector


def km_order(u, delta, indices):
    """Sort order by u, events before censorings at ties, then by index."""
    return np.lexsort((indices, ~delta, u))


def km_transform(base, u, delta):
    """Censorship-corrected weights.

    Parameters
    ----------
    base : WeightVector
        Nonnegative base weights at the query point.
    u : array of N observed values min(y, v)
    delta : array of N booleans, True where y was observed

    Returns
    -------
    WeightVector
        Zero on censored points; total mass 1 unless the largest observation
        in the support is censored, in which case the deficit is kept.
    """
    u = np.asarray(u, dtype=float).ravel()
    delta = np.asarray(delta, dtype=bool).ravel()
    n = base.n_train
    if len(u) != n or len(delta) != n:
        raise WeightError("censoring data do not match the weight vector")
    if np.any(base.weights < 0):
        raise WeightError("Kaplan-Meier transform requires nonnegative weights")
    if not np.isfinite(u).all():
        raise WeightError("observed values must be finite")
    keep = base.weights > 0
    idx, w = base.indices[keep], base.weights[keep]
    if len(idx) == 0:
        return WeightVector([], [], n)
    d = delta[idx]
    if d.all():
        return WeightVector(idx, w / math.fsum(w), n)
    order = km_order(u[idx], d, idx)
    idx, w, d = idx[order], w[order], d[order]
    tail = np.cumsum(w[::-1])[::-1]
    # survival factor after each event: tail_{k+1} / tail_k
    next_tail = np.append(tail[1:], 0.0)
    factor = np.where(d, next_tail / tail, 1.0)
    survive = np.concatenate([[1.0], np.cumprod(factor)[:-1]])
    out = np.where(d, w / tail * survive, 0.0)
    nz = out > 0
    return WeightVector(idx[nz], out[nz], n)
