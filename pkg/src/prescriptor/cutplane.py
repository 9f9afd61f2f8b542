"""Trust-region cutting planes for convex piecewise-linear minimization."""

import numpy as np
from scipy.optimize import linprog


class CuttingPlaneError(RuntimeError):
    pass


def _master(cuts_g, cuts_r, dim, bounds, simplex, center=None, radius=None):
    """min theta s.t. theta >= f_k + g_k'(z - z_k) over the feasible set,
    optionally within an l-infinity box around ``center``."""
    bnds = list(bounds)
    if center is not None:
        bnds = [(max(lo, c - radius), min(hi, c + radius)) for (lo, hi), c in zip(bnds, center)]
    kwargs = {}
    if simplex:
        kwargs = {"A_eq": np.append(np.ones(dim), 0.0).reshape(1, -1), "b_eq": [1.0]}
    args = (np.append(np.zeros(dim), 1.0),)
    kwargs.update(A_ub=np.array(cuts_g), b_ub=np.array(cuts_r),
                  bounds=bnds + [(None, None)], method="highs")
    res = linprog(*args, options={"primal_feasibility_tolerance": 1e-10,
                                  "dual_feasibility_tolerance": 1e-10}, **kwargs)
    if res.status != 0:
        # tight tolerances occasionally stall HiGHS on dense cut sets
        res = linprog(*args, **kwargs)
    if res.status != 0:
        raise CuttingPlaneError("cutting-plane master LP failed")
    return np.asarray(res.x[:dim]), float(res.fun)


def minimize_pwl(oracle, z0, bounds, simplex=False, tol=1e-9, max_iter=2000):
    """Minimize a convex piecewise-linear function given value/subgradient.

    Cuts are global lower bounds, so the unrestricted master value certifies
    optimality; a box trust region around the incumbent keeps steps short.
    Box-bounded coordinates are mapped to [0, 1] and values are divided by
    |f(z0)| so the master LP stays well scaled.
    """
    z0 = np.asarray(z0, dtype=float)
    dim = len(z0)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    rescale = not simplex and np.isfinite(lo).all() and np.isfinite(hi).all() and np.all(hi > lo)
    if rescale:
        span = hi - lo
        to_z = lambda u: lo + span * u  # noqa: E731
        ubounds = [(0.0, 1.0)] * dim
        u0 = (z0 - lo) / span
    else:
        span = np.ones(dim)
        to_z = lambda u: u  # noqa: E731
        ubounds = list(bounds)
        u0 = z0
    f0 = oracle(to_z(u0))
    fscale = max(1.0, abs(f0[0]))

    def scaled(u):
        f, g = oracle(to_z(u))
        return f / fscale, np.asarray(g) * span / fscale

    u = _minimize(scaled, u0, ubounds, simplex, tol, max_iter)
    return to_z(u)


def _minimize(oracle, z0, bounds, simplex, tol, max_iter):
    dim = len(z0)
    width = max(hi - lo for lo, hi in bounds)
    radius = 0.1 * width if np.isfinite(width) else 1.0
    center = np.asarray(z0, dtype=float)
    f_c, g = oracle(center)
    cuts_g = [np.append(g, -1.0)]
    cuts_r = [g @ center - f_c]
    for _ in range(max_iter):
        z, model = _master(cuts_g, cuts_r, dim, bounds, simplex, center, radius)
        if f_c - model <= tol * (1.0 + abs(f_c)):
            _, lower = _master(cuts_g, cuts_r, dim, bounds, simplex)
            if f_c - lower <= tol * (1.0 + abs(f_c)):
                return center
            radius *= 4.0
            continue
        f, g = oracle(z)
        cuts_g.append(np.append(g, -1.0))
        cuts_r.append(g @ z - f)
        if f_c - f >= 0.1 * (f_c - model):
            boundary = np.max(np.abs(z - center)) >= 0.999 * radius
            center, f_c = z, f
            if boundary:
                radius = min(2.0 * radius, width)
        elif f > f_c:
            radius *= 0.7
    raise CuttingPlaneError("cutting planes did not converge")
