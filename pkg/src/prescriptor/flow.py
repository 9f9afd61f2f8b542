"""Exact second-stage value of the shipment problem by successive shortest
paths (Dijkstra with node potentials) on the small warehouse/location network.

Nodes: 0 = source, 1..dz = warehouses, dz+1..dz+dy = locations, last = sink.
Arcs: source->warehouse (stock, capacity z_i, cost 0), source->warehouse
(rush, unbounded, cost p2), warehouse->location (unbounded, cost c_ij) and
location->sink (capacity y_j, cost 0).  Shortest-path distances from the
source in the final residual network are optimal duals; the distance to
warehouse i is the marginal value rho_i of stock there, so -rho is a
subgradient of the recourse value in z.
"""

import numpy as np
from numba import njit

_INF = 1e300


@njit(cache=True, nogil=True)
def _build(dz, dy, ship_cost, p2):
    n_arcs = 2 * (2 * dz + dz * dy + dy)
    head = np.empty(n_arcs, dtype=np.int64)
    tail = np.empty(n_arcs, dtype=np.int64)
    cost = np.empty(n_arcs)
    a = 0
    sink = dz + dy + 1
    for i in range(dz):
        for kind in range(2):
            tail[a] = 0
            head[a] = 1 + i
            cost[a] = 0.0 if kind == 0 else p2
            tail[a + 1] = 1 + i
            head[a + 1] = 0
            cost[a + 1] = -cost[a]
            a += 2
    for i in range(dz):
        for j in range(dy):
            tail[a] = 1 + i
            head[a] = 1 + dz + j
            cost[a] = ship_cost[i, j]
            tail[a + 1] = 1 + dz + j
            head[a + 1] = 1 + i
            cost[a + 1] = -ship_cost[i, j]
            a += 2
    for j in range(dy):
        tail[a] = 1 + dz + j
        head[a] = sink
        cost[a] = 0.0
        tail[a + 1] = sink
        head[a + 1] = 1 + dz + j
        cost[a + 1] = 0.0
        a += 2
    return head, tail, cost


@njit(cache=True, nogil=True)
def _adjacency(n_nodes, tail):
    first = np.zeros(n_nodes + 1, dtype=np.int64)
    for a in range(tail.shape[0]):
        first[tail[a] + 1] += 1
    for v in range(n_nodes):
        first[v + 1] += first[v]
    fill = first[:-1].copy()
    arcs = np.empty(tail.shape[0], dtype=np.int64)
    for a in range(tail.shape[0]):
        arcs[fill[tail[a]]] = a
        fill[tail[a]] += 1
    return first, arcs


@njit(cache=True, nogil=True)
def _dijkstra(n_nodes, first, arcs, head, cost, cap, pot, dist, pred, done):
    """Shortest paths from the source under reduced costs cost + pot[u] - pot[v]."""
    for v in range(n_nodes):
        dist[v] = _INF
        pred[v] = -1
        done[v] = False
    dist[0] = 0.0
    for _ in range(n_nodes):
        u = -1
        best = _INF
        for v in range(n_nodes):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for k in range(first[u], first[u + 1]):
            a = arcs[k]
            if cap[a] > 1e-12:
                v = head[a]
                rc = cost[a] + pot[u] - pot[v]
                if rc < 0.0:
                    rc = 0.0
                nd = best + rc
                if nd < dist[v] - 1e-12:
                    dist[v] = nd
                    pred[v] = a


@njit(cache=True, nogil=True)
def _solve_one(z, y, dz, dy, first, arcs, head, tail, cost, cap, pot, dist, pred, done, rho):
    n_nodes = dz + dy + 2
    sink = n_nodes - 1
    a = 0
    for i in range(dz):
        cap[a] = z[i]
        cap[a + 1] = 0.0
        cap[a + 2] = _INF
        cap[a + 3] = 0.0
        a += 4
    for i in range(dz * dy):
        cap[a] = _INF
        cap[a + 1] = 0.0
        a += 2
    remaining = 0.0
    for j in range(dy):
        cap[a] = y[j]
        cap[a + 1] = 0.0
        remaining += y[j]
        a += 2
    for v in range(n_nodes):
        pot[v] = 0.0
    total = 0.0
    for _ in range(10 * (dz + 1) * (dy + 1) + 100):
        if remaining <= 1e-12:
            break
        _dijkstra(n_nodes, first, arcs, head, cost, cap, pot, dist, pred, done)
        if dist[sink] >= _INF:
            break
        for v in range(n_nodes):
            if dist[v] < _INF:
                pot[v] += dist[v]
        bottleneck = remaining
        v = sink
        while v != 0:
            arc = pred[v]
            if cap[arc] < bottleneck:
                bottleneck = cap[arc]
            v = tail[arc]
        v = sink
        while v != 0:
            arc = pred[v]
            cap[arc] -= bottleneck
            cap[arc ^ 1] += bottleneck
            v = tail[arc]
        total += bottleneck * (pot[sink] - pot[0])
        remaining -= bottleneck
    # exact distances in the final residual network give the duals
    _dijkstra(n_nodes, first, arcs, head, cost, cap, pot, dist, pred, done)
    for i in range(dz):
        r = dist[1 + i] + pot[1 + i] - pot[0]
        if r < 0.0:
            r = 0.0
        rho[i] = r
    return total


@njit(cache=True, nogil=True)
def _batch(Z, Y, ship_cost, p2, with_duals):
    n = Y.shape[0]
    dz, dy = ship_cost.shape
    head, tail, cost = _build(dz, dy, ship_cost, p2)
    n_nodes = dz + dy + 2
    first, arcs = _adjacency(n_nodes, tail)
    cap = np.empty(head.shape[0])
    pot = np.zeros(n_nodes)
    dist = np.empty(n_nodes)
    pred = np.empty(n_nodes, dtype=np.int64)
    done = np.zeros(n_nodes, dtype=np.bool_)
    values = np.empty(n)
    duals = np.zeros((n, dz)) if with_duals else np.zeros((1, dz))
    rho = np.empty(dz)
    zpos = np.empty(dz)
    for k in range(n):
        zrow = Z[k] if Z.shape[0] > 1 else Z[0]
        forced = 0.0
        for i in range(dz):
            if zrow[i] < 0.0:
                forced += -zrow[i] * p2
                zpos[i] = 0.0
            else:
                zpos[i] = zrow[i]
        values[k] = forced + _solve_one(zpos, Y[k], dz, dy, first, arcs, head, tail, cost, cap,
                                       pot, dist, pred, done, rho)
        if with_duals:
            for i in range(dz):
                duals[k, i] = p2 if zrow[i] < 0.0 else rho[i]
    return values, duals


def recourse(Z, Y, ship_cost, p2, duals=False):
    """Second-stage cost for each row of Y at stock Z (one row, or one per Y row).

    Negative stock is allowed and forces rush production of the shortfall.
    With ``duals=True`` also returns rho with -rho a subgradient in z.
    """
    Y = np.ascontiguousarray(np.atleast_2d(np.asarray(Y, dtype=float)))
    Z = np.ascontiguousarray(np.atleast_2d(np.asarray(Z, dtype=float)))
    ship_cost = np.ascontiguousarray(np.asarray(ship_cost, dtype=float))
    if Z.shape[0] not in (1, Y.shape[0]):
        raise ValueError("Z must have one row or one row per scenario")
    values, rho = _batch(Z, Y, ship_cost, float(p2), duals)
    return (values, rho) if duals else values
