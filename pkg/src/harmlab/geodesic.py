"""Distance fields and approximate minimal geodesics.

Closed forms are used wherever they exist (flat grids, cones by unrolling,
the flat cylinder, distances from a pole, Pythagorean products).  Other
warped surfaces use a first-order fast-marching eikonal solver.  Geodesic
*paths* for the segment inequality come from Dijkstra on a 16-neighbour
metric graph of the warped factor.
"""

from __future__ import annotations

import heapq
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .profiles import ConeProfile, CylinderProfile


def _angle_gap(theta, theta0):
    d = np.abs(np.asarray(theta) - theta0) % (2.0 * np.pi)
    return np.minimum(d, 2.0 * np.pi - d)


def base_distance(man, b0: int) -> np.ndarray:
    """Distance on the base factor from base vertex ``b0`` to all base vertices."""
    base = man.base
    if base.kind == "none":
        return np.zeros(1)
    if base.kind == "radial":
        if b0 != 0:
            raise ValueError("radial backends only support distances from the pole")
        return base.s.copy()
    s_b, th_b = base_coords(base)
    s0, t0 = s_b[b0], th_b[b0]
    prof = base.profile
    if base.tip and b0 == 0:
        return s_b.copy()
    if isinstance(prof, ConeProfile):
        gap = prof.a * _angle_gap(th_b, t0)
        d2 = s_b**2 + s0**2 - 2.0 * s_b * s0 * np.cos(gap)
        return np.sqrt(np.maximum(d2, 0.0))
    if isinstance(prof, CylinderProfile):
        return np.hypot(s_b - s0, _angle_gap(th_b, t0))
    return fast_marching(base, b0)


def base_coords(base):
    """(s, theta) per base vertex of a warped base (tip has theta = 0)."""
    nt = base.n_theta
    if base.tip:
        s = np.concatenate([[0.0], np.repeat(base.s[1:], nt)])
        th = np.concatenate([[0.0], np.tile(base.theta, base.n_rows - 1)])
    else:
        s = np.repeat(base.s, nt)
        th = np.tile(base.theta, base.n_rows)
    return s, th


def distance_field_on(man, v0: int) -> np.ndarray:
    """Geodesic distance from vertex ``v0`` to every vertex of ``man``."""
    blk = man.block_shape
    idx = np.unravel_index(int(v0), blk)
    if man.base.kind == "none":
        d2 = np.zeros(blk[1:])
    else:
        db = base_distance(man, int(idx[0]))
        d2 = (db**2).reshape((-1,) + (1,) * len(man.flat))
    for j, ax in enumerate(man.flat):
        off = ax.nodes - ax.nodes[idx[1 + j]]
        shape = [1] * len(blk)
        shape[1 + j] = -1
        if man.base.kind == "none":
            shape = shape[1:]
        d2 = d2 + (off**2).reshape(shape)
    return np.sqrt(np.broadcast_to(d2, blk if man.base.kind != "none" else blk[1:])).ravel().copy()


def fast_marching(base, b0: int) -> np.ndarray:
    """First-order fast marching for |grad T| = 1 in the metric ds^2 + f^2 dθ^2."""
    nt = base.n_theta
    tip = base.tip
    first = 1 if tip else 0
    nr = base.n_rows - first
    s_rows = base.s[first:]
    hs = base.hs
    hth = np.abs(base.profile.f(s_rows)) * base.dtheta
    n = base.size
    T = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)

    def rc(v):
        k = v - first
        return k // nt, k % nt

    def vid(i, j):
        return first + i * nt + (j % nt)

    def s_neighbours(i, j):
        out = []
        if i > 0:
            out.append(vid(i - 1, j))
        elif tip:
            out.append(0)
        if i < nr - 1:
            out.append(vid(i + 1, j))
        return out

    def update(v):
        i, j = rc(v)
        a = min((T[u] for u in s_neighbours(i, j) if done[u]), default=np.inf)
        b = min(T[vid(i, j - 1)] if done[vid(i, j - 1)] else np.inf,
                T[vid(i, j + 1)] if done[vid(i, j + 1)] else np.inf)
        ht = hth[i]
        best = min(a + hs, b + ht)
        if np.isfinite(a) and np.isfinite(b):
            A = hs * hs + ht * ht
            disc = A - (a - b) ** 2
            if disc >= 0:
                cand = (a * ht * ht + b * hs * hs + hs * ht * np.sqrt(disc)) / A
                if cand >= max(a, b):
                    best = min(best, cand)
        return best

    T[b0] = 0.0
    heap = [(0.0, b0)]
    while heap:
        t, v = heapq.heappop(heap)
        if done[v] or t > T[v]:
            continue
        done[v] = True
        if tip and v == 0:
            nbrs = [vid(0, j) for j in range(nt)]
        else:
            i, j = rc(v)
            nbrs = s_neighbours(i, j) + [vid(i, j - 1), vid(i, j + 1)]
        for u in nbrs:
            if done[u]:
                continue
            if tip and u == 0:
                cand = min(T[vid(0, j)] for j in range(nt) if done[vid(0, j)]) + hs
            else:
                cand = update(u)
            if cand < T[u]:
                T[u] = cand
                heapq.heappush(heap, (cand, u))
    return T


# ---------------------------------------------------------------------------
# Graph geodesics on a warped base

_STENCIL = [(di, dj) for di in (-2, -1, 0, 1, 2) for dj in (-2, -1, 0, 1, 2)
            if (di, dj) != (0, 0) and np.gcd(abs(di), abs(dj)) == 1]


def base_graph(base) -> sp.csr_matrix:
    """Metric graph with a 16-neighbour stencil on a warped base."""
    cached = getattr(base, "_graph", None)
    if cached is not None:
        return cached
    nt = base.n_theta
    first = 1 if base.tip else 0
    nr = base.n_rows - first
    s_rows = base.s[first:]
    f = base.profile.f
    ring = first + np.arange(nr * nt).reshape(nr, nt)
    rows, cols, vals = [], [], []
    I, J = np.meshgrid(np.arange(nr), np.arange(nt), indexing="ij")
    for di, dj in _STENCIL:
        if di < 0 or (di == 0 and dj < 0):
            continue
        ok = (I + di >= 0) & (I + di < nr)
        i0, j0 = I[ok], J[ok]
        i1, j1 = i0 + di, (j0 + dj) % nt
        s_mid = 0.5 * (s_rows[i0] + s_rows[i1])
        length = np.hypot(di * base.hs, f(s_mid) * dj * base.dtheta)
        rows.append(ring[i0, j0])
        cols.append(ring[i1, j1])
        vals.append(length)
    if base.tip:
        for k in (1, 2):
            if k <= nr:
                rows.append(np.zeros(nt, dtype=int))
                cols.append(ring[k - 1])
                vals.append(np.full(nt, s_rows[k - 1]))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    n = base.size
    G = sp.coo_matrix((np.concatenate([v, v]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                      shape=(n, n)).tocsr()
    base._graph = G
    return G


def graph_paths(base, source: int, targets) -> tuple[list, np.ndarray]:
    """Shortest graph paths (base vertex sequences) from ``source`` to ``targets``."""
    G = base_graph(base)
    dist, pred = dijkstra(G, directed=False, indices=int(source), return_predecessors=True)
    paths = []
    for t in np.atleast_1d(targets):
        t = int(t)
        if not np.isfinite(dist[t]):
            paths.append(None)
            continue
        path = [t]
        while path[-1] != source:
            path.append(int(pred[path[-1]]))
        paths.append(path[::-1])
    return paths, dist[np.atleast_1d(targets)]
