"""Dense transportation-problem solver (network simplex, numba-compiled).

Solves  min sum_ij C[i,j] x[i,j]  s.t.  sum_j x[i,j] = a[i],  sum_i x[i,j] = b[j],
x >= 0, for strictly positive supplies/demands with equal totals.  The basis is
the classic spanning tree on the bipartite graph.  Pricing scans the dense cost
matrix in blocks and takes the most negative reduced cost per block; pivots
maintain parent/depth/potential arrays incrementally, so a pivot costs time
proportional to the cycle length plus the re-rooted subtree, not to the node
count.

The solver returns the optimal basic flows together with node potentials, from
which callers certify optimality via weak duality.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# status codes returned by _simplex
OPTIMAL = 0
PIVOT_LIMIT = 1
BAD_BASIS = 2


@njit(cache=True)
def _northwest_corner(a, b, bi, bj, f):
    # cost-blind staircase loading; always a spanning tree, used as fallback
    n = a.shape[0]
    m = b.shape[0]
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    for k in range(n + m - 1):
        bi[k] = i
        bj[k] = j
        t = ra[i] if ra[i] < rb[j] else rb[j]
        f[k] = t
        ra[i] -= t
        rb[j] -= t
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1


@njit(cache=True)
def _row_min_basis(a, b, C, bi, bj, f):
    # Greedy row-minimum loading: walk rows in order, repeatedly sending the
    # remaining row supply to the cheapest still-open column.  Every allocation
    # closes exactly one row or column (the last closes both), so the result is
    # a basic feasible solution with n+m-1 cells, a far better simplex start
    # than the cost-blind northwest corner.
    n = a.shape[0]
    m = b.shape[0]
    K = n + m - 1
    ra = a.copy()
    rb = b.copy()
    col_open = np.ones(m, dtype=np.bool_)
    i = 0
    for k in range(K):
        jbest = -1
        cbest = np.inf
        for j in range(m):
            if col_open[j] and C[i, j] < cbest:
                cbest = C[i, j]
                jbest = j
        j = jbest
        t = ra[i] if ra[i] < rb[j] else rb[j]
        bi[k] = i
        bj[k] = j
        f[k] = t
        ra[i] -= t
        rb[j] -= t
        if k == K - 1:
            break
        if ra[i] == 0.0 and i < n - 1:
            i += 1  # row closed; on ties the 0-mass column stays open and is
            # absorbed later by a degenerate allocation
        else:
            col_open[j] = False


@njit(cache=True)
def _simplex(a, b, C, bi, bj, f, tol, max_pivots):
    n = a.shape[0]
    m = b.shape[0]
    N = n + m
    K = N - 1
    nm = n * m

    # adjacency of the basis tree: arc k has slots 2k (at source bi[k]) and
    # 2k+1 (at sink n+bj[k]); doubly linked lists headed per node
    head = np.full(N, -1, dtype=np.int64)
    nxt = np.full(2 * K, -1, dtype=np.int64)
    prv = np.full(2 * K, -1, dtype=np.int64)
    for k in range(K):
        for s in range(2 * k, 2 * k + 2):
            node = bi[k] if s == 2 * k else n + bj[k]
            s_old = head[node]
            nxt[s] = s_old
            prv[s] = -node - 2  # negative: "previous" is the head slot of node
            if s_old >= 0:
                prv[s_old] = s
            head[node] = s

    pot = np.empty(N, dtype=np.float64)
    depth = np.zeros(N, dtype=np.int64)
    parent = np.full(N, -1, dtype=np.int64)
    parc = np.full(N, -1, dtype=np.int64)
    stack = np.empty(N, dtype=np.int64)
    mark = np.full(N, -1, dtype=np.int64)

    # ---- initial tree labelling from root 0
    pot[0] = 0.0
    mark[0] = 0
    stack[0] = 0
    top = 1
    seen = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s = head[node]
        while s >= 0:
            k = s >> 1
            other = bi[k] if (s & 1) else n + bj[k]
            if mark[other] < 0:
                pot[other] = C[bi[k], bj[k]] - pot[node]
                parent[other] = node
                parc[other] = k
                depth[other] = depth[node] + 1
                mark[other] = 0
                seen += 1
                stack[top] = other
                top += 1
            s = nxt[s]
    if seen != N:
        return bi, bj, f, pot, 0, BAD_BASIS

    block = int(np.sqrt(nm)) + 1
    if block < 256:
        block = 256
    pos = 0
    pivots = 0
    stamp = 0

    while True:
        # ---- pricing: block scan for the most negative reduced cost
        best = -tol
        ei = -1
        ej = -1
        scanned = 0
        i = pos // m
        j = pos - i * m
        while scanned < nm:
            r = C[i, j] - pot[i] - pot[n + j]
            if r < best:
                best = r
                ei = i
                ej = j
            scanned += 1
            j += 1
            if j == m:
                j = 0
                i += 1
                if i == n:
                    i = 0
            if scanned % block == 0 and ei >= 0:
                break
        pos = i * m + j
        if ei < 0:
            return bi, bj, f, pot, pivots, OPTIMAL
        if pivots >= max_pivots:
            return bi, bj, f, pot, pivots, PIVOT_LIMIT

        # ---- locate the pivot cycle: tree path between ei and n+ej.
        # Cycle direction is ei -> (n+ej) over the entering arc, then back to
        # ei through the tree.  Walking up from y=n+ej, arc parc[y] loses flow
        # iff y is a sink; walking up from x=ei, arc parc[x] loses flow iff x
        # is a source.  Ties prefer the ej side (Cunningham-style rule).
        x = ei
        y = n + ej
        theta = np.inf
        leave = -1
        e2_is_source = False
        while depth[x] > depth[y]:
            k = parc[x]
            if x < n and f[k] < theta:
                theta = f[k]
                leave = k
                e2_is_source = True
            x = parent[x]
        while depth[y] > depth[x]:
            k = parc[y]
            if y >= n and f[k] <= theta:
                theta = f[k]
                leave = k
                e2_is_source = False
            y = parent[y]
        while x != y:
            k = parc[x]
            if x < n and f[k] < theta:
                theta = f[k]
                leave = k
                e2_is_source = True
            x = parent[x]
            k = parc[y]
            if y >= n and f[k] <= theta:
                theta = f[k]
                leave = k
                e2_is_source = False
            y = parent[y]

        # ---- apply the flow change along both path segments
        if theta != 0.0:
            x = ei
            y = n + ej
            while depth[x] > depth[y]:
                k = parc[x]
                f[k] = f[k] - theta if x < n else f[k] + theta
                x = parent[x]
            while depth[y] > depth[x]:
                k = parc[y]
                f[k] = f[k] - theta if y >= n else f[k] + theta
                y = parent[y]
            while x != y:
                k = parc[x]
                f[k] = f[k] - theta if x < n else f[k] + theta
                x = parent[x]
                k = parc[y]
                f[k] = f[k] - theta if y >= n else f[k] + theta
                y = parent[y]

        # ---- swap the leaving arc's basis slot to the entering arc
        for s in range(2 * leave, 2 * leave + 2):
            pn = prv[s]
            sn = nxt[s]
            if pn <= -2:
                head[-pn - 2] = sn
            else:
                nxt[pn] = sn
            if sn >= 0:
                prv[sn] = pn
        bi[leave] = ei
        bj[leave] = ej
        f[leave] = theta
        for s in range(2 * leave, 2 * leave + 2):
            node = ei if s == 2 * leave else n + ej
            s_old = head[node]
            nxt[s] = s_old
            prv[s] = -node - 2
            if s_old >= 0:
                prv[s_old] = s
            head[node] = s

        # ---- re-root the detached subtree at the entering endpoint inside it.
        # Potentials keep u_i + v_j = C_ij on tree arcs, so within the shifted
        # subtree sources and sinks move by opposite amounts: nodes of the same
        # kind as the entering endpoint shift by the entering reduced cost,
        # nodes of the other kind by its negative.
        if e2_is_source:
            e1 = n + ej
            e2 = ei
            s_src = best
        else:
            e1 = ei
            e2 = n + ej
            s_src = -best
        stamp += 1
        parent[e2] = e1
        parc[e2] = leave
        depth[e2] = depth[e1] + 1
        pot[e2] += s_src if e2 < n else -s_src
        mark[e2] = stamp
        stack[0] = e2
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            s = head[node]
            while s >= 0:
                k = s >> 1
                if k != leave:
                    other = bi[k] if (s & 1) else n + bj[k]
                    if mark[other] != stamp and other != parent[node]:
                        parent[other] = node
                        parc[other] = k
                        depth[other] = depth[node] + 1
                        pot[other] += s_src if other < n else -s_src
                        mark[other] = stamp
                        stack[top] = other
                        top += 1
                s = nxt[s]

        pivots += 1


def transport(a, b, C, rel_tol=1e-11, max_pivot_factor=300):
    """Solve the dense transportation problem exactly.

    Parameters
    ----------
    a, b : (n,), (m,) float arrays
        Strictly positive supplies and demands with equal totals (the demand
        vector is rescaled internally so the totals match exactly).
    C : (n, m) float array
        Cost per unit mass.
    rel_tol : float
        Pricing tolerance relative to ``max|C|``.
    max_pivot_factor : int
        Pivot budget is ``max_pivot_factor * (n + m)``.

    Returns
    -------
    tuple
        ``(flow_i, flow_j, flow, u, v, cost)`` where the first three arrays
        list the n+m-1 basic cells and their (possibly zero) flows, ``u`` and
        ``v`` are the node potentials, and ``cost`` is the primal objective.

    Raises
    ------
    RuntimeError
        If the pivot budget is exhausted.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    n, m = C.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError("marginal/cost shape mismatch")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("supplies and demands must be strictly positive")
    b = b * (a.sum() / b.sum())

    cmax = float(np.max(np.abs(C))) if C.size else 1.0
    tol = rel_tol * max(cmax, 1e-300)
    max_pivots = max_pivot_factor * (n + m)
    K = n + m - 1
    bi = np.empty(K, dtype=np.int64)
    bj = np.empty(K, dtype=np.int64)
    f = np.empty(K, dtype=np.float64)
    _row_min_basis(a, b, C, bi, bj, f)
    bi, bj, f, pot, pivots, status = _simplex(a, b, C, bi, bj, f, tol, max_pivots)
    if status == BAD_BASIS:  # greedy loading produced a forest; rebuild safely
        _northwest_corner(a, b, bi, bj, f)
        bi, bj, f, pot, pivots, status = _simplex(a, b, C, bi, bj, f, tol, max_pivots)
    if status != OPTIMAL:
        raise RuntimeError(f"network simplex hit pivot limit after {pivots} pivots")
    cost = float(np.sum(C[bi, bj] * f))
    return bi, bj, f, pot[:n].copy(), pot[n:].copy(), cost
