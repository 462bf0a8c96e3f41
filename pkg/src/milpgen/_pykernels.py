"""Pure-Python graph-statistics kernels (fallback for the compiled core).

Both kernels take a bipartite edge list ``(edge_v, edge_w)`` over ``m``
constraint and ``n`` variable vertices. Vertices are numbered constraints
first, then variables (variable ``j`` is vertex ``m + j``).
"""

from __future__ import annotations

import heapq

import numpy as np
import scipy.sparse as sp


def _side_clustering(B: sp.csr_matrix) -> np.ndarray:
    # rows of B are the vertices of one side, columns their neighbours
    deg = np.asarray(B.sum(axis=1)).ravel()
    O = (B @ B.T).tocsr()
    O.sort_indices()  # fixes the summation order below
    O = O.tocoo()
    off = O.row != O.col
    r, c, ov = O.row[off], O.col[off], O.data[off]
    jac = ov / (deg[r] + deg[c] - ov)
    tot = np.bincount(r, weights=jac, minlength=B.shape[0])
    cnt = np.bincount(r, minlength=B.shape[0])
    return np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)


def bipartite_clustering(m: int, n: int, edge_v, edge_w) -> np.ndarray:
    """Per-vertex pairwise-overlap clustering: mean Jaccard similarity of the
    vertex's neighbourhood with that of every vertex two hops away (0 when
    there is none)."""
    edge_v = np.asarray(edge_v, dtype=np.int64)
    edge_w = np.asarray(edge_w, dtype=np.int64)
    B = sp.csr_matrix((np.ones(edge_v.size), (edge_v, edge_w)), shape=(m, n))
    return np.concatenate([_side_clustering(B), _side_clustering(B.T.tocsr())])


def greedy_modularity(num_nodes: int, edge_u, edge_v) -> np.ndarray:
    """Greedy agglomerative modularity maximization (Clauset-Newman-Moore).

    Repeatedly merges the pair of adjacent communities with the largest
    modularity gain, ties broken by smallest first then second index; the
    lower index survives. Stops when no merge has a positive gain. Returns
    the community label (surviving index) per vertex.

    Gains are kept in exact integer form ``2M e_ij - D_i D_j`` (edge count
    between the communities, degree sums), which is the modularity gain
    scaled by ``2 M^2``, so ties are decided by the index rule alone.
    """
    edge_u = np.asarray(edge_u, dtype=np.int64)
    edge_v = np.asarray(edge_v, dtype=np.int64)
    labels = np.arange(num_nodes, dtype=np.int64)
    n_edges = edge_u.size
    if n_edges == 0:
        return labels
    two_m = 2 * n_edges
    D = [int(k) for k in np.bincount(edge_u, minlength=num_nodes)
         + np.bincount(edge_v, minlength=num_nodes)]
    e = [dict() for _ in range(num_nodes)]
    for u, v in zip(edge_u.tolist(), edge_v.tolist()):
        e[u][v] = e[u].get(v, 0) + 1
        e[v][u] = e[v].get(u, 0) + 1

    def gain(i, k):
        return two_m * e[i][k] - D[i] * D[k]

    heap = [(-gain(u, v), u, v) for u in range(num_nodes) for v in e[u] if u < v]
    heapq.heapify(heap)
    alive = [True] * num_nodes
    members = [[u] for u in range(num_nodes)]
    while heap:
        neg, i, j = heapq.heappop(heap)
        if not (alive[i] and alive[j]) or j not in e[i] or gain(i, j) != -neg:
            continue
        if -neg <= 0:
            break
        ei, ej = e[i], e[j]
        ei.pop(j)
        ej.pop(i)
        for k, cnt in ej.items():
            ei[k] = ei.get(k, 0) + cnt
            e[k][i] = ei[k]
            del e[k][j]
        e[j] = {}
        alive[j] = False
        D[i] += D[j]
        D[j] = 0
        for k in ei:
            heapq.heappush(heap, (-gain(i, k), min(i, k), max(i, k)))
        members[i].extend(members[j])
        members[j] = []
    for c, mem in enumerate(members):
        if mem:
            labels[mem] = c
    return labels
