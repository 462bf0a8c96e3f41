# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled graph-statistics kernels; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libcpp.vector cimport vector
from libcpp.unordered_map cimport unordered_map
from libcpp.algorithm cimport sort
from cython.operator cimport dereference as deref, preincrement as inc

cnp.import_array()


cdef void _side(long nrows, const long[:] indptr, const long[:] indices, const long[:] tptr,
                const long[:] tind,
                double[:] out, long offset):
    cdef vector[long] overlap
    cdef vector[long] touched
    cdef long u, p, q, w, v, t, du, dv, ov, count
    cdef double acc
    overlap.resize(nrows, 0)
    for u in range(nrows):
        touched.clear()
        for p in range(indptr[u], indptr[u + 1]):
            w = indices[p]
            for q in range(tptr[w], tptr[w + 1]):
                v = tind[q]
                if v == u:
                    continue
                if overlap[v] == 0:
                    touched.push_back(v)
                overlap[v] += 1
        du = indptr[u + 1] - indptr[u]
        acc = 0.0
        count = touched.size()
        # sum in increasing neighbour order to match the sparse-matrix fallback
        sort(touched.begin(), touched.end())
        for t in range(count):
            v = touched[t]
            ov = overlap[v]
            dv = indptr[v + 1] - indptr[v]
            acc += <double>ov / <double>(du + dv - ov)
            overlap[v] = 0
        out[offset + u] = acc / count if count > 0 else 0.0


def bipartite_clustering(long m, long n, edge_v, edge_w):
    ev = np.asarray(edge_v, dtype=np.int64)
    ew = np.asarray(edge_w, dtype=np.int64)
    order_v = np.lexsort((ew, ev))
    order_w = np.lexsort((ev, ew))
    vptr = np.zeros(m + 1, dtype=np.int64)
    wptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(ev, minlength=m), out=vptr[1:])
    np.cumsum(np.bincount(ew, minlength=n), out=wptr[1:])
    v_nbrs = ew[order_v].copy()
    w_nbrs = ev[order_w].copy()
    out = np.zeros(m + n, dtype=np.float64)
    _side(m, vptr, v_nbrs, wptr, w_nbrs, out, 0)
    _side(n, wptr, w_nbrs, vptr, v_nbrs, out, m)
    return out


cdef extern from *:
    """
    #include <queue>
    #include <vector>
    struct Entry { long long gain; long i; long j; };
    struct EntryLess {
        bool operator()(const Entry& x, const Entry& y) const {
            // max-heap on gain; ties favour smaller i, then smaller j
            if (x.gain != y.gain) return x.gain < y.gain;
            if (x.i != y.i) return x.i > y.i;
            return x.j > y.j;
        }
    };
    typedef std::priority_queue<Entry, std::vector<Entry>, EntryLess> EntryHeap;
    """
    cdef struct Entry:
        long long gain
        long i
        long j

    cdef cppclass EntryHeap:
        void push(Entry&)
        Entry& top()
        void pop()
        bint empty()


def greedy_modularity(long num_nodes, edge_u, edge_v):
    # integer gains 2M e_ij - D_i D_j; see the pure-Python version
    eu = np.asarray(edge_u, dtype=np.int64)
    ev = np.asarray(edge_v, dtype=np.int64)
    labels = np.arange(num_nodes, dtype=np.int64)
    cdef long n_edges = eu.size
    if n_edges == 0:
        return labels
    cdef const long[:] eu_v = eu
    cdef const long[:] ev_v = ev
    cdef long long two_m = 2 * n_edges
    cdef vector[long long] D
    cdef vector[unordered_map[long, long]] e
    cdef vector[char] alive
    cdef vector[vector[long]] members
    cdef EntryHeap heap
    cdef Entry ent
    cdef long u, v, i, j, k, t, cnt
    cdef unordered_map[long, long].iterator it

    deg = np.bincount(eu, minlength=num_nodes) + np.bincount(ev, minlength=num_nodes)
    D.resize(num_nodes)
    e.resize(num_nodes)
    alive.resize(num_nodes, 1)
    members.resize(num_nodes)
    for u in range(num_nodes):
        D[u] = deg[u]
        members[u].push_back(u)
    for t in range(n_edges):
        u = eu_v[t]
        v = ev_v[t]
        e[u][v] += 1
        e[v][u] += 1
    for u in range(num_nodes):
        it = e[u].begin()
        while it != e[u].end():
            v = deref(it).first
            if u < v:
                ent.gain = two_m * deref(it).second - D[u] * D[v]
                ent.i = u
                ent.j = v
                heap.push(ent)
            inc(it)

    while not heap.empty():
        ent = heap.top()
        heap.pop()
        i = ent.i
        j = ent.j
        if not (alive[i] and alive[j]):
            continue
        it = e[i].find(j)
        if it == e[i].end() or two_m * deref(it).second - D[i] * D[j] != ent.gain:
            continue
        if ent.gain <= 0:
            break
        e[i].erase(j)
        e[j].erase(i)
        it = e[j].begin()
        while it != e[j].end():
            k = deref(it).first
            cnt = deref(it).second
            e[i][k] += cnt
            e[k][i] = e[i][k]
            e[k].erase(j)
            inc(it)
        e[j].clear()
        alive[j] = 0
        D[i] = D[i] + D[j]
        D[j] = 0
        it = e[i].begin()
        while it != e[i].end():
            k = deref(it).first
            ent.gain = two_m * deref(it).second - D[i] * D[k]
            ent.i = i if i < k else k
            ent.j = k if i < k else i
            heap.push(ent)
            inc(it)
        for t in range(<long>members[j].size()):
            members[i].push_back(members[j][t])
        members[j].clear()
    cdef long[:] lab = labels
    for i in range(num_nodes):
        for t in range(<long>members[i].size()):
            lab[members[i][t]] = i
    return labels
