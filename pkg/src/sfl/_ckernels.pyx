# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Each function mirrors one in sfl._pykernels."""

from libc.math cimport sqrt
import numpy as np
cimport numpy as cnp

cnp.import_array()


def adam_step(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
              double lr, double beta1, double beta2, double eps, double c1, double c2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi, mi, vi
    cdef double ob1 = 1.0 - beta1, ob2 = 1.0 - beta2
    for i in range(n):
        gi = g[i]
        mi = beta1 * m[i] + ob1 * gi
        vi = beta2 * v[i] + ob2 * gi * gi
        m[i] = mi
        v[i] = vi
        if mi != 0.0:
            p[i] -= lr * (mi / c1) / (sqrt(vi / c2) + eps)


def scatter_add_rows(double[:, ::1] out, const long long[::1] ids, const double[:, ::1] rows,
                     double alpha):
    cdef Py_ssize_t b, j, nb = ids.shape[0], nc = rows.shape[1]
    cdef long long r
    for b in range(nb):
        r = ids[b]
        for j in range(nc):
            out[r, j] += alpha * rows[b, j]


def cosine_to_rows(const double[::1] q, const double[:, ::1] X):
    """Cosine of ``q`` with each row of ``X``; 0 where either norm is 0."""
    cdef Py_ssize_t i, j, n = X.shape[0], d = X.shape[1]
    cdef double qq = 0.0, xx, dot
    out = np.zeros(n)
    cdef double[::1] o = out
    for j in range(d):
        qq += q[j] * q[j]
    if qq == 0.0:
        return out
    for i in range(n):
        xx = 0.0
        dot = 0.0
        for j in range(d):
            xx += X[i, j] * X[i, j]
            dot += X[i, j] * q[j]
        if xx > 0.0:
            o[i] = dot / (sqrt(qq) * sqrt(xx))
    return out


def bfs_distances(const long long[:, ::1] table, Py_ssize_t source):
    cdef Py_ssize_t n = table.shape[0], A = table.shape[1]
    cdef Py_ssize_t head = 0, tail = 0, s, a
    cdef long long t
    dist_i = np.full(n, -1, dtype=np.int64)
    queue_a = np.empty(n, dtype=np.int64)
    cdef long long[::1] dist = dist_i
    cdef long long[::1] queue = queue_a
    dist[source] = 0
    queue[tail] = source
    tail += 1
    while head < tail:
        s = queue[head]
        head += 1
        for a in range(A):
            t = table[s, a]
            if dist[t] < 0:
                dist[t] = dist[s] + 1
                queue[tail] = t
                tail += 1
    out = dist_i.astype(np.float64)
    out[dist_i < 0] = np.inf
    return out


def rollout(const long long[:, ::1] table, Py_ssize_t start, const long long[::1] actions):
    """Visited states (length len(actions) + 1) of an open-loop action sequence."""
    cdef Py_ssize_t k, n = actions.shape[0]
    out_a = np.empty(n + 1, dtype=np.int64)
    cdef long long[::1] out = out_a
    cdef long long s = start
    out[0] = s
    for k in range(n):
        s = table[s, actions[k]]
        out[k + 1] = s
    return out_a
