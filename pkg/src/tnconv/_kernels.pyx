# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels; same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def quad_max_affine(points, grads, offsets, nodes, weights):
    cdef double[:, ::1] Z = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] G = np.ascontiguousarray(grads, dtype=np.float64)
    cdef double[::1] O = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[:, ::1] NB = np.ascontiguousarray(np.asarray(nodes, dtype=np.float64) @ np.asarray(grads, dtype=np.float64).T)
    cdef Py_ssize_t P = Z.shape[0], D = Z.shape[1], K = G.shape[0], Q = NB.shape[0]
    vals_np = np.empty(P)
    grad_np = np.zeros((P, D))
    cdef double[::1] vals = vals_np
    cdef double[:, ::1] og = grad_np
    cdef double[::1] lv = np.empty(K)
    cdef Py_ssize_t p, q, k, d, best
    cdef double acc, v, bv
    for p in range(P):
        for k in range(K):
            acc = O[k]
            for d in range(D):
                acc += G[k, d] * Z[p, d]
            lv[k] = acc
        acc = 0.0
        for q in range(Q):
            best = 0
            bv = lv[0] - NB[q, 0]
            for k in range(1, K):
                v = lv[k] - NB[q, k]
                if v > bv:
                    bv = v
                    best = k
            acc += W[q] * bv
            for d in range(D):
                og[p, d] += W[q] * G[best, d]
        vals[p] = acc
    return vals_np, grad_np


def min_dist_to_set(A, targets):
    cdef double[:, ::1] X = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] T = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t P = X.shape[0], D = X.shape[1], K = T.shape[0]
    dist_np = np.empty(P)
    arg_np = np.empty(P, dtype=np.int64)
    cdef double[::1] dist = dist_np
    cdef long long[::1] arg = arg_np
    cdef Py_ssize_t p, k, d
    cdef double s, t, best
    cdef long long bk
    for p in range(P):
        best = -1.0
        bk = 0
        for k in range(K):
            s = 0.0
            for d in range(D):
                t = X[p, d] - T[k, d]
                s += t * t
            if best < 0 or s < best:
                best = s
                bk = k
        dist[p] = sqrt(best)
        arg[p] = bk
    return dist_np, arg_np
