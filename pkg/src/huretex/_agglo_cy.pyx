# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled merge loop for agglomerative clustering.

Operation-for-operation mirror of ``_agglo_py.linkage_merges``; the two must
produce bit-identical merge lists.  Compiled with ``-ffp-contract=off`` so no
FMA contraction can diverge from NumPy's elementwise arithmetic.
"""

import numpy as np

from libc.math cimport INFINITY

METHOD_CODES = {"ward": 0, "average": 1, "complete": 2, "single": 3}


cdef void _recompute_nn(double[:, ::1] D, unsigned char[::1] alive,
                        long long[::1] labels, long long[::1] nn_slot,
                        double[::1] nn_dist, Py_ssize_t s) noexcept:
    cdef Py_ssize_t n = D.shape[0]
    cdef Py_ssize_t j, best = -1
    cdef double d, best_d = INFINITY
    cdef long long best_lab = 0
    for j in range(n):
        if j == s or not alive[j]:
            continue
        d = D[s, j]
        if best < 0 or d < best_d or (d == best_d and labels[j] < best_lab):
            best = j
            best_d = d
            best_lab = labels[j]
    nn_slot[s] = best
    nn_dist[s] = best_d


def linkage_merges(double[:, ::1] D, str method):
    cdef int code = METHOD_CODES[method]
    cdef Py_ssize_t n = D.shape[0]
    if n == 1:
        return []

    labels_arr = np.arange(n, dtype=np.int64)
    sizes_arr = np.ones(n, dtype=np.float64)
    alive_arr = np.ones(n, dtype=np.uint8)
    nn_slot_arr = np.empty(n, dtype=np.int64)
    nn_dist_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] sizes = sizes_arr
    cdef unsigned char[::1] alive = alive_arr
    cdef long long[::1] nn_slot = nn_slot_arr
    cdef double[::1] nn_dist = nn_dist_arr

    cdef Py_ssize_t s, step, i, x, a, b
    cdef double d, dab, sa, sb, sx, dax, dbx, new, best_d
    cdef long long la, lb, pmin, pmax, best_pmin, best_pmax, left, right

    for s in range(n):
        _recompute_nn(D, alive, labels, nn_slot, nn_dist, s)

    merges = []
    for step in range(n - 1):
        # global pick: smallest (distance, pair-min label, pair-max label)
        a = -1
        best_d = INFINITY
        best_pmin = 0
        best_pmax = 0
        for i in range(n):
            if not alive[i]:
                continue
            d = nn_dist[i]
            la = labels[i]
            lb = labels[nn_slot[i]]
            if la < lb:
                pmin = la
                pmax = lb
            else:
                pmin = lb
                pmax = la
            if a < 0 or d < best_d or (d == best_d and
                    (pmin < best_pmin or (pmin == best_pmin and pmax < best_pmax))):
                a = i
                best_d = d
                best_pmin = pmin
                best_pmax = pmax
        b = nn_slot[a]

        dab = D[a, b]
        sa = sizes[a]
        sb = sizes[b]
        left = labels[a] if labels[a] < labels[b] else labels[b]
        right = labels[b] if labels[a] < labels[b] else labels[a]
        merges.append((int(left), int(right), dab, int(sa + sb)))

        # Lance-Williams update of the surviving slot `a`
        for x in range(n):
            if not alive[x] or x == a or x == b:
                continue
            dax = D[a, x]
            dbx = D[b, x]
            if code == 0:
                sx = sizes[x]
                new = ((sa + sx) * dax + (sb + sx) * dbx - sx * dab) / ((sa + sb) + sx)
            elif code == 1:
                new = (sa * dax + sb * dbx) / (sa + sb)
            elif code == 2:
                new = dax if dax > dbx else dbx
            else:
                new = dax if dax < dbx else dbx
            D[a, x] = new
            D[x, a] = new

        alive[b] = 0
        labels[a] = n + step
        sizes[a] = sa + sb
        if step == n - 2:
            break
        # caches whose partner slot was merged are stale; `a` always is,
        # since its cached partner was `b`
        for x in range(n):
            if alive[x] and (nn_slot[x] == a or nn_slot[x] == b):
                _recompute_nn(D, alive, labels, nn_slot, nn_dist, x)
    return merges
