# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled histogram tree builder; see _kernel_py.py for the reference."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t, int32_t
from libc.math cimport INFINITY, fabs
from libc.stdlib cimport malloc, free
from libc.string cimport memset

cnp.import_array()

cdef enum:
    GINI = 0
    MSE = 1

cdef double GAIN_EPS = 1e-12


cdef inline uint64_t sm_next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline Py_ssize_t sm_below(uint64_t* state, Py_ssize_t k) noexcept nogil:
    return <Py_ssize_t>(sm_next(state) % <uint64_t>k)


cdef inline double proxy(const double* s, int m, int criterion, double* w_out) noexcept nogil:
    cdef double w, q
    cdef int j
    if criterion == GINI:
        w = s[0]
        q = s[0] * s[0]
        for j in range(1, m):
            w = w + s[j]
            q = q + s[j] * s[j]
    else:
        w = s[1]
        q = s[0] * s[0]
    w_out[0] = w
    if w > 0:
        return q / w
    return 0.0


def build_tree(Xb_in, nbins_in, Y_in, cnt_in, rows_in, int criterion, long max_depth,
               double min_leaf, Py_ssize_t max_features, bint extra, seed):
    cdef const uint8_t[:, ::1] Xb = np.ascontiguousarray(Xb_in, dtype=np.uint8)
    cdef const cnp.int64_t[::1] nbins = np.ascontiguousarray(nbins_in, dtype=np.int64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(Y_in, dtype=np.float64)
    cdef const double[::1] cnt = np.ascontiguousarray(cnt_in, dtype=np.float64)
    rows_arr = np.array(rows_in, dtype=np.intp, copy=True)
    cdef Py_ssize_t[::1] rows = rows_arr

    cdef Py_ssize_t n_all = Xb.shape[0]
    cdef Py_ssize_t n_feat = Xb.shape[1]
    cdef int m = <int>Y.shape[1]
    cdef Py_ssize_t k = rows.shape[0]
    if max_features > n_feat:
        max_features = n_feat
    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)

    cdef Py_ssize_t cap = max(2 * k - 1, 1)
    feature_a = np.full(cap, -1, dtype=np.int32)
    thr_a = np.full(cap, -1, dtype=np.int32)
    left_a = np.full(cap, -1, dtype=np.int32)
    right_a = np.full(cap, -1, dtype=np.int32)
    stats_a = np.zeros((cap, m), dtype=np.float64)
    count_a = np.zeros(cap, dtype=np.float64)
    imp_a = np.zeros(n_feat, dtype=np.float64)
    leaf_a = np.full(n_all, -1, dtype=np.int32)
    cdef int32_t[::1] feature = feature_a
    cdef int32_t[::1] thr = thr_a
    cdef int32_t[::1] left = left_a
    cdef int32_t[::1] right = right_a
    cdef double[:, ::1] stats = stats_a
    cdef double[::1] count = count_a
    cdef double[::1] importance = imp_a
    cdef int32_t[::1] leaf_of_row = leaf_a

    cdef Py_ssize_t max_nb = 1
    cdef Py_ssize_t f
    for f in range(n_feat):
        if nbins[f] > max_nb:
            max_nb = nbins[f]

    cdef double* H = <double*>malloc(max_nb * m * sizeof(double))
    cdef double* hc = <double*>malloc(max_nb * sizeof(double))
    cdef double* L = <double*>malloc(m * sizeof(double))
    cdef double* R = <double*>malloc(m * sizeof(double))
    cdef Py_ssize_t* perm = <Py_ssize_t*>malloc(n_feat * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp = <Py_ssize_t*>malloc(max(k, 1) * sizeof(Py_ssize_t))
    # explicit DFS stack: node, start, end, depth
    cdef Py_ssize_t* st_node = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t* st_start = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t* st_end = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef long* st_depth = <long*>malloc(cap * sizeof(long))

    cdef Py_ssize_t n_nodes = 1, sp = 0
    cdef Py_ssize_t node, start, end, i, j, r, b, t, lo, hi, nb, n_cand, nl, fi
    cdef Py_ssize_t best_f, best_t, t_from, t_to, li, ri, ix
    cdef long depth
    cdef int c, nz
    cdef double s, cn, pp, wl, wr, pl, pr, gain, best_gain, cl, ctot
    cdef bint splittable

    try:
        with nogil:
            # root
            for c in range(m):
                s = 0.0
                for i in range(k):
                    s = s + Y[rows[i], c]
                stats[0, c] = s
            s = 0.0
            for i in range(k):
                s = s + cnt[rows[i]]
            count[0] = s
            st_node[0] = 0
            st_start[0] = 0
            st_end[0] = k
            st_depth[0] = 0
            sp = 1

            while sp > 0:
                sp -= 1
                node = st_node[sp]
                start = st_start[sp]
                end = st_end[sp]
                depth = st_depth[sp]
                ctot = count[node]
                splittable = depth < max_depth and ctot >= 2 * min_leaf
                if splittable and criterion == GINI:
                    nz = 0
                    for c in range(m):
                        if stats[node, c] > 0:
                            nz += 1
                    splittable = nz > 1
                best_gain = -INFINITY
                best_f = -1
                best_t = -1
                if splittable:
                    pp = proxy(&stats[node, 0], m, criterion, &wl)
                    for i in range(n_feat):
                        perm[i] = i
                    if max_features < n_feat:
                        for i in range(max_features):
                            j = i + sm_below(&state, n_feat - i)
                            ix = perm[i]
                            perm[i] = perm[j]
                            perm[j] = ix
                        n_cand = max_features
                    else:
                        n_cand = n_feat
                    for fi in range(n_cand):
                        f = perm[fi]
                        nb = nbins[f]
                        memset(hc, 0, nb * sizeof(double))
                        memset(H, 0, nb * m * sizeof(double))
                        for i in range(start, end):
                            r = rows[i]
                            b = Xb[r, f]
                            hc[b] = hc[b] + cnt[r]
                            for c in range(m):
                                H[b * m + c] = H[b * m + c] + Y[r, c]
                        lo = -1
                        hi = -1
                        for b in range(nb):
                            if hc[b] > 0:
                                if lo < 0:
                                    lo = b
                                hi = b
                        if lo == hi:
                            continue
                        if extra:
                            t_from = lo + sm_below(&state, hi - lo)
                            t_to = t_from + 1
                        else:
                            t_from = lo
                            t_to = hi
                        # cumulative sums up to t_from - 1
                        for c in range(m):
                            L[c] = 0.0
                        cl = 0.0
                        for b in range(0, t_from):
                            for c in range(m):
                                L[c] = L[c] + H[b * m + c]
                            cl = cl + hc[b]
                        for t in range(t_from, t_to):
                            for c in range(m):
                                L[c] = L[c] + H[t * m + c]
                            cl = cl + hc[t]
                            for c in range(m):
                                R[c] = stats[node, c] - L[c]
                            pl = proxy(L, m, criterion, &wl)
                            pr = proxy(R, m, criterion, &wr)
                            gain = pl + pr - pp
                            if cl >= min_leaf and (ctot - cl) >= min_leaf and wl > 0 and wr > 0:
                                if gain > best_gain:
                                    best_gain = gain
                                    best_f = f
                                    best_t = t
                    if best_f < 0 or not (best_gain > GAIN_EPS * (1.0 + fabs(pp))):
                        splittable = False
                if not splittable:
                    for i in range(start, end):
                        leaf_of_row[rows[i]] = <int32_t>node
                    continue

                # stable partition of rows[start:end]
                nl = 0
                for i in range(start, end):
                    if Xb[rows[i], best_f] <= best_t:
                        tmp[nl] = rows[i]
                        nl += 1
                j = nl
                for i in range(start, end):
                    if Xb[rows[i], best_f] > best_t:
                        tmp[j] = rows[i]
                        j += 1
                for i in range(end - start):
                    rows[start + i] = tmp[i]

                importance[best_f] = importance[best_f] + best_gain
                feature[node] = <int32_t>best_f
                thr[node] = <int32_t>best_t
                li = n_nodes
                ri = n_nodes + 1
                n_nodes += 2
                left[node] = <int32_t>li
                right[node] = <int32_t>ri
                for c in range(m):
                    s = 0.0
                    for i in range(start, start + nl):
                        s = s + Y[rows[i], c]
                    stats[li, c] = s
                    s = 0.0
                    for i in range(start + nl, end):
                        s = s + Y[rows[i], c]
                    stats[ri, c] = s
                s = 0.0
                for i in range(start, start + nl):
                    s = s + cnt[rows[i]]
                count[li] = s
                s = 0.0
                for i in range(start + nl, end):
                    s = s + cnt[rows[i]]
                count[ri] = s

                st_node[sp] = ri
                st_start[sp] = start + nl
                st_end[sp] = end
                st_depth[sp] = depth + 1
                sp += 1
                st_node[sp] = li
                st_start[sp] = start
                st_end[sp] = start + nl
                st_depth[sp] = depth + 1
                sp += 1
    finally:
        free(H)
        free(hc)
        free(L)
        free(R)
        free(perm)
        free(tmp)
        free(st_node)
        free(st_start)
        free(st_end)
        free(st_depth)

    return {
        "feature": feature_a[:n_nodes].copy(),
        "threshold_bin": thr_a[:n_nodes].copy(),
        "left": left_a[:n_nodes].copy(),
        "right": right_a[:n_nodes].copy(),
        "stats": stats_a[:n_nodes].copy(),
        "count": count_a[:n_nodes].copy(),
        "importance": imp_a,
        "leaf_of_row": leaf_a,
    }
