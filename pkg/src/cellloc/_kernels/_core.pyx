"""Compiled kernels for the feature, classifier, and filter inner loops."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log

cnp.import_array()


def moment_matrix(const double[:, ::1] x, Py_ssize_t l):
    cdef Py_ssize_t t_len = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    out_arr = np.empty((t_len, 2 * n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, j, s, tau, w
    cdef double acc, mean, dev
    for t in range(t_len):
        s = t - l + 1
        if s < 0:
            s = 0
        w = t - s + 1
        for j in range(n):
            acc = 0.0
            for tau in range(s, t + 1):
                acc += x[tau, j]
            mean = acc / w
            out[t, 2 * j] = mean
            if w > 1:
                acc = 0.0
                for tau in range(s, t + 1):
                    dev = x[tau, j] - mean
                    acc += dev * dev
                out[t, 2 * j + 1] = acc / (w - 1)
            else:
                out[t, 2 * j + 1] = 0.0
    return out_arr


def knn_predict(const double[:, ::1] train_x, const cnp.int64_t[::1] train_y,
                const double[:, ::1] query_x, Py_ssize_t k):
    cdef Py_ssize_t n_train = train_x.shape[0]
    cdef Py_ssize_t dim = train_x.shape[1]
    cdef Py_ssize_t n_query = query_x.shape[0]
    cdef Py_ssize_t n_labels = 0
    cdef Py_ssize_t i, j, q, p, pos, filled
    for i in range(n_train):
        if train_y[i] + 1 > n_labels:
            n_labels = train_y[i] + 1

    out_arr = np.empty(n_query, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    best_d_arr = np.empty(k, dtype=np.float64)
    best_i_arr = np.empty(k, dtype=np.int64)
    votes_arr = np.empty(n_labels, dtype=np.int64)
    cdef double[::1] best_d = best_d_arr
    cdef cnp.int64_t[::1] best_i = best_i_arr
    cdef cnp.int64_t[::1] votes = votes_arr
    cdef double d, diff, worst
    cdef cnp.int64_t best_label, best_count

    for q in range(n_query):
        filled = 0
        worst = INFINITY
        for j in range(n_train):
            d = 0.0
            for p in range(dim):
                diff = query_x[q, p] - train_x[j, p]
                d += diff * diff
                if filled == k and d > worst:
                    break
            if filled == k and d >= worst:
                # equal distance keeps the earlier (smaller) training index
                continue
            # insert at the sorted position for the (distance, index) order
            pos = filled if filled < k else k - 1
            while pos > 0 and best_d[pos - 1] > d:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d
            best_i[pos] = j
            if filled < k:
                filled += 1
            if filled == k:
                worst = best_d[k - 1]
        for p in range(n_labels):
            votes[p] = 0
        for p in range(filled):
            votes[train_y[best_i[p]]] += 1
        best_label = 0
        best_count = votes[0]
        for p in range(1, n_labels):
            if votes[p] > best_count:
                best_count = votes[p]
                best_label = p
        out[q] = best_label
    return out_arr


def median_filter(const cnp.int64_t[::1] y, Py_ssize_t m):
    cdef Py_ssize_t t_len = y.shape[0]
    out_arr = np.empty(t_len, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    win_arr = np.empty(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] win = win_arr
    cdef Py_ssize_t t, s, w, i, pos
    cdef cnp.int64_t v
    for t in range(t_len):
        s = t - m
        if s < 0:
            s = 0
        w = t - s + 1
        for i in range(w):
            v = y[s + i]
            pos = i
            while pos > 0 and win[pos - 1] > v:
                win[pos] = win[pos - 1]
                pos -= 1
            win[pos] = v
        out[t] = win[(w - 1) // 2]
    return out_arr


def hmm_forward_filter(const cnp.int64_t[::1] y, const double[:, ::1] a,
                       const double[:, ::1] b, const double[::1] pi0):
    cdef Py_ssize_t t_len = y.shape[0]
    cdef Py_ssize_t n = a.shape[0]
    pis_arr = np.empty((t_len, n), dtype=np.float64)
    z_arr = np.empty(t_len, dtype=np.int64)
    cdef double[:, ::1] pis = pis_arr
    cdef cnp.int64_t[::1] z = z_arr
    prior_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] prior = prior_arr
    cdef Py_ssize_t t, i, j, arg
    cdef double s, p, best
    for t in range(t_len):
        if t == 0:
            for j in range(n):
                prior[j] = pi0[j]
        else:
            for j in range(n):
                s = 0.0
                for i in range(n):
                    s += pis[t - 1, i] * a[i, j]
                prior[j] = s
        s = 0.0
        for j in range(n):
            p = prior[j] * b[j, y[t]]
            pis[t, j] = p
            s += p
        if s <= 0.0:
            raise ValueError("observation impossible under model")
        best = -1.0
        arg = 0
        for j in range(n):
            pis[t, j] /= s
            if pis[t, j] > best:
                best = pis[t, j]
                arg = j
        z[t] = arg
    return z_arr, pis_arr


def viterbi_path(const cnp.int64_t[::1] y, const double[:, ::1] a,
                 const double[:, ::1] b, const double[::1] pi0):
    cdef Py_ssize_t t_len = y.shape[0]
    cdef Py_ssize_t n = a.shape[0]
    la_arr = np.full((n, n), -np.inf)
    lb_arr = np.full((n, n), -np.inf)
    lpi_arr = np.full(n, -np.inf)
    cdef Py_ssize_t i, j, t, arg
    for i in range(n):
        if pi0[i] > 0.0:
            lpi_arr[i] = log(pi0[i])
        for j in range(n):
            if a[i, j] > 0.0:
                la_arr[i, j] = log(a[i, j])
            if b[i, j] > 0.0:
                lb_arr[i, j] = log(b[i, j])
    cdef double[:, ::1] la = la_arr
    cdef double[:, ::1] lb = lb_arr
    cdef double[::1] lpi = lpi_arr

    score_arr = np.empty(n, dtype=np.float64)
    next_arr = np.empty(n, dtype=np.float64)
    back_arr = np.empty((t_len, n), dtype=np.int64)
    path_arr = np.empty(t_len, dtype=np.int64)
    cdef double[::1] score = score_arr
    cdef double[::1] nxt = next_arr
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef cnp.int64_t[::1] path = path_arr
    cdef double best, cand

    for j in range(n):
        score[j] = lpi[j] + lb[j, y[0]]
    for t in range(1, t_len):
        for j in range(n):
            best = -INFINITY
            arg = 0
            for i in range(n):
                cand = score[i] + la[i, j]
                if cand > best:
                    best = cand
                    arg = i
            nxt[j] = best + lb[j, y[t]]
            back[t, j] = arg
        for j in range(n):
            score[j] = nxt[j]
    best = -INFINITY
    arg = 0
    for j in range(n):
        if score[j] > best:
            best = score[j]
            arg = j
    if best == -INFINITY:
        raise ValueError("observation impossible under model")
    path[t_len - 1] = arg
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr
