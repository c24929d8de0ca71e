"""Pure-numpy fallback for the hot kernels.

Same contracts as the compiled backend in ``_core.pyx``; callers validate
shapes and value ranges, these functions only compute.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_QUERY_CHUNK = 256


def moment_matrix(x, l):
    """Trailing-window mean and unbiased variance per column.

    x is (T, N); the result is (T, 2N) with columns [mean_0, var_0, mean_1, ...].
    Rows before the window fills use the shrinking window of all samples so
    far; a single-sample window has variance 0.
    """
    x = np.asarray(x, dtype=np.float64)
    t_len, n = x.shape
    out = np.empty((t_len, 2 * n), dtype=np.float64)
    for i in range(min(l - 1, t_len)):
        w = x[: i + 1]
        mean = w.mean(axis=0)
        out[i, 0::2] = mean
        out[i, 1::2] = ((w - mean) ** 2).sum(axis=0) / i if i > 0 else 0.0
    if t_len >= l:
        win = sliding_window_view(x, l, axis=0)  # (T-l+1, N, l)
        mean = win.mean(axis=2)
        out[l - 1 :, 0::2] = mean
        if l > 1:
            out[l - 1 :, 1::2] = ((win - mean[..., None]) ** 2).sum(axis=2) / (l - 1)
        else:
            out[l - 1 :, 1::2] = 0.0
    return out


def knn_predict(train_x, train_y, query_x, k):
    """Majority vote over the k nearest training points (squared Euclidean).

    Neighbours are ranked by (distance, training index); vote ties resolve to
    the smallest label. k must already be clamped to the training size.
    """
    n_labels = int(train_y.max()) + 1
    n_train = train_x.shape[0]
    sq_train = np.einsum("ij,ij->i", train_x, train_x)
    out = np.empty(query_x.shape[0], dtype=np.int64)
    for start in range(0, query_x.shape[0], _QUERY_CHUNK):
        q = query_x[start : start + _QUERY_CHUNK]
        d = np.einsum("ij,ij->i", q, q)[:, None] + sq_train[None, :] - 2.0 * (q @ train_x.T)
        rows = d.shape[0]
        if k < n_train:
            nearest = np.argpartition(d, k - 1, axis=1)[:, :k]
        else:
            nearest = np.broadcast_to(np.arange(n_train), (rows, n_train))
        worst = np.take_along_axis(d, nearest, axis=1).max(axis=1)
        # The partition picks arbitrarily among distances equal to the kth
        # smallest; redo those rows so ties admit the smallest training index.
        for r in np.flatnonzero((d <= worst[:, None]).sum(axis=1) > k):
            row = d[r]
            below = np.flatnonzero(row < worst[r])
            tied = np.flatnonzero(row == worst[r])
            nearest[r] = np.concatenate([below, tied])[:k]
        votes = np.zeros((rows, n_labels), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(rows), k), train_y[nearest].ravel()), 1)
        out[start : start + rows] = votes.argmax(axis=1)
    return out


def median_filter(y, m):
    """Lower median over the trailing window of m past values plus the current one."""
    t_len = y.shape[0]
    out = np.empty(t_len, dtype=np.int64)
    for i in range(t_len):
        w = np.sort(y[max(0, i - m) : i + 1])
        out[i] = w[(w.shape[0] - 1) // 2]
    return out


def hmm_forward_filter(y, a, b, pi0):
    """Causal forward filtering with per-step renormalization.

    Returns (z, pis): the argmax state per step (ties to the smallest index)
    and the filtered state probabilities after each observation.
    """
    t_len = y.shape[0]
    n = a.shape[0]
    pis = np.empty((t_len, n), dtype=np.float64)
    z = np.empty(t_len, dtype=np.int64)
    pi = pi0
    for t in range(t_len):
        prior = pi if t == 0 else pi @ a
        p = prior * b[:, y[t]]
        s = p.sum()
        if s <= 0.0:
            raise ValueError("observation impossible under model")
        pi = p / s
        pis[t] = pi
        z[t] = int(pi.argmax())
    return z, pis


def viterbi_path(y, a, b, pi0):
    """Most probable state sequence, log-domain; ties go to the smallest index."""
    with np.errstate(divide="ignore"):
        la = np.log(a)
        lb = np.log(b)
        lpi = np.log(pi0)
    t_len = y.shape[0]
    n = a.shape[0]
    back = np.empty((t_len, n), dtype=np.int64)
    score = lpi + lb[:, y[0]]
    for t in range(1, t_len):
        cand = score[:, None] + la  # (from, to)
        prev = cand.argmax(axis=0)  # first max = smallest predecessor
        back[t] = prev
        score = cand[prev, np.arange(n)] + lb[:, y[t]]
    last = int(score.argmax())
    if not np.isfinite(score[last]):
        raise ValueError("observation impossible under model")
    path = np.empty(t_len, dtype=np.int64)
    path[-1] = last
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path
