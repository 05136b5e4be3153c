"""Numpy fallback for the compiled kernels.

Same contracts as ``_ckernels``; used when the extension is unavailable
or when ``REPHRASEKIT_KERNELS=py`` forces it.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_gates_forward(pre, c_prev):
    """Apply LSTM gate activations to preactivations laid out [i|f|g|o]."""
    H = c_prev.shape[1]
    if pre.shape[1] != 4 * H:
        raise ValueError(f"pre has {pre.shape[1]} columns, expected {4 * H}")
    i = _sigmoid(pre[:, :H])
    f = _sigmoid(pre[:, H : 2 * H])
    g = np.tanh(pre[:, 2 * H : 3 * H])
    o = _sigmoid(pre[:, 3 * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    gates = np.concatenate([i, f, g, o], axis=1)
    return h, c, gates


def lstm_gates_backward(dh, dc_out, gates, c_prev, c):
    """Backward of ``lstm_gates_forward``: returns (dpre, dc_prev)."""
    H = dh.shape[1]
    i = gates[:, :H]
    f = gates[:, H : 2 * H]
    g = gates[:, 2 * H : 3 * H]
    o = gates[:, 3 * H :]
    tc = np.tanh(c)
    do = dh * tc
    dc = dc_out + dh * o * (1 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    dpre = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
        axis=1,
    )
    return dpre, dc_prev


def lcs_kept(a, b):
    """Kept index pairs of a longest common subsequence of ``a`` and ``b``.

    Ties broken toward earliest source indices, then earliest target
    indices (same convention as the compiled kernel).
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n, m = len(a), len(b)
    # L[i][j] = LCS length of a[i:], b[j:]
    L = np.zeros((n + 1, m + 1), dtype=np.int32)
    for i in range(n - 1, -1, -1):
        ai = a[i]
        row, nxt = L[i], L[i + 1]
        for j in range(m - 1, -1, -1):
            best = max(nxt[j], row[j + 1])
            if ai == b[j] and 1 + nxt[j + 1] > best:
                best = 1 + nxt[j + 1]
            row[j] = best
    kept = []
    i = j = 0
    while i < n and j < m and L[i, j] > 0:
        # next kept pair: smallest source index, then smallest target
        # index, among matches that preserve the remaining LCS budget
        need = L[i, j]
        mi = mj = -1
        for i2 in range(i, n):
            if L[i2, j] != need:
                break
            for j2 in range(j, m):
                if L[i2, j2] != need:
                    break
                if a[i2] == b[j2] and 1 + L[i2 + 1, j2 + 1] == need:
                    mi, mj = i2, j2
                    break
            if mi >= 0:
                break
        kept.append((mi, mj))
        i, j = mi + 1, mj + 1
    return np.array(kept, dtype=np.int64).reshape(len(kept), 2)
