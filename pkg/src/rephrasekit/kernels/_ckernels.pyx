# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused LSTM gate activations and the LCS table.

Mirrors the signatures of ``rephrasekit.kernels.numpy_backend``; the
package chooses between the two at import time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

ctypedef fused floating:
    float
    double


cdef inline floating _sigmoid(floating x) noexcept nogil:
    return <floating>(1.0 / (1.0 + exp(-<double>x)))


def lstm_gates_forward(floating[:, ::1] pre, floating[:, ::1] c_prev):
    """Apply LSTM gate activations to preactivations laid out [i|f|g|o].

    Returns (h, c, gates) where gates holds the activated i, f, g, o in
    the same [i|f|g|o] layout, kept for the backward pass.
    """
    cdef Py_ssize_t B = pre.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    if pre.shape[1] != 4 * H:
        raise ValueError(f"pre has {pre.shape[1]} columns, expected {4 * H}")
    dtype = np.float32 if floating is float else np.float64
    h_arr = np.empty((B, H), dtype=dtype)
    c_arr = np.empty((B, H), dtype=dtype)
    g_arr = np.empty((B, 4 * H), dtype=dtype)
    cdef floating[:, ::1] h = h_arr
    cdef floating[:, ::1] c = c_arr
    cdef floating[:, ::1] gates = g_arr
    cdef Py_ssize_t b, k
    cdef floating i, f, g, o, cc
    with nogil:
        for b in range(B):
            for k in range(H):
                i = _sigmoid(pre[b, k])
                f = _sigmoid(pre[b, H + k])
                g = <floating>tanh(<double>pre[b, 2 * H + k])
                o = _sigmoid(pre[b, 3 * H + k])
                cc = f * c_prev[b, k] + i * g
                gates[b, k] = i
                gates[b, H + k] = f
                gates[b, 2 * H + k] = g
                gates[b, 3 * H + k] = o
                c[b, k] = cc
                h[b, k] = o * <floating>tanh(<double>cc)
    return h_arr, c_arr, g_arr


def lstm_gates_backward(
    floating[:, ::1] dh,
    floating[:, ::1] dc_out,
    floating[:, ::1] gates,
    floating[:, ::1] c_prev,
    floating[:, ::1] c,
):
    """Backward of ``lstm_gates_forward``: returns (dpre, dc_prev)."""
    cdef Py_ssize_t B = dh.shape[0]
    cdef Py_ssize_t H = dh.shape[1]
    dtype = np.float32 if floating is float else np.float64
    dpre_arr = np.empty((B, 4 * H), dtype=dtype)
    dcp_arr = np.empty((B, H), dtype=dtype)
    cdef floating[:, ::1] dpre = dpre_arr
    cdef floating[:, ::1] dc_prev = dcp_arr
    cdef Py_ssize_t b, k
    cdef floating i, f, g, o, tc, dc, di, df, dg, do
    with nogil:
        for b in range(B):
            for k in range(H):
                i = gates[b, k]
                f = gates[b, H + k]
                g = gates[b, 2 * H + k]
                o = gates[b, 3 * H + k]
                tc = <floating>tanh(<double>c[b, k])
                do = dh[b, k] * tc
                dc = dc_out[b, k] + dh[b, k] * o * (1 - tc * tc)
                di = dc * g
                df = dc * c_prev[b, k]
                dg = dc * i
                dc_prev[b, k] = dc * f
                dpre[b, k] = di * i * (1 - i)
                dpre[b, H + k] = df * f * (1 - f)
                dpre[b, 2 * H + k] = dg * (1 - g * g)
                dpre[b, 3 * H + k] = do * o * (1 - o)
    return dpre_arr, dcp_arr


def lcs_kept(cnp.int64_t[::1] a, cnp.int64_t[::1] b):
    """Kept index pairs of a longest common subsequence of ``a`` and ``b``.

    Ties are broken toward the lexicographically earliest source indices,
    then earliest target indices. Returns an (k, 2) int64 array.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    table_arr = np.zeros((n + 1, m + 1), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] L = table_arr
    cdef Py_ssize_t i, j
    cdef cnp.int32_t best
    with nogil:
        for i in range(n - 1, -1, -1):
            for j in range(m - 1, -1, -1):
                best = L[i + 1, j] if L[i + 1, j] > L[i, j + 1] else L[i, j + 1]
                if a[i] == b[j] and 1 + L[i + 1, j + 1] > best:
                    best = 1 + L[i + 1, j + 1]
                L[i, j] = best
    kept_arr = np.empty((L[0, 0], 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] kept = kept_arr
    cdef Py_ssize_t k = 0
    cdef Py_ssize_t i2, j2, mi, mj
    cdef cnp.int32_t need
    i = 0
    j = 0
    with nogil:
        while i < n and j < m and L[i, j] > 0:
            # next kept pair: smallest source index, then smallest target
            # index, among matches preserving the remaining LCS budget
            need = L[i, j]
            mi = -1
            mj = -1
            for i2 in range(i, n):
                if L[i2, j] != need:
                    break
                for j2 in range(j, m):
                    if L[i2, j2] != need:
                        break
                    if a[i2] == b[j2] and 1 + L[i2 + 1, j2 + 1] == need:
                        mi = i2
                        mj = j2
                        break
                if mi >= 0:
                    break
            kept[k, 0] = mi
            kept[k, 1] = mj
            k += 1
            i = mi + 1
            j = mj + 1
    return kept_arr
