# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics match ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    RESET_SUBTRACT = 1
    REFRACTORY_DOUBLE = 1
    REFRACTORY_RAISED = 2


cdef inline double _after_spike(double pre, double v_rest, double thresh_now,
                                double v_thresh, int reset_mode, int refr_mode) nogil:
    if refr_mode == REFRACTORY_DOUBLE:
        return pre - 2.0 * v_thresh
    if reset_mode == RESET_SUBTRACT:
        return pre - thresh_now
    return v_rest


def lif_euler(injection, double beta, double v0, double v_rest, double v_thresh,
              int reset_mode, int refr_mode, int refr_steps, double refr_amount):
    cdef double[:, ::1] inj = np.ascontiguousarray(injection, dtype=np.float64)
    cdef Py_ssize_t n_t = inj.shape[0], n = inj.shape[1], k, i
    pre_arr = np.empty((n_t, n))
    post_arr = np.empty((n_t, n))
    spk_arr = np.zeros((n_t, n), dtype=np.uint8)
    cdef double[:, ::1] pre = pre_arr
    cdef double[:, ::1] post = post_arr
    cdef unsigned char[:, ::1] spikes = spk_arr
    cdef double v, thresh
    cdef long raised_left
    with nogil:
        for i in range(n):
            v = v0
            raised_left = 0
            for k in range(n_t):
                v = beta * v + inj[k, i]
                thresh = v_thresh + refr_amount if raised_left > 0 else v_thresh
                pre[k, i] = v
                if raised_left > 0:
                    raised_left -= 1
                if v >= thresh:
                    spikes[k, i] = 1
                    v = _after_spike(v, v_rest, thresh, v_thresh, reset_mode, refr_mode)
                    if refr_mode == REFRACTORY_RAISED:
                        raised_left = refr_steps
                post[k, i] = v
    return pre_arr, post_arr, spk_arr


def lif_integral(current, double dt, double tau, double capacitance, double v_rest,
                 double v_thresh, int reset_mode, int refr_mode, int refr_steps,
                 double refr_amount):
    cdef double[:, ::1] cur = np.ascontiguousarray(current, dtype=np.float64)
    cdef Py_ssize_t n_t = cur.shape[0], n = cur.shape[1], k, i, m, j0, length
    decay_arr = np.exp(-dt * np.arange(n_t + 1) / tau)
    cdef double[::1] decay = decay_arr
    pre_arr = np.empty((n_t, n))
    post_arr = np.empty((n_t, n))
    spk_arr = np.zeros((n_t, n), dtype=np.uint8)
    cdef double[:, ::1] pre = pre_arr
    cdef double[:, ::1] post = post_arr
    cdef unsigned char[:, ::1] spikes = spk_arr
    cdef double v, v_start, thresh, acc
    cdef long raised_left
    with nogil:
        for i in range(n):
            j0 = 0
            v_start = v_rest
            raised_left = 0
            for k in range(n_t):
                length = k - j0
                acc = 0.0
                if length > 0:
                    acc = 0.5 * (cur[k, i] + decay[length] * cur[j0, i])
                    for m in range(1, length):
                        acc = acc + decay[m] * cur[k - m, i]
                v = v_start * decay[length] + dt * acc / capacitance
                thresh = v_thresh + refr_amount if raised_left > 0 else v_thresh
                pre[k, i] = v
                if raised_left > 0:
                    raised_left -= 1
                if v >= thresh:
                    spikes[k, i] = 1
                    v = _after_spike(v, v_rest, thresh, v_thresh, reset_mode, refr_mode)
                    j0 = k
                    v_start = v
                    if refr_mode == REFRACTORY_RAISED:
                        raised_left = refr_steps
                post[k, i] = v
    return pre_arr, post_arr, spk_arr


def stdp_pairs(pre, post, double a_pre, double a_post, double tau, double dt):
    cdef unsigned char[:, ::1] pre_s = np.ascontiguousarray(pre, dtype=np.uint8)
    cdef unsigned char[:, ::1] post_s = np.ascontiguousarray(post, dtype=np.uint8)
    cdef Py_ssize_t n_t = pre_s.shape[0], n_pre = pre_s.shape[1], n_post = post_s.shape[1]
    cdef Py_ssize_t i, j, p, q, k
    out_arr = np.zeros((n_pre, n_post))
    cdef double[:, ::1] out = out_arr
    lags = np.arange(-(n_t - 1), n_t) * dt
    table_arr = np.where(lags >= 0, a_pre * np.exp(-lags / tau), -a_post * np.exp(lags / tau))
    cdef double[::1] table = np.ascontiguousarray(table_arr)
    # post spike times per neuron, stored CSR style
    post_t = np.ascontiguousarray(post_s).T.nonzero()
    cdef Py_ssize_t[::1] times = np.ascontiguousarray(post_t[1], dtype=np.intp)
    cdef Py_ssize_t[::1] start = np.searchsorted(post_t[0], np.arange(n_post + 1)).astype(np.intp)
    trace_arr = np.empty(n_t)
    cdef double[::1] trace = trace_arr
    cdef double acc
    with nogil:
        for i in range(n_pre):
            # trace[q] = sum over pre spikes p of dW((q - p) dt)
            for q in range(n_t):
                trace[q] = 0.0
            for p in range(n_t):
                if pre_s[p, i] != 0:
                    for q in range(n_t):
                        trace[q] = trace[q] + table[q - p + n_t - 1]
            for j in range(n_post):
                acc = 0.0
                for k in range(start[j], start[j + 1]):
                    acc = acc + trace[times[k]]
                out[i, j] = acc
    return out_arr


def tridiag_solve(lower, diag, upper, rhs):
    cdef double[::1] a = np.ascontiguousarray(lower, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef double[::1] c_in = np.ascontiguousarray(upper, dtype=np.float64)
    cdef double[::1] r = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0], i
    c_arr = np.empty(n)
    d_arr = np.empty(n)
    x_arr = np.empty(n)
    cdef double[::1] c = c_arr
    cdef double[::1] d = d_arr
    cdef double[::1] x = x_arr
    cdef double denom = b[0]
    if denom == 0.0:
        raise ZeroDivisionError("zero pivot in tridiagonal solve")
    c[0] = c_in[0] / denom if n > 1 else 0.0
    d[0] = r[0] / denom
    for i in range(1, n):
        denom = b[i] - a[i] * c[i - 1]
        if denom == 0.0:
            raise ZeroDivisionError("zero pivot in tridiagonal solve")
        c[i] = c_in[i] / denom if i < n - 1 else 0.0
        d[i] = (r[i] - a[i] * d[i - 1]) / denom
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x_arr
