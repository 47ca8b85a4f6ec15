"""Pure-Python/NumPy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
Every function takes and returns plain NumPy arrays so the two backends are
interchangeable behind :mod:`spikeonet.kernels`.
"""

import numpy as np

# reset / refractory codes shared with the Cython module
RESET_TO_REST = 0
RESET_SUBTRACT = 1
REFRACTORY_NONE = 0
REFRACTORY_DOUBLE = 1
REFRACTORY_RAISED = 2


def _after_spike(pre, v_rest, thresh_now, v_thresh, reset_mode, refr_mode):
    if refr_mode == REFRACTORY_DOUBLE:
        return pre - 2.0 * v_thresh
    if reset_mode == RESET_SUBTRACT:
        return pre - thresh_now
    return v_rest


def lif_euler(injection, beta, v0, v_rest, v_thresh, reset_mode,
              refr_mode, refr_steps, refr_amount):
    """Forward-Euler LIF over a (time, neuron) injection matrix.

    Row ``k`` of the result is the membrane state after adding ``injection[k]``.
    Returns ``(pre_reset, post_reset, spikes)``.
    """
    injection = np.ascontiguousarray(injection, dtype=np.float64)
    n_t, n = injection.shape
    pre = np.empty((n_t, n))
    post = np.empty((n_t, n))
    spikes = np.zeros((n_t, n), dtype=np.uint8)
    v = np.full(n, float(v0))
    raised_left = np.zeros(n, dtype=np.int64)
    for k in range(n_t):
        v = beta * v + injection[k]
        thresh = np.where(raised_left > 0, v_thresh + refr_amount, v_thresh)
        fired = v >= thresh
        pre[k] = v
        spikes[k] = fired
        if fired.any():
            v = v.copy()
            v[fired] = _after_spike(v[fired], v_rest, thresh[fired], v_thresh,
                                    reset_mode, refr_mode)
        if refr_mode == REFRACTORY_RAISED:
            raised_left = np.maximum(raised_left - 1, 0)
            raised_left[fired] = refr_steps
        post[k] = v
    return pre, post, spikes


def lif_integral(current, dt, tau, capacitance, v_rest, v_thresh, reset_mode,
                 refr_mode, refr_steps, refr_amount):
    """LIF from the integral solution, evaluated by composite trapezoid.

    Each neuron keeps a segment start ``j0`` (the last reset) and a start
    voltage.  Row ``k`` holds ``V(k*dt)``; the convolution integral runs over
    the stored current samples ``j0..k``.
    """
    current = np.ascontiguousarray(current, dtype=np.float64)
    n_t, n = current.shape
    decay = np.exp(-dt * np.arange(n_t + 1) / tau)
    pre = np.empty((n_t, n))
    post = np.empty((n_t, n))
    spikes = np.zeros((n_t, n), dtype=np.uint8)
    for i in range(n):
        j0 = 0
        v_start = v_rest
        raised_left = 0
        col = current[:, i]
        for k in range(n_t):
            length = k - j0
            if length == 0:
                integral = 0.0
            else:
                # samples I[k], I[k-1], ..., I[j0] weighted by e^{-m dt/tau}
                seg = col[j0:k + 1][::-1] * decay[:length + 1]
                integral = dt * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
            v = v_start * decay[length] + integral / capacitance
            thresh = v_thresh + refr_amount if raised_left > 0 else v_thresh
            pre[k, i] = v
            if v >= thresh:
                spikes[k, i] = 1
                v = _after_spike(v, v_rest, thresh, v_thresh, reset_mode, refr_mode)
                j0 = k
                v_start = v
                if refr_mode == REFRACTORY_RAISED:
                    raised_left = refr_steps + 1
            if raised_left > 0:
                raised_left -= 1
            post[k, i] = v
    return pre, post, spikes


def stdp_pairs(pre, post, a_pre, a_post, tau, dt):
    """Summed all-pairs STDP update, shape (n_pre, n_post).

    Uses the Toeplitz form ``pre.T @ K @ post`` with ``K[p, q] = dW((q - p) dt)``.
    """
    pre = np.asarray(pre, dtype=np.float64)
    post = np.asarray(post, dtype=np.float64)
    n_t = pre.shape[0]
    lag = (np.arange(n_t)[None, :] - np.arange(n_t)[:, None]) * dt
    kernel = np.where(lag >= 0, a_pre * np.exp(-lag / tau),
                      -a_post * np.exp(lag / tau))
    return pre.T @ (kernel @ post)


def tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm. ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    c = np.empty(n)
    d = np.empty(n)
    denom = diag[0]
    if denom == 0.0:
        raise ZeroDivisionError("zero pivot in tridiagonal solve")
    c[0] = upper[0] / denom if n > 1 else 0.0
    d[0] = rhs[0] / denom
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        if denom == 0.0:
            raise ZeroDivisionError("zero pivot in tridiagonal solve")
        c[i] = upper[i] / denom if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x
