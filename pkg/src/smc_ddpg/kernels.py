"""Hot loops, compiled with numba when available.

Dense stacks keep their parameters in one flat float64 vector. Layer ``l``
owns a row-major weight block of shape ``(sizes[l], sizes[l+1])`` followed by
its bias. Activations are coded as integers (see ``ACTIVATION_CODES``).
"""
import numpy as np

from ._jit import njit

LINEAR, RELU, TANH = 0, 1, 2
ACTIVATION_CODES = {"linear": LINEAR, "relu": RELU, "tanh": TANH}


@njit
def _activate(z, code):
    if code == RELU:
        return np.maximum(z, 0.0)
    if code == TANH:
        return np.tanh(z)
    return z


@njit
def mlp_forward(flat, sizes, acts, x):
    """Forward pass. Returns every layer's post-activation output side by side
    in one ``(batch, sum(sizes[1:]))`` array; the last ``sizes[-1]`` columns
    are the network output."""
    n_layers = acts.shape[0]
    total = 0
    for l in range(n_layers):
        total += sizes[l + 1]
    out = np.empty((x.shape[0], total))
    h = np.ascontiguousarray(x)
    off = 0
    col = 0
    for l in range(n_layers):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        w = flat[off:off + n_in * n_out].reshape((n_in, n_out))
        off += n_in * n_out
        b = flat[off:off + n_out]
        off += n_out
        h = _activate(h @ w + b, acts[l])
        out[:, col:col + n_out] = h
        col += n_out
    return out


@njit
def mlp_backward(flat, sizes, acts, x, hidden, d_out):
    """Backpropagate ``d_out`` (gradient w.r.t. the network output).

    ``hidden`` is the array returned by :func:`mlp_forward` for the same
    input. Returns ``(d_flat, d_x)``.
    """
    n_layers = acts.shape[0]
    w_off = np.empty(n_layers, dtype=np.int64)
    cols = np.empty(n_layers, dtype=np.int64)
    off = 0
    col = 0
    for l in range(n_layers):
        w_off[l] = off
        off += sizes[l] * sizes[l + 1] + sizes[l + 1]
        cols[l] = col
        col += sizes[l + 1]

    grad = np.zeros_like(flat)
    delta = np.ascontiguousarray(d_out)
    for l in range(n_layers - 1, -1, -1):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        a = hidden[:, cols[l]:cols[l] + n_out]
        if acts[l] == RELU:
            delta = np.where(a > 0.0, delta, 0.0)
        elif acts[l] == TANH:
            delta = delta * (1.0 - a * a)
        if l == 0:
            h_in = np.ascontiguousarray(x)
        else:
            h_in = np.ascontiguousarray(hidden[:, cols[l - 1]:cols[l - 1] + n_in])
        o = w_off[l]
        grad[o:o + n_in * n_out] = (h_in.T @ delta).ravel()
        grad[o + n_in * n_out:o + n_in * n_out + n_out] = delta.sum(axis=0)
        w = flat[o:o + n_in * n_out].reshape((n_in, n_out))
        delta = delta @ w.T
    return grad, delta


@njit
def _sgn(v):
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@njit
def _msd_nominal(t, x1, x2, inv_mh, ch, kh, a1, a2, mu_hat, amp, omega, phase, offset):
    arg = omega * t + phase
    y = amp * np.sin(arg) + offset
    yd = amp * omega * np.cos(arg)
    ydd = -(amp * omega * omega) * np.sin(arg)
    e1 = x1 - y
    e2 = x2 - yd
    sigma = a1 * e1 + a2 * e2
    f = (-ch * x2 - kh * x1) * inv_mh
    u_eq = -(a1 * e2 + a2 * (f - ydd)) / (a2 * inv_mh)
    u_c = -mu_hat * _sgn(sigma) / (a2 * inv_mh)
    return u_eq + u_c


@njit
def _msd_rhs(t, z, u1, p, surf, ref, out):
    m, c, k, b, mh, ch, kh = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    a1, a2, mu_hat = surf[0], surf[1], surf[2]
    amp, omega, phase, offset = ref[0], ref[1], ref[2], ref[3]
    inv_m = 1.0 / m
    inv_mh = 1.0 / mh
    x1 = z[0]
    x2 = z[1]
    u = _msd_nominal(t, x1, x2, inv_mh, ch, kh, a1, a2, mu_hat, amp, omega, phase, offset) + u1
    out[0] = x2
    out[1] = (-c * x2 * abs(x2) - k * x1 - b * x1 * x1 * x1) * inv_m + inv_m * u
    s1 = z[2]
    s2 = z[3]
    us = _msd_nominal(t, s1, s2, inv_mh, ch, kh, a1, a2, mu_hat, amp, omega, phase, offset)
    out[2] = s2
    out[3] = (-ch * s2 - kh * s1) * inv_mh + inv_mh * us


@njit
def msd_closed_loop_sample(z, t0, dt, substeps, u1, p, surf, ref):
    """Advance ``z = (x1, x2, x_hat1, x_hat2)`` by one sampling interval.

    The original plant receives ``nominal(x) + u1`` with ``u1`` held; the
    simplified plant receives ``nominal(x_hat)``. The nominal sliding-mode law
    is evaluated at every Runge-Kutta stage.

    ``p`` = (m, c, k, b, m_hat, c_hat, k_hat), ``surf`` = (a1, a2, mu_hat),
    ``ref`` = (amplitude, omega, phase, offset) of ``y = A sin(w t + phi) + c``.
    """
    h = dt / substeps
    half = 0.5 * h
    x = z.copy()
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    for i in range(substeps):
        t = t0 + i * h
        _msd_rhs(t, x, u1, p, surf, ref, k1)
        _msd_rhs(t + half, x + half * k1, u1, p, surf, ref, k2)
        _msd_rhs(t + half, x + half * k2, u1, p, surf, ref, k3)
        _msd_rhs(t + h, x + h * k3, u1, p, surf, ref, k4)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x
