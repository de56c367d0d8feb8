"""Compiled inner loops for the fixed-step integrators.

Every kernel works in place on small dense matrices and advances a block of
``n_rec * stride`` steps, writing the state at the start of each group of
``stride`` steps into ``rec``. Kernels return the local index of the first
step that produced a non-finite value, or -1.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _riccati_rhs(s, a, d, c, g, out, chi, m):
    # m = s C^T + Gamma^T;  chi = m m^T;  out = A s + s A^T + D - chi
    n = s.shape[0]
    k = c.shape[0]
    for i in range(n):
        for j in range(k):
            acc = g[j, i]
            for l in range(n):
                acc += s[i, l] * c[j, l]
            m[i, j] = acc
    for i in range(n):
        for j in range(n):
            x = 0.0
            for l in range(k):
                x += m[i, l] * m[j, l]
            chi[i, j] = x
            acc = d[i, j]
            for l in range(n):
                acc += a[i, l] * s[l, j] + s[i, l] * a[j, l]
            out[i, j] = acc - x


@njit(cache=True, nogil=True)
def _lyap_rhs(v, a, src, out):
    n = v.shape[0]
    for i in range(n):
        for j in range(n):
            acc = src[i, j]
            for l in range(n):
                acc += a[i, l] * v[l, j] + v[i, l] * a[j, l]
            out[i, j] = acc


@njit(cache=True, nogil=True)
def _axpy(x, alpha, y, out):
    n = x.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = x[i, j] + alpha * y[i, j]


@njit(cache=True, nogil=True)
def _rk4_finish(x, dt, k1, k2, k3, k4):
    n = x.shape[0]
    h = dt / 6.0
    for i in range(n):
        for j in range(n):
            x[i, j] += h * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
    for i in range(n):
        for j in range(i + 1, n):
            v = 0.5 * (x[i, j] + x[j, i])
            x[i, j] = v
            x[j, i] = v


@njit(cache=True, nogil=True)
def _all_finite(x):
    for v in x.ravel():
        if not np.isfinite(v):
            return False
    return True


@njit(cache=True, nogil=True)
def riccati_block(s, a, d, c, g, dt, n_rec, stride, rec, gains):
    """RK4 on ``ds/dt = A s + s A^T + D - chi(s)``.

    ``gains`` is either empty or of shape ``(n_rec * stride, n, k)``; in the
    latter case the start-of-step gain ``s C^T + Gamma^T`` is stored.
    """
    n = s.shape[0]
    k = c.shape[0]
    ks = np.empty((4, n, n))
    tmp = np.empty((n, n))
    chi = np.empty((n, n))
    m = np.empty((n, k))
    keep = gains.shape[0] > 0
    step = 0
    for r in range(n_rec):
        rec[r] = s
        for _ in range(stride):
            _riccati_rhs(s, a, d, c, g, ks[0], chi, m)
            if keep:
                gains[step] = m
            _axpy(s, 0.5 * dt, ks[0], tmp)
            _riccati_rhs(tmp, a, d, c, g, ks[1], chi, m)
            _axpy(s, 0.5 * dt, ks[1], tmp)
            _riccati_rhs(tmp, a, d, c, g, ks[2], chi, m)
            _axpy(s, dt, ks[2], tmp)
            _riccati_rhs(tmp, a, d, c, g, ks[3], chi, m)
            _rk4_finish(s, dt, ks[0], ks[1], ks[2], ks[3])
            if not _all_finite(s):
                return step
            step += 1
    return -1


@njit(cache=True, nogil=True)
def noise_cov_block(s, v, a, d, c, g, dt, n_rec, stride, rec_s, rec_v):
    """RK4 on the pair (Riccati for ``s``, ``dV/dt = A V + V A^T + chi(s)``).

    Both flows share stages, so ``s + V`` follows the RK4 map of the
    unmonitored Lyapunov flow up to rounding.
    """
    n = s.shape[0]
    k = c.shape[0]
    ks = np.empty((4, n, n))
    kv = np.empty((4, n, n))
    ts = np.empty((n, n))
    tv = np.empty((n, n))
    chi = np.empty((n, n))
    m = np.empty((n, k))
    step = 0
    for r in range(n_rec):
        rec_s[r] = s
        rec_v[r] = v
        for _ in range(stride):
            _riccati_rhs(s, a, d, c, g, ks[0], chi, m)
            _lyap_rhs(v, a, chi, kv[0])
            _axpy(s, 0.5 * dt, ks[0], ts)
            _axpy(v, 0.5 * dt, kv[0], tv)
            _riccati_rhs(ts, a, d, c, g, ks[1], chi, m)
            _lyap_rhs(tv, a, chi, kv[1])
            _axpy(s, 0.5 * dt, ks[1], ts)
            _axpy(v, 0.5 * dt, kv[1], tv)
            _riccati_rhs(ts, a, d, c, g, ks[2], chi, m)
            _lyap_rhs(tv, a, chi, kv[2])
            _axpy(s, dt, ks[2], ts)
            _axpy(v, dt, kv[2], tv)
            _riccati_rhs(ts, a, d, c, g, ks[3], chi, m)
            _lyap_rhs(tv, a, chi, kv[3])
            _rk4_finish(s, dt, ks[0], ks[1], ks[2], ks[3])
            _rk4_finish(v, dt, kv[0], kv[1], kv[2], kv[3])
            if not (_all_finite(s) and _all_finite(v)):
                return step
            step += 1
    return -1


@njit(cache=True, nogil=True)
def linear_mean_block(x, a, drive, dt, n_rec, stride, rec):
    """RK4 on ``dx/dt = A x + b(t)``; ``drive[i]`` holds b at (start, mid, end) of step i."""
    n = x.shape[0]
    ks = np.empty((4, n))
    tmp = np.empty(n)
    step = 0
    for r in range(n_rec):
        rec[r] = x
        for _ in range(stride):
            for q in range(4):
                # stages evaluate at x, x + dt/2 k1, x + dt/2 k2, x + dt k3
                for i in range(n):
                    if q == 0:
                        tmp[i] = x[i]
                    elif q == 3:
                        tmp[i] = x[i] + dt * ks[2, i]
                    else:
                        tmp[i] = x[i] + 0.5 * dt * ks[q - 1, i]
                col = 0 if q == 0 else (2 if q == 3 else 1)
                for i in range(n):
                    acc = drive[step, col, i]
                    for l in range(n):
                        acc += a[i, l] * tmp[l]
                    ks[q, i] = acc
            for i in range(n):
                x[i] += dt / 6.0 * (ks[0, i] + 2.0 * ks[1, i] + 2.0 * ks[2, i] + ks[3, i])
                if not np.isfinite(x[i]):
                    return step
            step += 1
    return -1


@njit(cache=True, nogil=True)
def em_block(x, a, drive, gains, dw, dt, n_rec, stride, rec):
    """Euler-Maruyama on ``dx = (A x + b) dt + gain dW`` with given increments.

    ``drive[i]`` is b at the start of step i; ``gains[i]`` the start-of-step gain.
    """
    n = x.shape[0]
    k = dw.shape[1]
    tmp = np.empty(n)
    step = 0
    for r in range(n_rec):
        rec[r] = x
        for _ in range(stride):
            for i in range(n):
                acc = drive[step, i]
                for l in range(n):
                    acc += a[i, l] * x[l]
                noise = 0.0
                for j in range(k):
                    noise += gains[step, i, j] * dw[step, j]
                tmp[i] = x[i] + acc * dt + noise
            for i in range(n):
                x[i] = tmp[i]
                if not np.isfinite(x[i]):
                    return step
            step += 1
    return -1


@njit(cache=True, nogil=True)
def em_ensemble(xs, a, drive, gains, dws, dt, n_rec, stride, recs, failed):
    """:func:`em_block` over a batch of trajectories, one at a time."""
    for t in range(xs.shape[0]):
        if failed[t] >= 0:
            continue
        failed[t] = em_block(xs[t], a, drive, gains, dws[t], dt, n_rec, stride, recs[t])
