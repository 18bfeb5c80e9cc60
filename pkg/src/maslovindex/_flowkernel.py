"""Compiled inner loops for the linear Jacobi system Y' = A(t, lam) Y.

A(t, lam) = [[0, I], [R(t) - lam I, 0]] acts on a 2n x m block Y = [Q; P]
as (P, (R - lam) Q), so a stage costs one n x n by n x m product.

Stage matrices are precomputed per step: ``Rs[0, k]``, ``Rs[1, k]``,
``Rs[2, k]`` are R at the left end, midpoint and right end of step ``k``
and ``hs[k]`` is its (signed) length.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _rhs(Rs, s, k, lam, Y, out):
    n = Rs.shape[2]
    m = Y.shape[1]
    for c in range(m):
        for i in range(n):
            out[i, c] = Y[n + i, c]
            acc = -lam * Y[i, c]
            for j in range(n):
                acc += Rs[s, k, i, j] * Y[j, c]
            out[n + i, c] = acc


@njit(cache=True, inline="always")
def _axpy(Y, h, K, out):
    for i in range(Y.shape[0]):
        for c in range(Y.shape[1]):
            out[i, c] = Y[i, c] + h * K[i, c]


@njit(cache=True, inline="always")
def _rk4_step(Rs, k, h, lam, Y, k1, k2, k3, k4, tmp):
    _rhs(Rs, 0, k, lam, Y, k1)
    _axpy(Y, 0.5 * h, k1, tmp)
    _rhs(Rs, 1, k, lam, tmp, k2)
    _axpy(Y, 0.5 * h, k2, tmp)
    _rhs(Rs, 1, k, lam, tmp, k3)
    _axpy(Y, h, k3, tmp)
    _rhs(Rs, 2, k, lam, tmp, k4)
    h6 = h / 6.0
    for i in range(Y.shape[0]):
        for c in range(Y.shape[1]):
            Y[i, c] += h6 * (k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c] + k4[i, c])


@njit(cache=True)
def _orthonormalize(Y):
    rows, m = Y.shape
    for _ in range(2):
        for j in range(m):
            for i in range(j):
                d = 0.0
                for r in range(rows):
                    d += Y[r, i] * Y[r, j]
                for r in range(rows):
                    Y[r, j] -= d * Y[r, i]
            nrm = 0.0
            for r in range(rows):
                nrm += Y[r, j] * Y[r, j]
            nrm = np.sqrt(nrm)
            for r in range(rows):
                Y[r, j] /= nrm


@njit(cache=True)
def _isotropy(Y):
    """max |omega(y_i, y_j)| over column pairs of an orthonormal block."""
    n = Y.shape[0] // 2
    m = Y.shape[1]
    worst = 0.0
    for a in range(m):
        for b in range(a + 1, m):
            w = 0.0
            for i in range(n):
                w += -Y[i, a] * Y[n + i, b] + Y[n + i, a] * Y[i, b]
            if abs(w) > worst:
                worst = abs(w)
    return worst


@njit(cache=True)
def flow_final(Rs, hs, k_stop, tail_Rs, tail_h, lams, Y0, renorm_every):
    """Advance Y0 through steps ``0..k_stop-1`` and an optional tail step,
    for every lam in ``lams``.

    ``tail_Rs`` has shape (3, 1, n, n). Returns the final blocks
    (orthonormalized when ``renorm_every > 0``), the worst isotropy defect
    seen per lam and the step index at which it occurred.
    """
    B = lams.shape[0]
    rows, m = Y0.shape
    out = np.empty((B, rows, m))
    drift = np.zeros(B)
    drift_at = np.zeros(B, dtype=np.int64)
    k1 = np.empty((rows, m))
    k2 = np.empty((rows, m))
    k3 = np.empty((rows, m))
    k4 = np.empty((rows, m))
    tmp = np.empty((rows, m))
    for b in range(B):
        lam = lams[b]
        Y = Y0.copy()
        for k in range(k_stop):
            _rk4_step(Rs, k, hs[k], lam, Y, k1, k2, k3, k4, tmp)
            if renorm_every > 0 and (k + 1) % renorm_every == 0:
                _orthonormalize(Y)
                d = _isotropy(Y)
                if d > drift[b]:
                    drift[b] = d
                    drift_at[b] = k + 1
        if tail_h != 0.0:
            _rk4_step(tail_Rs, 0, tail_h, lam, Y, k1, k2, k3, k4, tmp)
        if renorm_every > 0:
            _orthonormalize(Y)
            d = _isotropy(Y)
            if d > drift[b]:
                drift[b] = d
                drift_at[b] = k_stop
        out[b] = Y
    return out, drift, drift_at


@njit(cache=True)
def flow_track(Rs, hs, lam, Y0, renorm_every):
    """Advance Y0 through every step, storing the block at every node."""
    N = hs.shape[0]
    rows, m = Y0.shape
    out = np.empty((N + 1, rows, m))
    k1 = np.empty((rows, m))
    k2 = np.empty((rows, m))
    k3 = np.empty((rows, m))
    k4 = np.empty((rows, m))
    tmp = np.empty((rows, m))
    Y = Y0.copy()
    out[0] = Y
    drift = 0.0
    drift_at = 0
    for k in range(N):
        _rk4_step(Rs, k, hs[k], lam, Y, k1, k2, k3, k4, tmp)
        if renorm_every > 0 and (k + 1) % renorm_every == 0:
            _orthonormalize(Y)
            d = _isotropy(Y)
            if d > drift:
                drift = d
                drift_at = k + 1
        out[k + 1] = Y
    return out, drift, drift_at


@njit(cache=True, fastmath=True, inline="always")
def _batch_stage(Rs, s, k, lams, src, out):
    rows, m, B = src.shape
    n = rows // 2
    for c in range(m):
        for i in range(n):
            for b in range(B):
                out[i, c, b] = src[n + i, c, b]
                out[n + i, c, b] = -lams[b] * src[i, c, b]
            for j in range(n):
                r = Rs[s, k, i, j]
                for b in range(B):
                    out[n + i, c, b] += r * src[j, c, b]


@njit(cache=True)
def _batch_renormalize(Y, drift, drift_at, k, work):
    for b in range(Y.shape[2]):
        for i in range(Y.shape[0]):
            for c in range(Y.shape[1]):
                work[i, c] = Y[i, c, b]
        _orthonormalize(work)
        d = _isotropy(work)
        if d > drift[b]:
            drift[b] = d
            drift_at[b] = k
        for i in range(Y.shape[0]):
            for c in range(Y.shape[1]):
                Y[i, c, b] = work[i, c]


@njit(cache=True, fastmath=True, inline="always")
def _batch_axpy(Y, h, K, out):
    rows, m, B = Y.shape
    for i in range(rows):
        for c in range(m):
            for b in range(B):
                out[i, c, b] = Y[i, c, b] + h * K[i, c, b]


@njit(cache=True, fastmath=True, inline="always")
def _batch_step(Rs, k, h, lams, Y, K1, K2, K3, K4, T):
    _batch_stage(Rs, 0, k, lams, Y, K1)
    _batch_axpy(Y, 0.5 * h, K1, T)
    _batch_stage(Rs, 1, k, lams, T, K2)
    _batch_axpy(Y, 0.5 * h, K2, T)
    _batch_stage(Rs, 1, k, lams, T, K3)
    _batch_axpy(Y, h, K3, T)
    _batch_stage(Rs, 2, k, lams, T, K4)
    h6 = h / 6.0
    rows, m, B = Y.shape
    for i in range(rows):
        for c in range(m):
            for b in range(B):
                Y[i, c, b] += h6 * (K1[i, c, b] + 2.0 * K2[i, c, b] + 2.0 * K3[i, c, b] + K4[i, c, b])


@njit(cache=True)
def _det2_q_ip(Y, b, work):
    """det(Q + iP)^2 for the block Y[:, :, b] (Gaussian elimination)."""
    n = Y.shape[0] // 2
    for i in range(n):
        for c in range(n):
            work[i, c] = Y[i, c, b] + 1j * Y[n + i, c, b]
    det = 1.0 + 0.0j
    for k in range(n):
        p = k
        best = abs(work[k, k])
        for r in range(k + 1, n):
            if abs(work[r, k]) > best:
                best = abs(work[r, k])
                p = r
        if p != k:
            for c in range(n):
                t = work[k, c]
                work[k, c] = work[p, c]
                work[p, c] = t
            det = -det
        piv = work[k, k]
        det *= piv
        if piv == 0:
            return 0.0j
        for r in range(k + 1, n):
            f = work[r, k] / piv
            for c in range(k, n):
                work[r, c] -= f * work[k, c]
    return det * det


@njit(cache=True)
def _lift_phase(Y, z_prev, phase, cwork):
    for b in range(Y.shape[2]):
        z = _det2_q_ip(Y, b, cwork)
        # z is never 0: Q + iP is invertible for any frame of a Lagrangian
        phase[b] += np.angle(z / z_prev[b])
        z_prev[b] = z


@njit(cache=True, fastmath=True)
def flow_batch(Rs, hs, k_stop, tail_Rs, tail_h, lams, Y0, renorm_every, phase_every=0):
    """Same contract as :func:`flow_final`, with lam as the innermost
    (vectorized) axis. Worth it for batches of more than a few lams.

    With ``phase_every > 0`` the phase of Det^2 is unwrapped along the
    flow, sampled every ``phase_every`` steps, and returned as a fourth
    output (starting from the phase of Det^2 at Y0).
    """
    rows, m = Y0.shape
    B = lams.shape[0]
    Y = np.empty((rows, m, B))
    for i in range(rows):
        for c in range(m):
            for b in range(B):
                Y[i, c, b] = Y0[i, c]
    K1 = np.empty_like(Y)
    K2 = np.empty_like(Y)
    K3 = np.empty_like(Y)
    K4 = np.empty_like(Y)
    T = np.empty_like(Y)
    work = np.empty((rows, m))
    cwork = np.empty((m, m), dtype=np.complex128)
    drift = np.zeros(B)
    drift_at = np.zeros(B, dtype=np.int64)
    phase = np.zeros(B)
    z_prev = np.empty(B, dtype=np.complex128)
    if phase_every > 0:
        for b in range(B):
            z_prev[b] = _det2_q_ip(Y, b, cwork)
            phase[b] = np.angle(z_prev[b])
    for k in range(k_stop):
        _batch_step(Rs, k, hs[k], lams, Y, K1, K2, K3, K4, T)
        if renorm_every > 0 and (k + 1) % renorm_every == 0:
            _batch_renormalize(Y, drift, drift_at, k + 1, work)
        if phase_every > 0 and (k + 1) % phase_every == 0:
            _lift_phase(Y, z_prev, phase, cwork)
    if tail_h != 0.0:
        _batch_step(tail_Rs, 0, tail_h, lams, Y, K1, K2, K3, K4, T)
    if renorm_every > 0:
        _batch_renormalize(Y, drift, drift_at, k_stop, work)
    if phase_every > 0:
        _lift_phase(Y, z_prev, phase, cwork)
    out = np.empty((B, rows, m))
    for b in range(B):
        out[b] = Y[:, :, b]
    return out, drift, drift_at, phase
