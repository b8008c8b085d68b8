"""Compiled kernels: truncated convolution, fused flow recurrences, scalar orbits.

Everything here is deterministic: loops run in a fixed order, fastmath stays
off, and no reduction is reordered.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# status codes shared with the python layer
OK = 0
ERR_SINGULAR = 1
ERR_NO_CROSSING = 2
ERR_STEP_UNDERFLOW = 3
ERR_ENERGY = 4

_JIT = dict(cache=True, fastmath=False, nogil=True)


@njit(**_JIT)
def conv_range(out, a, b, pi, pj, pk, lo, hi):
    """out[pk] += a[pi] * b[pj] over pair rows [lo, hi)."""
    for idx in range(lo, hi):
        out[pk[idx]] += a[pi[idx]] * b[pj[idx]]


@njit(**_JIT)
def conv_full(out, a, b, pi, pj, pk, n_pairs):
    for idx in range(n_pairs):
        out[pk[idx]] += a[pi[idx]] * b[pj[idx]]


@njit(**_JIT)
def jet_recip(a, out, pi, pj, pk, chunk_lo, chunk_hi, deg_start, order):
    """out = 1/a as a graded recurrence; a[0] must be nonzero."""
    a0 = a[0]
    out[:] = 0.0
    out[0] = 1.0 / a0
    for d in range(1, order + 1):
        s0, s1 = deg_start[d], deg_start[d + 1]
        for p in range(1, d + 1):
            conv_range(out, a, out, pi, pj, pk, chunk_lo[d, p], chunk_hi[d, p])
        for t in range(s0, s1):
            out[t] = -out[t] / a0


@njit(**_JIT)
def jet_pow(a, alpha, out, pi, pj, pk, chunk_lo, chunk_hi, deg_start, order):
    """out = a**alpha as a graded recurrence; a[0] must be positive."""
    a0 = a[0]
    out[:] = 0.0
    out[0] = a0**alpha
    for d in range(1, order + 1):
        s0, s1 = deg_start[d], deg_start[d + 1]
        acc = np.zeros(s1 - s0, dtype=out.dtype)
        for p in range(1, d + 1):
            w = ((alpha + 1.0) * p - d) / d
            lo, hi = chunk_lo[d, p], chunk_hi[d, p]
            for idx in range(lo, hi):
                acc[pk[idx] - s0] += w * a[pi[idx]] * out[pj[idx]]
        for t in range(s0, s1):
            out[t] = acc[t - s0] / (d * a0)


@njit(**_JIT)
def cr3bp_series(state0, mu, p, pi, pj, pk, chunk_lo, chunk_hi, deg_start,
                 order, n_pairs, dist_floor, out):
    """Time-Taylor coefficients of the CR3BP flow for a jet-valued state.

    state0: (6, n_terms) initial coefficients (x, y, z, vx, vy, vz).
    out:    (p+1, 6, n_terms) filled with the time-Taylor series.
    Works for plain scalars as the n_terms == 1 special case.
    Returns a status code.
    """
    nt = state0.shape[1]
    out[:] = 0.0
    out[0, :, :] = state0

    D1 = np.zeros((p + 1, nt), dtype=state0.dtype)
    D2 = np.zeros((p + 1, nt), dtype=state0.dtype)
    R1 = np.zeros((p + 1, nt), dtype=state0.dtype)
    R2 = np.zeros((p + 1, nt), dtype=state0.dtype)
    U1 = np.zeros((p + 1, nt), dtype=state0.dtype)
    U2 = np.zeros((p + 1, nt), dtype=state0.dtype)
    R1i0 = np.zeros(nt, dtype=state0.dtype)
    R2i0 = np.zeros(nt, dtype=state0.dtype)
    acc = np.zeros(nt, dtype=state0.dtype)
    gx = np.zeros(nt, dtype=state0.dtype)
    gy = np.zeros(nt, dtype=state0.dtype)
    gz = np.zeros(nt, dtype=state0.dtype)
    alpha = -1.5

    for k in range(p + 1):
        D1[k, :] = out[k, 0, :]
        D2[k, :] = out[k, 0, :]
        if k == 0:
            D1[0, 0] += mu
            D2[0, 0] += mu - 1.0
        # r1^2, r2^2 tau-degree-k slices
        R1[k, :] = 0.0
        for i in range(k + 1):
            conv_full(R1[k], out[i, 1], out[k - i, 1], pi, pj, pk, n_pairs)
            conv_full(R1[k], out[i, 2], out[k - i, 2], pi, pj, pk, n_pairs)
        R2[k, :] = R1[k, :]
        for i in range(k + 1):
            conv_full(R1[k], D1[i], D1[k - i], pi, pj, pk, n_pairs)
            conv_full(R2[k], D2[i], D2[k - i], pi, pj, pk, n_pairs)
        if k == 0:
            if R1[0, 0] < dist_floor * dist_floor or R2[0, 0] < dist_floor * dist_floor:
                return ERR_SINGULAR
            jet_pow(R1[0], alpha, U1[0], pi, pj, pk, chunk_lo, chunk_hi,
                    deg_start, order)
            jet_pow(R2[0], alpha, U2[0], pi, pj, pk, chunk_lo, chunk_hi,
                    deg_start, order)
            jet_recip(R1[0], R1i0, pi, pj, pk, chunk_lo, chunk_hi, deg_start,
                      order)
            jet_recip(R2[0], R2i0, pi, pj, pk, chunk_lo, chunk_hi, deg_start,
                      order)
        else:
            acc[:] = 0.0
            for j in range(1, k + 1):
                w = ((alpha + 1.0) * j - k) / k
                for idx in range(n_pairs):
                    acc[pk[idx]] += w * R1[j, pi[idx]] * U1[k - j, pj[idx]]
            conv_full(U1[k], acc, R1i0, pi, pj, pk, n_pairs)
            acc[:] = 0.0
            for j in range(1, k + 1):
                w = ((alpha + 1.0) * j - k) / k
                for idx in range(n_pairs):
                    acc[pk[idx]] += w * R2[j, pi[idx]] * U2[k - j, pj[idx]]
            conv_full(U2[k], acc, R2i0, pi, pj, pk, n_pairs)

        if k == p:
            break

        # gradient of the effective potential, tau-degree k
        gx[:] = out[k, 0, :]
        gy[:] = out[k, 1, :]
        gz[:] = 0.0
        for i in range(k + 1):
            for idx in range(n_pairs):
                t = pk[idx]
                f1 = U1[k - i, pj[idx]]
                f2 = U2[k - i, pj[idx]]
                gx[t] -= (1.0 - mu) * D1[i, pi[idx]] * f1 + mu * D2[i, pi[idx]] * f2
                gy[t] -= ((1.0 - mu) * f1 + mu * f2) * out[i, 1, pi[idx]]
                gz[t] -= ((1.0 - mu) * f1 + mu * f2) * out[i, 2, pi[idx]]

        c = 1.0 / (k + 1.0)
        out[k + 1, 0, :] = out[k, 3, :] * c
        out[k + 1, 1, :] = out[k, 4, :] * c
        out[k + 1, 2, :] = out[k, 5, :] * c
        for t in range(nt):
            out[k + 1, 3, t] = (2.0 * out[k, 4, t] + gx[t]) * c
            out[k + 1, 4, t] = (-2.0 * out[k, 3, t] + gy[t]) * c
            out[k + 1, 5, t] = gz[t] * c
    return OK


# ----------------------------------------------------------------------
# fused scalar-orbit machinery (n_terms == 1 path, everything in floats)
# ----------------------------------------------------------------------

_S1 = np.zeros((1,), dtype=np.int32)
_PI1 = np.zeros(1, dtype=np.int32)
_CL1 = np.zeros((1, 1), dtype=np.int64)
_DS1 = np.array([0, 1], dtype=np.int64)


@njit(**_JIT)
def _scalar_series(u6, mu, p, dist_floor, out):
    """cr3bp_series specialised to scalars: out shape (p+1, 6)."""
    state0 = np.empty((6, 1), dtype=np.float64)
    for i in range(6):
        state0[i, 0] = u6[i]
    pi = np.zeros(1, dtype=np.int32)
    chunk = np.zeros((1, 1), dtype=np.int64)
    chunk_hi = np.ones((1, 1), dtype=np.int64)
    ds = np.zeros(2, dtype=np.int64)
    ds[1] = 1
    buf = np.empty((p + 1, 6, 1), dtype=np.float64)
    status = cr3bp_series(state0, mu, p, pi, pi, pi, chunk, chunk_hi, ds, 0,
                          1, dist_floor, buf)
    for k in range(p + 1):
        for i in range(6):
            out[k, i] = buf[k, i, 0]
    return status


@njit(**_JIT)
def _step_size(series, p, tol, max_step):
    n1 = 0.0
    n2 = 0.0
    for i in range(6):
        v1 = abs(series[p - 1, i])
        v2 = abs(series[p, i])
        if v1 > n1:
            n1 = v1
        if v2 > n2:
            n2 = v2
    h = max_step
    if n1 > 0.0:
        h1 = (tol / n1) ** (1.0 / (p - 1))
        if h1 < h:
            h = h1
    if n2 > 0.0:
        h2 = (tol / n2) ** (1.0 / p)
        if h2 < h:
            h = h2
    return h


@njit(**_JIT)
def _eval_scalar_series(series, p, tau, out):
    for i in range(6):
        acc = series[p, i]
        for k in range(p - 1, -1, -1):
            acc = acc * tau + series[k, i]
        out[i] = acc


@njit(**_JIT)
def _eval_component(series, p, tau, comp):
    acc = series[p, comp]
    for k in range(p - 1, -1, -1):
        acc = acc * tau + series[k, comp]
    return acc


@njit(**_JIT)
def _eval_component_deriv(series, p, tau, comp):
    acc = p * series[p, comp]
    for k in range(p - 1, 0, -1):
        acc = acc * tau + k * series[k, comp]
    return acc


@njit(**_JIT)
def propagate_to_section(u6, mu, abs_tol, rel_tol, p, max_step, t_max,
                         dist_floor, out):
    """Flow a scalar state to its next y=0, vy<0 crossing (y going + -> -).

    out receives the crossing state; returns (status, crossing_time, n_steps).
    """
    state = u6.copy()
    series = np.empty((p + 1, 6), dtype=np.float64)
    t = 0.0
    n_steps = 0
    eps = 2.220446049250313e-16
    while t < t_max:
        status = _scalar_series(state, mu, p, dist_floor, series)
        if status != OK:
            return status, t, n_steps
        scale = 0.0
        for i in range(6):
            if abs(state[i]) > scale:
                scale = abs(state[i])
        tol = abs_tol + rel_tol * scale
        h = _step_size(series, p, tol, max_step)
        if h < 100.0 * eps * max(abs(t), 1.0):
            return ERR_STEP_UNDERFLOW, t, n_steps
        y0 = series[0, 1]
        yh = _eval_component(series, p, h, 1)
        if y0 > 0.0 and yh <= 0.0:
            # crossing inside this step: Newton on y(tau)
            tau = h * y0 / (y0 - yh)
            for _ in range(50):
                yv = _eval_component(series, p, tau, 1)
                dv = _eval_component_deriv(series, p, tau, 1)
                if dv == 0.0:
                    break
                dtau = yv / dv
                tau -= dtau
                if abs(dtau) < 100.0 * eps * max(abs(tau), 1e-30):
                    break
            if tau < -0.1 * h or tau > 1.1 * h:
                return ERR_NO_CROSSING, t, n_steps
            dv = _eval_component_deriv(series, p, tau, 1)
            if dv >= 0.0:
                return ERR_NO_CROSSING, t, n_steps
            _eval_scalar_series(series, p, tau, out)
            return OK, t + tau, n_steps + 1
        _eval_scalar_series(series, p, h, state)
        t += h
        n_steps += 1
    return ERR_NO_CROSSING, t, n_steps


@njit(**_JIT)
def vy_on_energy_surface(x, z, vx, vz, mu, c0):
    """Negative-branch vy from the energy constraint at y = 0."""
    r1 = np.sqrt((x + mu) ** 2 + z * z)
    r2 = np.sqrt((x - 1.0 + mu) ** 2 + z * z)
    u = 0.5 * x * x + (1.0 - mu) / r1 + mu / r2
    rad = 2.0 * u - vx * vx - vz * vz - c0
    return rad, -np.sqrt(abs(rad))


@njit(**_JIT)
def section_map(u4, mu, c0, abs_tol, rel_tol, p, max_step, t_max, dist_floor,
                out4):
    """One iterate of the scalar return map on the y=0, vy<0 section."""
    rad, vy = vy_on_energy_surface(u4[0], u4[1], u4[2], u4[3], mu, c0)
    if rad <= 0.0:
        return ERR_ENERGY, 0.0
    u6 = np.empty(6, dtype=np.float64)
    u6[0] = u4[0]
    u6[1] = 0.0
    u6[2] = u4[1]
    u6[3] = u4[2]
    u6[4] = vy
    u6[5] = u4[3]
    out6 = np.empty(6, dtype=np.float64)
    status, tc, _ = propagate_to_section(u6, mu, abs_tol, rel_tol, p, max_step,
                                         t_max, dist_floor, out6)
    if status != OK:
        return status, tc
    out4[0] = out6[0]
    out4[1] = out6[2]
    out4[2] = out6[3]
    out4[3] = out6[5]
    return OK, tc
