"""Compiled inner loops.

Everything here works on raw arrays indexed by window position
``p = x - left`` (so ``p = 0`` is the reflection site). The public modules
wrap these with site-indexed, validated APIs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_BINOM = np.array(
    [
        [1, 0, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0],
        [1, 2, 1, 0, 0, 0],
        [1, 3, 3, 1, 0, 0],
        [1, 4, 6, 4, 1, 0],
        [1, 5, 10, 10, 5, 1],
    ],
    dtype=np.float64,
)


@njit(cache=True)
def w_recursion(rho):
    """W_p = rho_p (1 + W_{p-1}) with W = 0 before the window."""
    n = rho.shape[0]
    w = np.empty(n)
    prev = 0.0
    for p in range(n):
        prev = rho[p] * (1.0 + prev)
        w[p] = prev
    return w


@njit(cache=True)
def variance_accumulate(rho, w, strict):
    """Crossing-time variances for sites p = 1 .. len(rho).

    Uses S_{p+1} = rho_p (S_p + g_{p-1}), g = W + W^2, so the nested sum
    costs O(width). ``strict`` multiplies the tail sum by an extra rho_p,
    which is the literal printed indexing.
    """
    n = rho.shape[0]
    v = np.empty(n)
    s = 0.0
    for p in range(1, n + 1):
        g_prev = w[p - 1] + w[p - 1] * w[p - 1]
        if strict:
            r = rho[p] if p < n else np.nan
            v[p - 1] = 4.0 * g_prev + 8.0 * r * s
        else:
            v[p - 1] = 4.0 * g_prev + 8.0 * s
        if p < n:
            s = rho[p] * (s + g_prev)
    return v


@njit(cache=True)
def third_recursion(omega, e, v):
    """E[tau^3] via t3_p = 1/omega_{p-1} + 6 e_p v_p + rho_{p-1} t3_{p-1}."""
    n = omega.shape[0]
    t3 = np.empty(n)
    prev = 0.0
    for p in range(1, n + 1):
        om = omega[p - 1]
        r = (1.0 - om) / om
        prev = 1.0 / om + 6.0 * e[p - 1] * v[p - 1] + r * prev
        t3[p - 1] = prev
    return t3


@njit(cache=True)
def raw_moment_recursion(omega, order):
    """Raw moments E[tau_p^m], m = 1..order, from the first-step decomposition.

    tau_p = 1 + B (tau_{p-1} + tau_p') with B ~ Bernoulli(1 - omega_{p-1});
    the unknown top moment enters with coefficient (1 - omega_{p-1}) only.
    Returns an array of shape (order, len(omega)).
    """
    n = omega.shape[0]
    out = np.empty((order, n))
    a = np.zeros(order + 1)
    b = np.zeros(order + 1)
    a[0] = 1.0
    b[0] = 1.0
    for p in range(1, n + 1):
        om = omega[p - 1]
        r = (1.0 - om) / om
        for m in range(1, order + 1):
            s = 0.0
            for k in range(1, m + 1):
                inner = 0.0
                for j in range(0, k + 1):
                    if k == m and j == 0:
                        continue
                    inner += _BINOM[k, j] * a[j] * b[k - j]
                s += _BINOM[m, k] * inner
            b[m] = 1.0 / om + r * s
        for m in range(1, order + 1):
            out[m - 1, p - 1] = b[m]
            a[m] = b[m]
    return out


@njit(cache=True)
def ladder_records(v, tol):
    """Positions of strict running-minimum records of ``v``.

    The first finite entry is always a record; later entries must undercut
    the current record value by more than ``tol``.
    """
    n = v.shape[0]
    out = np.empty(n, dtype=np.int64)
    count = 0
    cur = np.inf
    for p in range(n):
        if v[p] < cur - tol:
            out[count] = p
            count += 1
            cur = v[p]
    return out[:count]


@njit(cache=True)
def walk_hitting_times(omega, start_p, targets_p, n_samples, rng, budget, accel):
    """Simulate the quenched chain and record hitting times of each target.

    Positions are window offsets. ``accel[p]`` marks sites where runs of
    immediate bounce-backs (p -> p-1 -> p) are drawn in one geometric draw.
    Returns (times, steps_used, truncated); unfinished entries are -1.
    """
    n_t = targets_p.shape[0]
    times = np.full((n_samples, n_t), -1, dtype=np.int64)
    used = 0
    for s in range(n_samples):
        x = start_p
        t = 0
        k = 0
        remaining = budget - used
        while k < n_t:
            if x == targets_p[k]:
                times[s, k] = t
                k += 1
                continue
            om = omega[x]
            if accel[x]:
                bounce = (1.0 - om) * omega[x - 1]
                u = 1.0 - rng.random()
                g = np.floor(np.log(u) / np.log(bounce))
                t += 2 * np.int64(g)
                if rng.random() * (1.0 - bounce) < om:
                    x += 1
                    t += 1
                else:
                    x -= 2
                    t += 2
            else:
                if rng.random() < om:
                    x += 1
                else:
                    x -= 1
                t += 1
            if t > remaining:
                return times, used + t, True
        used += t
    return times, used, False


@njit(cache=True)
def hitting_pmf_dp(omega, start_p, target_p, horizon):
    """Exact P(T = t), t = 0..horizon, by forward mass propagation.

    Positions 0 .. target_p - 1 are transient (0 reflects), target_p absorbs.
    Returns (pmf, leftover mass).
    """
    width = target_p
    mass = np.zeros(width)
    new = np.zeros(width)
    mass[start_p] = 1.0
    pmf = np.zeros(horizon + 1)
    lo = start_p
    hi = start_p
    for t in range(1, horizon + 1):
        nlo = max(lo - 1, 0)
        nhi = min(hi + 1, width - 1)
        for p in range(nlo, nhi + 1):
            new[p] = 0.0
        for p in range(lo, hi + 1):
            m = mass[p]
            if m == 0.0:
                continue
            om = omega[p]
            if p + 1 == width:
                pmf[t] += om * m
            else:
                new[p + 1] += om * m
            if p > 0:
                new[p - 1] += (1.0 - om) * m
        for p in range(lo, hi + 1):
            mass[p] = 0.0
        for p in range(nlo, nhi + 1):
            mass[p] = new[p]
        lo = nlo
        hi = nhi
    leftover = 0.0
    for p in range(width):
        leftover += mass[p]
    return pmf, leftover


@njit(cache=True)
def excursion_cf(omega, zero_p, grid_p, n_freq, n_fft, tol):
    """Characteristic function of K_n = (T_n - n)/2 at theta_j = 2 pi j / n_fft.

    Per-site transforms follow H_p = omega_{p-1} / (1 - (1 - omega_{p-1}) z H_{p-1});
    K_n is the product of H over sites 1..n. A frequency is abandoned as soon
    as |prod| < tol, since the modulus can only shrink further.
    Returns an array of shape (len(grid_p), n_freq).
    """
    n_g = grid_p.shape[0]
    out = np.zeros((n_g, n_freq), dtype=np.complex128)
    last = grid_p[n_g - 1]
    tol2 = tol * tol
    for j in range(n_freq):
        th = 2.0 * np.pi * j / n_fft
        z = complex(np.cos(th), np.sin(th))
        h = 1.0 + 0.0j
        prod = 1.0 + 0.0j
        k = 0
        for p in range(1, last + 1):
            om = omega[p - 1]
            h = om / (1.0 - (1.0 - om) * z * h)
            if p > zero_p:
                prod *= h
            if p == grid_p[k]:
                out[k, j] = prod
                k += 1
                if k == n_g:
                    break
            if p > zero_p and prod.real * prod.real + prod.imag * prod.imag < tol2:
                break
    return out
