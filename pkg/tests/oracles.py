"""Independent reference computations used by the tests.

Everything here is plain numpy linear algebra on small windows and shares
no code with the package's recursions or kernels.
"""

import math

import numpy as np
from scipy import special


def crossing_chain(omegas, left, i):
    """Transient matrix for the walk on [left, i-1] absorbed at i, start i-1."""
    om = np.asarray(omegas, dtype=float)
    size = i - left
    Q = np.zeros((size, size))
    for k in range(size):
        w = om[k]
        if k + 1 < size:
            Q[k, k + 1] = w
        if k > 0:
            Q[k, k - 1] = 1 - w
        elif w < 1:
            raise ValueError("leftmost site must reflect")
    start = np.zeros(size)
    start[-1] = 1.0
    return Q, start


def crossing_raw_moments(omegas, left, i, order=5):
    """E[tau_i^m], m = 1..order, via factorial moments k! pi Q^{k-1} N^k 1."""
    Q, pi = crossing_chain(omegas, left, i)
    N = np.linalg.inv(np.eye(Q.shape[0]) - Q)
    ones = np.ones(Q.shape[0])
    fact = []
    for k in range(1, order + 1):
        vec = np.linalg.matrix_power(N, k) @ ones
        vec = np.linalg.matrix_power(Q, k - 1) @ vec
        fact.append(math.factorial(k) * pi @ vec)
    raw = []
    for m in range(1, order + 1):
        raw.append(sum(special.stirling2(m, k, exact=True) * fact[k - 1] for k in range(1, m + 1)))
    return np.array(raw)


def crossing_pmf(omegas, left, i, horizon):
    """P(tau_i = t) for t = 0..horizon by propagating the chain."""
    Q, pi = crossing_chain(omegas, left, i)
    exit_ = 1 - Q.sum(axis=1)
    pmf = np.zeros(horizon + 1)
    state = pi.copy()
    for t in range(1, horizon + 1):
        pmf[t] = state @ exit_
        state = state @ Q
    return pmf


def hitting_pmf(omegas, left, n, horizon):
    """P(T_n = t) from 0, by a dense forward recursion over the window."""
    om = np.asarray(omegas, dtype=float)
    size = n - left
    dist = np.zeros(size)
    dist[-left] = 1.0
    pmf = np.zeros(horizon + 1)
    for t in range(1, horizon + 1):
        new = np.zeros(size)
        new[1:] += dist[:-1] * om[:size - 1]
        new[:-1] += dist[1:] * (1 - om[1:size])
        pmf[t] = dist[-1] * om[size - 1]
        dist = new
    return pmf
