"""Exact quenched moments of crossing times.

``tau_i`` is the time the walk started at ``i - 1`` needs to reach ``i``.
All profiles cover the sites ``left + 1 .. right + 1``: the crossing into
``right + 1`` only involves omegas inside the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from rwre import _kernels
from rwre.environment import Environment, EnvStatics, LadderDecomposition, env_statics

__all__ = [
    "MomentProfile",
    "BlockMoments",
    "mean_profile",
    "variance_profile",
    "third_profile",
    "moment_m",
    "moment_profile",
    "fifth_abs_central_bound",
    "fifth_abs_central_mc",
    "block_moments",
    "reflect_at",
    "mu_tilde_gap",
    "reflection_site",
]


def _w(env: Environment) -> np.ndarray:
    return _kernels.w_recursion(np.ascontiguousarray(env.rho))


def mean_profile(env: Environment, strict: bool = False) -> np.ndarray:
    """E[tau_i] = 1 + 2 W_{i-1} for i = left+1 .. right+1.

    With ``strict=True`` the printed variant 1 + 2 W_i is returned instead
    (its last entry is undefined and set to nan).
    """
    w = _w(env)
    if strict:
        return 1.0 + 2.0 * np.append(w[1:], np.nan)
    return 1.0 + 2.0 * w


def variance_profile(env: Environment, strict: bool = False) -> np.ndarray:
    """Var(tau_i) = 4 (W_{i-1} + W_{i-1}^2) + 8 sum_{j<i-1} Pi_{j+1,i-1} (W_j + W_j^2)."""
    rho = np.ascontiguousarray(env.rho)
    w = _kernels.w_recursion(rho)
    return _kernels.variance_accumulate(rho, w, strict)


def third_profile(env: Environment, e=None, v=None) -> tuple[np.ndarray, np.ndarray]:
    """(E[tau_i^3], E[(tau_i - e_i)^3]) from the third-moment recursion."""
    e = mean_profile(env) if e is None else e
    v = variance_profile(env) if v is None else v
    t3 = _kernels.third_recursion(np.ascontiguousarray(env.omegas), e, v)
    return t3, t3 - 3.0 * v * e - e**3


def _raw_moments(env: Environment, order: int) -> np.ndarray:
    if not 1 <= order <= 5:
        raise ValueError(f"moment order must lie in [1, 5], got {order}")
    return _kernels.raw_moment_recursion(np.ascontiguousarray(env.omegas), order)


def moment_m(env: Environment, i: int, m: int) -> float:
    """E[tau_i^m] for 1 <= m <= 5 by the first-step expansion."""
    if not env.left < i <= env.right + 1:
        raise IndexError(f"site {i} outside ({env.left}, {env.right + 1}]")
    return float(_raw_moments(env, m)[m - 1, i - env.left - 1])


@dataclass(frozen=True, eq=False)
class MomentProfile:
    """Per-site crossing-time moments over sites ``left + 1 .. right + 1``.

    ``e``, ``v`` and ``t3`` are the mean, variance and raw third moment;
    ``m4`` and ``m5`` are raw fourth and fifth moments when requested.
    """

    left: int
    e: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    t3: np.ndarray = field(repr=False)
    m4: np.ndarray | None = field(default=None, repr=False)
    m5: np.ndarray | None = field(default=None, repr=False)

    @property
    def first_site(self) -> int:
        return self.left + 1

    @property
    def last_site(self) -> int:
        return self.left + self.e.size

    @property
    def c3(self) -> np.ndarray:
        return self.t3 - 3.0 * self.v * self.e - self.e**3

    @property
    def m2(self) -> np.ndarray:
        return self.v + self.e**2

    def index(self, i: int) -> int:
        if not self.first_site <= i <= self.last_site:
            raise IndexError(f"site {i} outside [{self.first_site}, {self.last_site}]")
        return i - self.first_site

    def at(self, i: int) -> dict[str, float]:
        k = self.index(i)
        out = {"e": self.e[k], "v": self.v[k], "t3": self.t3[k], "c3": self.c3[k]}
        if self.m4 is not None:
            out["m4"] = self.m4[k]
        if self.m5 is not None:
            out["m5"] = self.m5[k]
        return {key: float(val) for key, val in out.items()}

    def window(self, lo: int, hi: int) -> slice:
        """Slice of profile arrays for sites ``lo .. hi`` inclusive."""
        return slice(self.index(lo), self.index(hi) + 1)

    def hitting_mean(self, n: int) -> float:
        """E[T_n] for the walk started at 0."""
        return float(self.e[self.window(1, n)].sum())

    def hitting_var(self, n: int) -> float:
        return float(self.v[self.window(1, n)].sum())

    def to_text(self) -> str:
        cols = ["site", "e", "v", "t3"] + [c for c in ("m4", "m5") if getattr(self, c) is not None]
        arrays = [getattr(self, c) for c in cols[1:]]
        lines = ["# " + " ".join(cols)]
        for k in range(self.e.size):
            vals = " ".join(format(float(a[k]), ".17g") for a in arrays)
            lines.append(f"{self.first_site + k} {vals}")
        return "\n".join(lines) + "\n"


def moment_profile(env: Environment, order: int = 3, strict: bool = False) -> MomentProfile:
    """Moments of every crossing time up to ``order`` (3, 4 or 5)."""
    if order not in (3, 4, 5):
        raise ValueError(f"profile order must be 3, 4 or 5, got {order}")
    e = mean_profile(env, strict)
    v = variance_profile(env, strict)
    t3, _ = third_profile(env, e, v)
    m4 = m5 = None
    if order > 3:
        raw = _raw_moments(env, order)
        m4 = raw[3]
        m5 = raw[4] if order == 5 else None
    return MomentProfile(env.left, e, v, t3, m4, m5)


def fifth_abs_central_bound(profile: MomentProfile) -> np.ndarray:
    """Upper bound on E|tau - e|^5 via |tau - e| <= tau + e.

    E[(tau + e)(tau - e)^4] = m5 - 3 e m4 + 2 e^2 t3 + 2 e^3 m2 - 2 e^5.
    """
    if profile.m5 is None:
        raise ValueError("profile needs raw moments up to order 5")
    e = profile.e
    b = profile.m5 - 3 * e * profile.m4 + 2 * e**2 * profile.t3 + 2 * e**3 * profile.m2 - 2 * e**5
    return np.maximum(b, 0.0)


def fifth_abs_central_mc(env: Environment, sites, n_samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo estimate of E|tau_i - e_i|^5 and its standard error."""
    from rwre.walk import sample_crossing_times

    e = mean_profile(env)
    est, se = [], []
    for k, i in enumerate(sites):
        tau = sample_crossing_times(env, i, n_samples, seed, stream=k).astype(np.float64)
        d = np.abs(tau - e[i - env.left - 1]) ** 5
        est.append(d.mean())
        se.append(d.std(ddof=1) / math.sqrt(n_samples))
    return np.array(est), np.array(se)


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockMoments:
    """Crossing moments of the ladder blocks ``(nu_{i-1}, nu_i]``.

    ``mu`` and ``s2`` are block mean and variance, ``m3`` the summed raw third
    moments and ``c3`` the summed centered third moments. ``sum_bound`` is
    mu + 6 mu s2 + R_{nu_{i-1}, nu_i - 1} E[tau_{nu_{i-1}}^3].
    """

    nus: np.ndarray
    mu: np.ndarray = field(repr=False)
    s2: np.ndarray = field(repr=False)
    m3: np.ndarray = field(repr=False)
    c3: np.ndarray = field(repr=False)
    log_heights: np.ndarray = field(repr=False)
    sum_bound: np.ndarray = field(repr=False)
    mu_tilde: np.ndarray | None = field(default=None, repr=False)
    mu_gap: np.ndarray | None = field(default=None, repr=False)
    tilde_n: int | None = None

    @property
    def n_blocks(self) -> int:
        return self.mu.size

    @property
    def heights(self) -> np.ndarray:
        return np.exp(self.log_heights)

    def sum_bound_holds(self) -> np.ndarray:
        return self.m3 <= self.sum_bound

    def m3_lower_holds(self) -> np.ndarray:
        return self.c3 >= 16.0 * self.heights**3

    def to_text(self) -> str:
        lines = ["# block nu_left nu_right mu s2 m3 M"]
        for k in range(self.n_blocks):
            vals = " ".join(
                format(float(x), ".17g")
                for x in (self.mu[k], self.s2[k], self.m3[k], math.exp(self.log_heights[k]))
            )
            lines.append(f"{k + 1} {int(self.nus[k])} {int(self.nus[k + 1])} {vals}")
        return "\n".join(lines) + "\n"


def _block_sums(values: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    # segment sums, not prefix-sum differences: tiny blocks must not cancel
    out = np.add.reduceat(values[: ends[-1]], starts)
    return out


def _block_R(st: EnvStatics, decomp: LadderDecomposition) -> np.ndarray:
    """R_{a, b-1} = sum_{a < x <= b} exp(V(x) - V(a)) for each block (a, b]."""
    left = st.env.left
    a = decomp.nus[:-1] - left
    lengths = np.diff(decomp.nus)
    x = np.arange(a[0] + 1, decomp.nus[-1] - left + 1)
    rel = np.exp(st.V[x] - np.repeat(st.V[a], lengths))
    return np.add.reduceat(rel, np.concatenate([[0], np.cumsum(lengths)[:-1]]))


def reflection_site(nu_prev: int, n: int) -> int:
    """Site m = nu_{i-1} - floor(sqrt(n)) - 1 where the reflection is placed."""
    return int(nu_prev - math.isqrt(n) - 1)


def mu_tilde_gap(env: Environment, decomp: LadderDecomposition, n: int, statics: EnvStatics | None = None) -> np.ndarray:
    """mu_i - mu~_i^{(n)} for every block of ``decomp``.

    Reflecting at m lowers e_j by 2 W_m Pi_{m+1, j-1} for j > m, so the block
    mean drops by 2 W_m sum_j exp(V(j) - V(m + 1)); zero once m <= left.
    """
    st = statics if statics is not None else env_statics(env)
    out = np.zeros(decomp.n_blocks)
    for k in range(decomp.n_blocks):
        a, b = int(decomp.nus[k]), int(decomp.nus[k + 1])
        m = reflection_site(a, n)
        if m <= env.left:
            continue
        wm = st.W[m - env.left]
        if wm == 0.0:
            continue
        vj = st.V[a + 1 - env.left : b + 1 - env.left]
        out[k] = math.exp(math.log(2.0 * wm) + special.logsumexp(vj) - st.V[m + 1 - env.left])
    return out


def block_moments(
    env: Environment,
    decomp: LadderDecomposition,
    profile: MomentProfile | None = None,
    n: int | None = None,
    check: bool = True,
) -> BlockMoments:
    """Per-block moment sums, plus the reflected means when ``n`` is given.

    With ``check`` the block third-moment sum bound and the lower bound
    sum c3 >= 16 M^3 are asserted on every block.
    """
    if decomp.n_blocks == 0:
        raise ValueError("decomposition has no complete block")
    prof = profile if profile is not None else moment_profile(env)
    st = env_statics(env)
    first = prof.first_site
    starts = decomp.nus[:-1] - first + 1
    ends = decomp.nus[1:] - first + 1
    mu = _block_sums(prof.e, starts, ends)
    s2 = _block_sums(prof.v, starts, ends)
    m3 = _block_sums(prof.t3, starts, ends)
    c3 = _block_sums(prof.c3, starts, ends)
    # R_{a, b-1} t3_a with a = nu_{i-1}
    r = _block_R(st, decomp)
    bound = mu + 6.0 * mu * s2 + r * prof.t3[decomp.nus[:-1] - first]
    out = BlockMoments(decomp.nus, mu, s2, m3, c3, decomp.log_heights, bound)
    if n is not None:
        gap = mu_tilde_gap(env, decomp, n, st)
        out = BlockMoments(decomp.nus, mu, s2, m3, c3, decomp.log_heights, bound, mu - gap, gap, n)
    if check:
        bad = np.flatnonzero(~out.sum_bound_holds())
        if bad.size:
            k = int(bad[0])
            raise AssertionError(f"block sum bound fails on block {k + 1}: {m3[k]!r} > {bound[k]!r}")
        bad = np.flatnonzero(~out.m3_lower_holds())
        if bad.size:
            k = int(bad[0])
            raise AssertionError(
                f"third-moment lower bound fails on block {k + 1}: {c3[k]!r} < 16 M^3 = {16 * out.heights[k] ** 3!r}"
            )
    return out


def reflect_at(env: Environment, m: int) -> Environment:
    """Copy of ``env`` with omega_m = 1, so the walk cannot step left of m."""
    p = env.pos(m)
    om = env.omegas.copy()
    om[p] = 1.0
    return Environment(env.left, om, env.seed, env.law)
