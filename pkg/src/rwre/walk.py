"""Quenched hitting-time laws and their Kolmogorov distance to the normal.

Three routes to the law of ``T_n`` (walk started at 0) are provided:

* Monte Carlo, simulating the chain in fixed-size chunks with one random
  stream per chunk, so results do not depend on how chunks are scheduled;
* an exact forward recursion over (time, position), cost O(horizon * width);
* an exact spectral route through the characteristic function of
  ``(T_n - n) / 2``, cheap enough for n in the hundreds of thousands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from rwre import _kernels
from rwre.environment import Environment
from rwre.moments import MomentProfile, moment_profile
from rwre.seeding import WALK, generator

__all__ = [
    "DiscreteCdf",
    "HittingLaw",
    "LeftoverMassError",
    "sample_hitting_time",
    "sample_hitting_times",
    "sample_crossing_times",
    "exact_hitting_pmf",
    "spectral_hitting_pmf",
    "ks_distance",
    "ks_to_normal",
    "lattice_floor",
    "normal_cdf",
    "CHUNK",
    "DEFAULT_BUDGET",
]

#: Monte-Carlo samples per random stream.
CHUNK = 4096
#: Default total step budget for one simulation call.
DEFAULT_BUDGET = 10**10
#: Bounce probability above which runs of bounce-backs are drawn at once.
BOUNCE_ACCEL = 0.3


class LeftoverMassError(RuntimeError):
    """Exact computation left more unabsorbed mass than allowed."""


def normal_cdf(x):
    return special.ndtr(x)


@dataclass(frozen=True, eq=False)
class DiscreteCdf:
    """Step distribution function with atoms ``support`` and values ``cdf``.

    ``cdf[k]`` is F at ``support[k]``; F is 0 left of the first atom and
    equals ``total_mass`` right of the last one (below 1 when truncated).
    """

    support: np.ndarray
    cdf: np.ndarray
    total_mass: float
    provenance: str = ""

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.float64)
        c = np.asarray(self.cdf, dtype=np.float64)
        if s.shape != c.shape or s.ndim != 1 or s.size == 0:
            raise ValueError("support and cdf must be equal-length non-empty 1-d arrays")
        if np.any(np.diff(s) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(np.diff(c) < 0) or c[0] < 0 or c[-1] > 1 + 1e-12:
            raise ValueError("cdf values must be nondecreasing within [0, 1]")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "cdf", c)

    @classmethod
    def from_pmf(cls, support, pmf, provenance: str = "") -> DiscreteCdf:
        support = np.asarray(support, dtype=np.float64)
        pmf = np.asarray(pmf, dtype=np.float64)
        keep = pmf > 0
        if not np.any(keep):
            raise ValueError("pmf has no mass")
        c = np.cumsum(pmf[keep])
        return cls(support[keep], np.minimum(c, 1.0), float(min(c[-1], 1.0)), provenance)

    @classmethod
    def from_samples(cls, samples, provenance: str = "") -> DiscreteCdf:
        vals, counts = np.unique(np.asarray(samples), return_counts=True)
        return cls(vals, np.cumsum(counts) / counts.sum(), 1.0, provenance or f"monte-carlo:{counts.sum()}")

    def standardized(self, mean: float, sd: float) -> DiscreteCdf:
        if not sd > 0:
            raise ValueError("standard deviation must be positive")
        return DiscreteCdf((self.support - mean) / sd, self.cdf, self.total_mass, self.provenance)

    def mean(self) -> float:
        pmf = np.diff(self.cdf, prepend=0.0)
        return float(np.dot(pmf, self.support))

    def to_text(self) -> str:
        lines = [f"# provenance={self.provenance}", f"# total_mass={self.total_mass!r}", "# x F(x)"]
        lines += [f"{x:.17g} {c:.17g}" for x, c in zip(self.support, self.cdf)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class HittingLaw:
    """Unstandardized law of T_n: P(T_n = times[k]) = pmf[k], plus lost mass."""

    n: int
    times: np.ndarray = field(repr=False)
    pmf: np.ndarray = field(repr=False)
    leftover: float
    method: str

    @property
    def total_mass(self) -> float:
        return float(self.pmf.sum())

    def cdf(self) -> DiscreteCdf:
        return DiscreteCdf.from_pmf(self.times, self.pmf, self.method)

    def mean(self) -> float:
        return float(np.dot(self.times, self.pmf))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _accel_mask(env: Environment) -> np.ndarray:
    om = env.omegas
    bounce = np.zeros(om.size)
    bounce[1:] = (1.0 - om[1:]) * om[:-1]
    mask = bounce > BOUNCE_ACCEL
    # two left steps must be possible, otherwise the exit split degenerates
    mask[:2] = False
    mask[1:] &= om[:-1] < 1.0
    return mask


def _targets(env: Environment, start: int, targets) -> tuple[int, np.ndarray]:
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if np.any(np.diff(t) <= 0):
        raise ValueError("targets must be strictly increasing")
    if not env.left <= start < t[0]:
        raise ValueError(f"need left <= start < first target, got start={start}, target={int(t[0])}")
    if t[-1] > env.right + 1:
        raise ValueError(f"target {int(t[-1])} beyond {env.right + 1}")
    return start - env.left, t - env.left


def sample_hitting_time(env: Environment, start: int, target: int, rng: np.random.Generator, budget: int = DEFAULT_BUDGET) -> int:
    """One draw of the first time the walk from ``start`` reaches ``target``."""
    s, t = _targets(env, start, [target])
    times, _, trunc = _kernels.walk_hitting_times(env.omegas, s, t, 1, rng, budget, _accel_mask(env))
    if trunc:
        raise RuntimeError(f"step budget {budget} exhausted before reaching {target}")
    return int(times[0, 0])


def sample_hitting_times(
    env: Environment,
    start: int,
    targets,
    n_samples: int,
    seed: int,
    stream: int = 0,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """``n_samples`` joint draws of the hitting times of each target.

    Samples come in chunks of ``CHUNK``; chunk c uses the random stream
    ``(WALK, stream, c)`` under ``seed``. Returns shape (n_samples, n_targets).
    """
    s, t = _targets(env, start, targets)
    accel = _accel_mask(env)
    out = np.empty((n_samples, t.size), dtype=np.int64)
    used = 0
    for c, lo in enumerate(range(0, n_samples, CHUNK)):
        m = min(CHUNK, n_samples - lo)
        rng = generator(seed, WALK, stream, c)
        times, steps, trunc = _kernels.walk_hitting_times(env.omegas, s, t, m, rng, budget - used, accel)
        used = steps + used
        if trunc:
            raise RuntimeError(
                f"step budget {budget} exhausted after {lo} complete samples (stream {stream}, chunk {c})"
            )
        out[lo : lo + m] = times
    return out


def sample_crossing_times(env: Environment, i: int, n_samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """Draws of tau_i, the time to go from i - 1 to i."""
    return sample_hitting_times(env, i - 1, [i], n_samples, seed, stream)[:, 0]


# ---------------------------------------------------------------------------
# exact laws
# ---------------------------------------------------------------------------


def _profile(env, profile):
    return profile if profile is not None else moment_profile(env)


def default_horizon(mean: float, var: float, n: int) -> int:
    h = math.ceil(mean + 12.0 * math.sqrt(var))
    return h + ((h - n) % 2)


def exact_hitting_pmf(
    env: Environment,
    n: int,
    horizon: int | None = None,
    eps: float = 1e-6,
    max_horizon: int = 1 << 26,
    profile: MomentProfile | None = None,
) -> HittingLaw:
    """Law of T_n from 0 by forward propagation of the quenched mass.

    The horizon defaults to mean + 12 sd (matching the parity of n) and is
    doubled while more than ``eps`` mass remains unabsorbed, up to
    ``max_horizon``; the last result is returned either way.
    """
    if not 0 < n <= env.right + 1:
        raise ValueError(f"n must lie in [1, {env.right + 1}], got {n}")
    prof = _profile(env, profile)
    if horizon is None:
        horizon = default_horizon(prof.hitting_mean(n), prof.hitting_var(n), n)
    if horizon < n:
        raise ValueError(f"horizon {horizon} is below n={n}")
    start, target = -env.left, n - env.left
    while True:
        pmf, leftover = _kernels.hitting_pmf_dp(env.omegas, start, target, int(horizon))
        if leftover <= eps or 2 * horizon > max_horizon:
            break
        horizon *= 2
    t = np.arange(pmf.size)
    keep = pmf > 0
    return HittingLaw(n, t[keep], pmf[keep], float(leftover), f"exact:{horizon}")


def _next_pow2(x: float) -> int:
    return 1 << max(4, math.ceil(math.log2(max(x, 16.0))))


def spectral_hitting_pmf(
    env: Environment,
    n: int,
    profile: MomentProfile | None = None,
    tol: float = 1e-17,
    max_fft: int = 1 << 24,
) -> HittingLaw:
    """Law of T_n from 0 by inverting the characteristic function of (T_n - n)/2.

    The transform of the per-site excursion count obeys
    H_i(z) = omega_{i-1} / (1 - (1 - omega_{i-1}) z H_{i-1}(z)), and the count
    for T_n is the product over sites 1..n. The lattice of size N is placed
    around the mean and doubled until its upper eighth carries no mass.
    """
    if not 0 < n <= env.right + 1:
        raise ValueError(f"n must lie in [1, {env.right + 1}], got {n}")
    prof = _profile(env, profile)
    sl = prof.window(1, n)
    e, v = prof.e[sl], prof.v[sl]
    mean_k = (e.sum() - n) / 2.0
    sd_k = math.sqrt(v.sum()) / 2.0
    # raw second moment of the per-site counts, to keep k0 well below the bulk
    second = np.sum((v + e * e - 2.0 * e + 1.0) / 4.0)
    k0 = max(0, math.floor(mean_k - 15.0 * math.sqrt(second)))
    n_fft = _next_pow2(mean_k + 12.0 * sd_k + 20.0 * float(np.sqrt(v.max())) - k0)
    zero_p = -env.left
    grid = np.array([zero_p + n], dtype=np.int64)
    while True:
        n_freq = n_fft // 2 + 1
        phi = _kernels.excursion_cf(env.omegas, zero_p, grid, n_freq, n_fft, tol)[0]
        # shift so that index r holds P(K = k0 + r) modulo aliasing
        j = np.arange(n_freq)
        phi = phi * np.exp(-2j * np.pi * j * (k0 % n_fft) / n_fft)
        p = np.fft.irfft(np.conj(phi), n_fft)
        # signed sums: the absolute values only measure rounding noise
        top = abs(p[-(n_fft // 8) :].sum())
        bottom = abs(p[: n_fft // 16].sum()) if k0 > 0 else 0.0
        if (top < 1e-10 and bottom < 1e-10 and abs(p.sum() - 1.0) < 1e-9) or 2 * n_fft > max_fft:
            break
        n_fft *= 2
    p = np.clip(p, 0.0, None)
    lost = float(max(0.0, 1.0 - p.sum()))
    times = n + 2 * (k0 + np.arange(n_fft))
    keep = p > 0
    return HittingLaw(n, times[keep], p[keep], lost, f"spectral:{n_fft}")


# ---------------------------------------------------------------------------
# Kolmogorov distance
# ---------------------------------------------------------------------------


def ks_distance(cdf: DiscreteCdf) -> float:
    """sup_x |F(x) - Phi(x)| for a step function F.

    At each atom both the value and the left limit are compared with Phi;
    right of the last atom F stays at ``total_mass``.
    """
    phi = normal_cdf(cdf.support)
    before = np.concatenate([[0.0], cdf.cdf[:-1]])
    d = max(float(np.max(np.abs(cdf.cdf - phi))), float(np.max(np.abs(before - phi))))
    # beyond the last atom sup |total - Phi| is approached as x -> inf
    return max(d, 1.0 - cdf.total_mass)


def lattice_floor(env: Environment, n: int, profile: MomentProfile | None = None) -> float:
    """(Phi(1 / sd(T_n)) - 1/2) / 2, a lower bound on the KS distance."""
    var = _profile(env, profile).hitting_var(n)
    if not var > 0:
        raise ValueError("Var(T_n) is zero; the standardized law is undefined")
    return 0.5 * (float(normal_cdf(1.0 / math.sqrt(var))) - 0.5)


def hitting_law(
    env: Environment,
    n: int,
    method: str = "spectral",
    *,
    samples: int = 100_000,
    seed: int = 0,
    stream: int = 0,
    horizon: int | None = None,
    eps: float = 1e-6,
    profile: MomentProfile | None = None,
) -> DiscreteCdf:
    """Unstandardized law of T_n by the requested method."""
    if method == "monte-carlo":
        if samples < 1000:
            raise ValueError(f"monte-carlo needs at least 1000 samples, got {samples}")
        t = sample_hitting_times(env, 0, [n], samples, seed, stream)[:, 0]
        return DiscreteCdf.from_samples(t, f"monte-carlo:{samples}")
    if method == "exact":
        law = exact_hitting_pmf(env, n, horizon, eps, profile=profile)
    elif method == "spectral":
        law = spectral_hitting_pmf(env, n, profile)
    else:
        raise ValueError(f"unknown method {method!r}; use monte-carlo, exact or spectral")
    if law.leftover > eps:
        raise LeftoverMassError(f"{law.method}: {law.leftover:.3g} mass unabsorbed at n={n} (allowed {eps:g})")
    return law.cdf()


def ks_to_normal(env: Environment, n: int, method: str = "spectral", profile: MomentProfile | None = None, **kw) -> float:
    """Kolmogorov distance between standardized T_n and the standard normal.

    Standardization always uses the exact quenched mean and variance.
    ``method`` is ``"monte-carlo"`` (keywords ``samples``, ``seed``,
    ``stream``), ``"exact"`` (``horizon``, ``eps``) or ``"spectral"``.
    """
    prof = _profile(env, profile)
    mean, var = prof.hitting_mean(n), prof.hitting_var(n)
    if not var > 0:
        raise ValueError("Var(T_n) is zero; the standardized law is undefined")
    cdf = hitting_law(env, n, method, profile=prof, **kw)
    return ks_distance(cdf.standardized(mean, math.sqrt(var)))
