"""Normal-approximation bounds and the rate experiments.

Experiments return plain records (lists of dicts, one per row) together with
the verdicts computed from them; every verdict function takes records only,
so a summary can be recomputed from a records file alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from rwre.environment import (
    EnvironmentLaw,
    hill_tail_index,
    kappa_of_law,
    sample_env_P,
    sample_env_Q,
)
from rwre.moments import (
    MomentProfile,
    block_moments,
    fifth_abs_central_bound,
    moment_profile,
)
from rwre.seeding import ENV, FRESH, QBLOCKS, derive_seed
from rwre.walk import hitting_law, ks_distance, lattice_floor

__all__ = [
    "BE_CONSTANT",
    "SteinPieces",
    "RateSeries",
    "StableSumSample",
    "be_upper",
    "stein_pieces",
    "stein_lower",
    "binomial_stein_oracle",
    "fit_stein_constant",
    "rate_scaling",
    "rate_series",
    "rate_experiment",
    "rate_verdicts",
    "window_trend",
    "band_fractions",
    "stable_sum_experiment",
    "stable_verdicts",
    "tail_experiment",
    "tail_verdicts",
    "m3_lln_experiment",
    "relative_iqr",
    "sum_growth",
    "annealed_site_variance",
    "fresh_site_variance",
    "env_margin",
]

#: Default Berry-Esseen constant for sums of independent, non-identical terms.
BE_CONSTANT = 0.56

#: Root-finding slack: a solved kappa this close to 3 is the boundary case.
KAPPA3_TOL = 1e-6


def env_margin(n_max: int) -> int:
    """Sites kept left of 0 so truncation at the reflection is negligible."""
    return max(50, math.ceil(10 * math.log(max(n_max, 2))))


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def be_upper(profile: MomentProfile, n: int, C1: float = BE_CONSTANT) -> float:
    """C1 * sum_{k<=n} E[tau_k^3] / Var(T_n)^{3/2}."""
    sl = profile.window(1, n)
    var = float(profile.v[sl].sum())
    if not var > 0:
        raise ValueError("Var(T_n) is zero; the bound is undefined")
    return C1 * float(profile.t3[sl].sum()) / var**1.5


@dataclass(frozen=True)
class SteinPieces:
    """Terms of the Stein lower bound for a standardized sum.

    The bound reads C * (KS + variance_penalty) >= main - penalty.
    """

    main: float
    penalty: float
    variance_penalty: float

    @property
    def net(self) -> float:
        return self.main - self.penalty


def stein_pieces(c3, abs5, var_terms) -> SteinPieces:
    """Pieces from per-summand centered third moments, fifth absolute
    moments and variances (all unstandardized)."""
    c3 = np.asarray(c3, dtype=np.float64)
    abs5 = np.asarray(abs5, dtype=np.float64)
    var_terms = np.asarray(var_terms, dtype=np.float64)
    total = float(var_terms.sum())
    if not total > 0:
        raise ValueError("total variance is zero")
    main = 0.25 * abs(float(c3.sum())) / total**1.5
    penalty = float(abs5.sum()) / 32.0 / total**2.5
    vp = float(np.sum(var_terms**2)) / total**2
    return SteinPieces(main, penalty, vp)


def stein_lower(profile: MomentProfile, n: int) -> SteinPieces:
    """Stein pieces for T_n, using the raw-moment bound on E|tau - e|^5."""
    sl = profile.window(1, n)
    b5 = fifth_abs_central_bound(profile)[sl]
    return stein_pieces(profile.c3[sl], b5, profile.v[sl])


def binomial_stein_oracle(n: int, p: float = 0.1) -> dict[str, float]:
    """Exact KS and Stein pieces for a standardized Binomial(n, p) sum."""
    q = 1.0 - p
    k = np.arange(n + 1)
    pmf = stats.binom.pmf(k, n, p)
    sd = math.sqrt(n * p * q)
    from rwre.walk import DiscreteCdf

    ks = ks_distance(DiscreteCdf.from_pmf((k - n * p) / sd, pmf, f"binomial:{n}"))
    c3 = np.full(n, p * q * (q - p))
    abs5 = np.full(n, p * q**5 + q * p**5)
    pieces = stein_pieces(c3, abs5, np.full(n, p * q))
    return {
        "n": n,
        "ks": ks,
        "main": pieces.main,
        "penalty": pieces.penalty,
        "variance_penalty": pieces.variance_penalty,
        "ratio": pieces.net / (ks + pieces.variance_penalty),
    }


def fit_stein_constant(rows) -> dict[str, float]:
    """Smallest C with C * (KS + vp) >= main - penalty over all rows."""
    ratios = {int(r["n"]): float(r["ratio"]) for r in rows}
    c = max(max(ratios.values()), 0.0)
    return {"C": c, **{f"C_{n}": v for n, v in sorted(ratios.items())}}


# ---------------------------------------------------------------------------
# rate series
# ---------------------------------------------------------------------------


def rate_scaling(kappa: float, n) -> np.ndarray:
    """n^{3/2 - 3/kappa} for kappa < 3, sqrt(n)/log n at 3, sqrt(n) above.

    Solved kappas within ``KAPPA3_TOL`` of 3 count as 3.
    """
    n = np.asarray(n, dtype=np.float64)
    if abs(kappa - 3.0) <= KAPPA3_TOL:
        return np.sqrt(n) / np.log(n)
    if kappa < 3:
        return n ** (1.5 - 3.0 / kappa)
    return np.sqrt(n)


@dataclass(frozen=True, eq=False)
class RateSeries:
    """KS distance and its companions along an increasing grid of n."""

    env_seed: int
    kappa: float
    n_grid: np.ndarray
    ks: np.ndarray = field(repr=False)
    scaled: np.ndarray = field(repr=False)
    be: np.ndarray = field(repr=False)
    floor: np.ndarray = field(repr=False)
    stein_main: np.ndarray = field(repr=False)
    stein_penalty: np.ndarray = field(repr=False)
    variance_penalty: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    var: np.ndarray = field(repr=False)


def _check_grid(n_grid, min_points: int = 4) -> np.ndarray:
    g = np.asarray(n_grid, dtype=np.int64)
    if g.ndim != 1 or g.size < min_points:
        raise ValueError(f"grid too small: need at least {min_points} points, got {g.size}")
    if np.any(np.diff(g) <= 0) or g[0] < 1:
        raise ValueError("grid must be strictly increasing positive integers")
    return g


def rate_series(
    env,
    n_grid,
    kappa: float,
    method: str = "spectral",
    C1: float = BE_CONSTANT,
    mc_samples: int = 100_000,
    seed: int = 0,
    profile: MomentProfile | None = None,
) -> RateSeries:
    """KS, bounds and Stein pieces of T_n for each n on the grid."""
    g = np.asarray(n_grid, dtype=np.int64)
    prof = profile if profile is not None else moment_profile(env, order=5)
    cols = {k: np.empty(g.size) for k in ("ks", "be", "floor", "main", "pen", "vp", "mean", "var")}
    for j, n in enumerate(g):
        n = int(n)
        mean, var = prof.hitting_mean(n), prof.hitting_var(n)
        law = hitting_law(env, n, method, samples=mc_samples, seed=seed, stream=j, profile=prof)
        cols["ks"][j] = ks_distance(law.standardized(mean, math.sqrt(var)))
        cols["be"][j] = be_upper(prof, n, C1)
        cols["floor"][j] = lattice_floor(env, n, prof)
        sp = stein_lower(prof, n)
        cols["main"][j], cols["pen"][j], cols["vp"][j] = sp.main, sp.penalty, sp.variance_penalty
        cols["mean"][j], cols["var"][j] = mean, var
    return RateSeries(
        env.seed if env.seed is not None else -1,
        kappa,
        g,
        cols["ks"],
        cols["ks"] * rate_scaling(kappa, g),
        cols["be"],
        cols["floor"],
        cols["main"],
        cols["pen"],
        cols["vp"],
        cols["mean"],
        cols["var"],
    )


def rate_records(replica: int, series: RateSeries, method: str) -> list[dict]:
    rows = []
    for j, n in enumerate(series.n_grid):
        rows.append(
            {
                "replica": replica,
                "env_seed": series.env_seed,
                "n": int(n),
                "method": method,
                "ks": series.ks[j],
                "scaled": series.scaled[j],
                "be": series.be[j],
                "floor": series.floor[j],
                "stein_main": series.stein_main[j],
                "stein_penalty": series.stein_penalty[j],
                "variance_penalty": series.variance_penalty[j],
                "mean": series.mean[j],
                "var": series.var[j],
            }
        )
    return rows


def rate_replica(law: EnvironmentLaw, n_grid, replica: int, seed: int, kappa: float, method: str, C1: float, mc_samples: int) -> list[dict]:
    """Records of one replica environment; a pure function of its arguments."""
    g = _check_grid(n_grid)
    env_seed = derive_seed(seed, ENV, replica)
    env = sample_env_P(law, -env_margin(int(g[-1])), int(g[-1]), env_seed)
    series = rate_series(env, g, kappa, method, C1, mc_samples, derive_seed(seed, FRESH, replica))
    return rate_records(replica, series, method)


def rate_experiment(
    law: EnvironmentLaw,
    n_grid,
    replicas: int,
    seed: int,
    method: str = "spectral",
    C1: float = BE_CONSTANT,
    mc_samples: int = 100_000,
    n_windows: int = 3,
) -> tuple[list[dict], dict]:
    """Scaled KS along ``n_grid`` for independent environments.

    Returns (records, verdicts); see :func:`rate_verdicts`.
    """
    g = _check_grid(n_grid)
    kappa = kappa_of_law(law)
    rows = []
    for r in range(replicas):
        rows += rate_replica(law, g, r, seed, kappa, method, C1, mc_samples)
    return rows, rate_verdicts(rows, kappa, n_windows)


def window_trend(values, n_windows: int = 3) -> dict:
    """Minima and maxima over consecutive windows of a series.

    The trend holds when window minima are nonincreasing and window maxima
    nondecreasing. Running (cumulative) extremes are returned as well.
    """
    v = np.asarray(values, dtype=np.float64)
    parts = np.array_split(v, n_windows)
    mins = np.array([p.min() for p in parts])
    maxs = np.array([p.max() for p in parts])
    return {
        "window_min": mins,
        "window_max": maxs,
        "running_min": np.minimum.accumulate(v),
        "running_max": np.maximum.accumulate(v),
        "trend": bool(np.all(np.diff(mins) <= 0) and np.all(np.diff(maxs) >= 0)),
    }


def band_fractions(table: np.ndarray) -> dict:
    """Fraction of replicas (rows) inside [0.5 min, 2 max] of the first column."""
    lo = 0.5 * float(table[:, 0].min())
    hi = 2.0 * float(table[:, 0].max())
    inside = (table >= lo) & (table <= hi)
    return {"band_lo": lo, "band_hi": hi, "fraction_inside": inside.mean(axis=0)}


def _by_replica(rows, key):
    reps = sorted({r["replica"] for r in rows})
    grid = sorted({r["n"] for r in rows})
    table = np.full((len(reps), len(grid)), np.nan)
    ri = {r: k for k, r in enumerate(reps)}
    gi = {n: k for k, n in enumerate(grid)}
    for row in rows:
        table[ri[row["replica"]], gi[row["n"]]] = float(row[key])
    return np.array(grid), table


def rate_verdicts(rows, kappa: float, n_windows: int = 3) -> dict:
    """Invariant and trend verdicts from rate records."""
    ks = np.array([float(r["ks"]) for r in rows])
    be = np.array([float(r["be"]) for r in rows])
    fl = np.array([float(r["floor"]) for r in rows])
    grid, scaled = _by_replica(rows, "scaled")
    trends = [window_trend(row, n_windows)["trend"] for row in scaled]
    out = {
        "kappa": kappa,
        "replicas": scaled.shape[0],
        "grid": ",".join(str(int(n)) for n in grid),
        "be_violations": int(np.sum(ks > be)),
        "floor_violations": int(np.sum(fl > ks)),
        "trend_fraction": float(np.mean(trends)),
    }
    band = band_fractions(scaled)
    out["band_lo"] = band["band_lo"]
    out["band_hi"] = band["band_hi"]
    out["band_min_fraction"] = float(band["fraction_inside"][1:].min())
    out["hard_ok"] = out["be_violations"] == 0 and out["floor_violations"] == 0
    return out


# ---------------------------------------------------------------------------
# block-sum experiments under Q
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StableSumSample:
    """n^{-3/kappa} sum_{i<=n} mu_i^3 for each replica and each n."""

    kappa: float
    n_values: np.ndarray
    values: np.ndarray = field(repr=False)  # (replicas, len(n_values))
    seeds: np.ndarray = field(repr=False)


def _q_blocks(law, n_blocks, seed, with_moments=True):
    env, dec = sample_env_Q(law, n_blocks, seed)
    if not with_moments:
        return env, dec, None
    return env, dec, block_moments(env, dec, moment_profile(env))


def stable_replica(law, n_values, replica: int, seed: int, kappa: float) -> list[dict]:
    n_values = np.asarray(n_values, dtype=np.int64)
    s = derive_seed(seed, QBLOCKS, replica)
    _, _, bm = _q_blocks(law, int(n_values[-1]), s)
    cs = np.cumsum(bm.mu**3)
    return [
        {"replica": replica, "block_seed": s, "n": int(n), "value": cs[n - 1] / float(n) ** (3.0 / kappa)}
        for n in n_values
    ]


def stable_sum_experiment(law: EnvironmentLaw, n_values, replicas: int, seed: int, eps_quantile: float = 0.1) -> tuple[list[dict], dict]:
    """Scaled block sums n^{-3/kappa} sum mu_i^3 across Q-sampled replicas."""
    kappa = kappa_of_law(law)
    if not kappa < 3.0 - KAPPA3_TOL:
        raise ValueError(f"the stable-sum experiment needs kappa < 3, got {kappa}")
    n_values = np.asarray(sorted(int(n) for n in n_values), dtype=np.int64)
    rows = []
    for r in range(replicas):
        rows += stable_replica(law, n_values, r, seed, kappa)
    return rows, stable_verdicts(rows, kappa, eps_quantile)


def stable_verdicts(rows, kappa: float, eps_quantile: float = 0.1) -> dict:
    grid, table = _by_replica(rows, "value")
    out = {"kappa": kappa, "stable_index": kappa / 3.0, "replicas": table.shape[0]}
    for j in range(grid.size - 1):
        d = stats.ks_2samp(table[:, j], table[:, -1]).statistic
        out[f"ks2_{grid[j]}_vs_{grid[-1]}"] = float(d)
    eps = float(np.quantile(table[:, -1], eps_quantile))
    out["eps"] = eps
    for j, n in enumerate(grid):
        out[f"p_below_eps_{n}"] = float(np.mean(table[:, j] < eps))
        out[f"skew_{n}"] = float(stats.skew(np.log(table[:, j])))
    return out


def annealed_site_variance(law: EnvironmentLaw) -> float:
    """E[Var(tau_1)] under an i.i.d. law, from E[rho] and E[rho^2].

    With W = rho (1 + W') and g = E[W + W^2], E[Var(tau_1)] =
    4 g + 8 g E[rho] / (1 - E[rho]). Finite iff E[rho^2] < 1.
    """
    r1, r2 = law.rho_moment(1.0), law.rho_moment(2.0)
    if not (r1 < 1 and r2 < 1):
        return math.inf
    ew = r1 / (1 - r1)
    ew2 = r2 * (1 + 2 * ew) / (1 - r2)
    g = ew + ew2
    return 4 * g + 8 * g * r1 / (1 - r1)


def fresh_site_variance(law: EnvironmentLaw, draws: int, seed: int, margin: int = 200) -> tuple[float, float]:
    """Monte-Carlo mean (and standard error) of Var(tau_1) over fresh environments."""
    vals = np.empty(draws)
    for k in range(draws):
        env = sample_env_P(law, -margin, 0, derive_seed(seed, FRESH, k))
        prof = moment_profile(env)
        vals[k] = prof.v[prof.index(1)]
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


def sum_growth(profile: MomentProfile, n_grid, kappa: float) -> dict[str, np.ndarray]:
    """n^{-(1/2+3/kappa)} sum v_i^2 and n^{-(1+3/kappa)} sum (fifth-moment bound)."""
    g = np.asarray(n_grid, dtype=np.int64)
    i1 = profile.index(1)
    v2 = np.cumsum(profile.v[i1:] ** 2)
    b5 = np.cumsum(fifth_abs_central_bound(profile)[i1:])
    return {
        "var_sq": v2[g - 1] / g ** (0.5 + 3.0 / kappa),
        "fifth": b5[g - 1] / g ** (1.0 + 3.0 / kappa),
    }


def tail_experiment(
    law: EnvironmentLaw,
    n_blocks: int,
    seed: int,
    k_order: int | None = None,
    trunc_n=(2**10, 2**12, 2**14, 2**16),
    max_lag: int = 20,
) -> tuple[list[dict], dict]:
    """Block records (length, M, mu, s2) under Q and the tail report."""
    _, dec, bm = _q_blocks(law, n_blocks, seed)
    rows = [
        {"block": i + 1, "length": int(dec.lengths[i]), "M": float(bm.heights[i]), "mu": float(bm.mu[i]), "s2": float(bm.s2[i])}
        for i in range(n_blocks)
    ]
    return rows, tail_verdicts(rows, kappa_of_law(law), k_order, trunc_n, max_lag)


def default_k_order(n: int) -> int:
    """Order statistics used by the Hill estimates: 0.2% of the sample."""
    return max(10, n // 500)


def tail_verdicts(rows, kappa: float, k_order: int | None = None, trunc_n=(2**10, 2**12, 2**14, 2**16), max_lag: int = 20) -> dict:
    M = np.array([r["M"] for r in rows], dtype=np.float64)
    mu = np.array([r["mu"] for r in rows], dtype=np.float64)
    s2 = np.array([r["s2"] for r in rows], dtype=np.float64)
    n = M.size
    k = k_order or default_k_order(n)
    out = {
        "kappa": kappa,
        "n_blocks": n,
        "k_order": k,
        "low_power": n < 10_000,
        "hill_M": hill_tail_index(M, k),
        "hill_mu": hill_tail_index(mu, k),
        "hill_s2": hill_tail_index(s2, k),
    }
    mu3 = mu**3
    for m in trunc_n:
        if m > n:
            continue
        r_n = m * math.sqrt(math.log(m))
        x = np.minimum(mu3, r_n)
        e_ratio = x.mean() / math.log(m)
        v_ratio = x.var(ddof=1) / (m * math.sqrt(math.log(m)))
        out[f"trunc_mean_{m}"] = float(e_ratio)
        out[f"trunc_var_{m}"] = float(v_ratio)
        out[f"trunc_ratio_{m}"] = float(v_ratio / (2.0 * e_ratio))
        cs = np.cumsum(M[:m] ** 3)
        out[f"m3_lln_{m}"] = float(cs[-1] / (m * math.log(m)))
    m = max([t for t in trunc_n if t <= n], default=n)
    x = np.minimum(mu3, m * math.sqrt(math.log(m)))
    x = x - x.mean()
    for lag in range(1, max_lag + 1):
        out[f"cov_lag_{lag}"] = float(np.mean(x[:-lag] * x[lag:]))
    return out


def m3_lln_experiment(law: EnvironmentLaw, n_values, replicas: int, seed: int) -> tuple[list[dict], dict]:
    """(1/(n log n)) sum_{j<=n} M_j^3 across Q-sampled replicas."""
    n_values = np.asarray(sorted(int(n) for n in n_values), dtype=np.int64)
    rows = []
    for r in range(replicas):
        s = derive_seed(seed, QBLOCKS, r)
        _, dec, _ = _q_blocks(law, int(n_values[-1]), s, with_moments=False)
        cs = np.cumsum(dec.heights**3)
        rows += [
            {"replica": r, "block_seed": s, "n": int(n), "value": cs[n - 1] / (n * math.log(n))} for n in n_values
        ]
    grid, table = _by_replica(rows, "value")
    out = {f"rel_iqr_{n}": relative_iqr(table[:, j]) for j, n in enumerate(grid)}
    out.update({f"median_{n}": float(np.median(table[:, j])) for j, n in enumerate(grid)})
    return rows, out


def relative_iqr(x) -> float:
    q1, q2, q3 = np.quantile(np.asarray(x, dtype=np.float64), [0.25, 0.5, 0.75])
    return float((q3 - q1) / q2)
