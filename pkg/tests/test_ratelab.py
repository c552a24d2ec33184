import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rwre import ratelab
from rwre.environment import Beta, Environment, TwoPoint, constant_law, ladder_decompose, sample_env_P
from rwre.moments import MomentProfile, fifth_abs_central_bound, moment_profile
from rwre.ratelab import (
    annealed_site_variance,
    band_fractions,
    be_upper,
    binomial_stein_oracle,
    fit_stein_constant,
    fresh_site_variance,
    m3_lln_experiment,
    rate_experiment,
    rate_scaling,
    relative_iqr,
    stable_sum_experiment,
    stein_lower,
    stein_pieces,
    sum_growth,
    tail_verdicts,
    window_trend,
)
from rwre.walk import ks_to_normal, lattice_floor


def test_be_upper_arithmetic():
    prof = MomentProfile(-1, np.array([1.0, 1.0]), np.array([0.0, 4.0]), np.array([1.0, 8.0]))
    assert be_upper(prof, 1, C1=1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        be_upper(MomentProfile(-1, np.ones(2), np.zeros(2), np.ones(2)), 1)


def test_be_upper_constant_environment():
    env = sample_env_P(constant_law(0.75), -200, 120, 1)
    prof = moment_profile(env)
    assert be_upper(prof, 100) == pytest.approx(0.56 * 11000 / 600**1.5, rel=1e-9)
    assert be_upper(prof, 100) == pytest.approx(0.419, abs=1e-3)


def test_be_and_floor_bracket_ks():
    law = TwoPoint.for_kappa(2.5)
    rng = np.random.default_rng(2024)
    for k in range(50):
        n = int(rng.integers(2, 2000))
        env = sample_env_P(law, -ratelab.env_margin(n), n, 500 + k)
        prof = moment_profile(env)
        ks = ks_to_normal(env, n, "spectral", prof)
        assert lattice_floor(env, n, prof) <= ks <= be_upper(prof, n)


# -- Stein pieces -----------------------------------------------------------


def test_stein_symmetric_terms():
    assert stein_pieces(np.zeros(5), np.ones(5), np.ones(5)).main == 0.0
    with pytest.raises(ValueError):
        stein_pieces([1.0], [1.0], [0.0])


@given(
    st.lists(st.tuples(st.floats(-10, 10), st.floats(0, 100), st.floats(0.01, 10)), min_size=1, max_size=20),
    st.floats(0.01, 100),
)
def test_stein_pieces_scale_free(terms, scale):
    c3, a5, v = map(np.array, zip(*terms))
    base = stein_pieces(c3, a5, v)
    scaled = stein_pieces(c3 * scale**3, a5 * scale**5, v * scale**2)
    for name in ("main", "penalty", "variance_penalty"):
        assert getattr(scaled, name) == pytest.approx(getattr(base, name), rel=1e-10, abs=1e-300)


def test_binomial_oracle_terms():
    p = 0.1
    for n in (1, 10, 30):
        row = binomial_stein_oracle(n, p)
        skew = (1 - 2 * p) / math.sqrt(n * p * (1 - p))
        assert row["main"] == pytest.approx(0.25 * skew, rel=1e-12)
        assert row["variance_penalty"] == pytest.approx(1 / n, rel=1e-12)
        # KS by brute force on a fine grid around every atom
        k = np.arange(n + 1)
        x = (k - n * p) / math.sqrt(n * p * (1 - p))
        F = stats.binom.cdf(k, n, p)
        Fm = np.concatenate([[0.0], F[:-1]])
        brute = max(np.max(np.abs(F - stats.norm.cdf(x))), np.max(np.abs(Fm - stats.norm.cdf(x))))
        assert row["ks"] == pytest.approx(brute, abs=1e-14)


def test_fit_stein_constant():
    rows = [binomial_stein_oracle(n) for n in range(1, 31)]
    fit = fit_stein_constant(rows)
    for r in rows:
        assert fit["C"] * (r["ks"] + r["variance_penalty"]) >= r["main"] - r["penalty"] - 1e-15
    assert fit["C"] == pytest.approx(0.6576, abs=1e-4)
    assert fit["C_10"] == pytest.approx(0.5558, abs=1e-4)


def test_stein_main_term_tracks_traps():
    # six left-leaning sites plant a valley carrying ~40% of Var(T_n)
    law = TwoPoint.for_kappa(2.5)
    base = sample_env_P(law, -100, 4096, 3)
    om = base.omegas.copy()
    om[base.pos(2000) : base.pos(2006)] = 1 / 3
    env = Environment(base.left, om)
    n = 4096
    flat = stein_lower(moment_profile(base, order=5), n)
    prof = moment_profile(env, order=5)
    trap = stein_lower(prof, n)
    assert trap.net > 0
    assert trap.main > flat.main
    # sum c3 >= 16 sum M^3 gives main >= 4 sum M^3 / Var^{3/2}
    dec = ladder_decompose(env)
    inside = dec.nus[1:] <= n
    assert trap.main >= 4 * np.sum(dec.heights[inside] ** 3) / prof.hitting_var(n) ** 1.5


# -- scaling and trends -----------------------------------------------------


def test_rate_scaling_regimes():
    n = np.array([1024.0, 4096.0])
    assert np.allclose(rate_scaling(2.5, n), n**0.3)
    assert np.allclose(rate_scaling(3.0, n), np.sqrt(n) / np.log(n))
    # a root-found kappa for the q = 8/9 law lands a hair below 3
    k3 = TwoPoint(2 / 3, 1 / 3, 8 / 9).kappa
    assert np.allclose(rate_scaling(k3, n), np.sqrt(n) / np.log(n))
    assert np.allclose(rate_scaling(4.0, n), np.sqrt(n))


def test_window_trend():
    up_down = window_trend([5, 4, 6, 3, 7, 2], 3)
    assert up_down["trend"]
    assert list(up_down["window_min"]) == [4, 3, 2]
    assert list(up_down["window_max"]) == [5, 6, 7]
    assert not window_trend([1, 2, 3, 4, 5, 6], 3)["trend"]
    assert list(window_trend([3, 1, 2], 1)["running_min"]) == [3, 1, 1]


def test_band_fractions():
    table = np.array([[1.0, 0.6, 5.0], [2.0, 0.4, 3.0]])
    b = band_fractions(table)
    assert (b["band_lo"], b["band_hi"]) == (0.5, 4.0)
    assert list(b["fraction_inside"]) == [1.0, 0.5, 0.5]


def test_rate_experiment_small_and_deterministic():
    law = TwoPoint.for_kappa(2.5)
    grid = [16, 64, 256, 1024]
    rows, v = rate_experiment(law, grid, 3, 7)
    rows2, _ = rate_experiment(law, grid, 3, 7)
    assert rows == rows2
    assert len(rows) == 12
    assert v["hard_ok"] and v["be_violations"] == 0
    with pytest.raises(ValueError, match="grid too small"):
        rate_experiment(law, grid[:3], 1, 7)


def test_large_kappa_root_n_scaling():
    law = TwoPoint.for_kappa(6.0)
    grid = [2**k for k in range(8, 15)]
    rows, v = rate_experiment(law, grid, 3, 11)
    assert v["hard_ok"]
    for r in rows:
        sigma = math.sqrt(r["var"] / r["n"])
        lower = 1 / (2 * math.sqrt(2 * math.pi) * sigma)
        assert r["scaled"] >= math.sqrt(r["n"]) * r["floor"]
        assert math.sqrt(r["n"]) * r["floor"] == pytest.approx(lower, rel=1e-3)
        assert r["scaled"] <= math.sqrt(r["n"]) * r["be"]


# -- variance and growth ----------------------------------------------------


def test_annealed_variance_closed_form():
    assert annealed_site_variance(constant_law(0.75)) == pytest.approx(6.0, rel=1e-12)
    assert annealed_site_variance(TwoPoint.for_kappa(1.5)) == math.inf


def test_annealed_variance_matches_fresh_draws():
    law = TwoPoint.for_kappa(6.0)
    mean, se = fresh_site_variance(law, 4000, 3, margin=100)
    assert abs(mean - annealed_site_variance(law)) < 4 * se


def test_sum_growth_definition():
    env = sample_env_P(TwoPoint.for_kappa(2.5), -60, 512, 4)
    prof = moment_profile(env, order=5)
    g = sum_growth(prof, [64, 512], 2.5)
    sl = prof.window(1, 64)
    assert g["var_sq"][0] == pytest.approx(np.sum(prof.v[sl] ** 2) / 64**1.7, rel=1e-12)
    assert g["fifth"][0] == pytest.approx(np.sum(fifth_abs_central_bound(prof)[sl]) / 64**2.2, rel=1e-12)


# -- block experiments ------------------------------------------------------


def test_stable_small_run():
    law = Beta.for_kappa(2.5, 3.0)
    rows, v = stable_sum_experiment(law, [256, 1024], 200, 3)
    assert v["stable_index"] == pytest.approx(2.5 / 3)
    assert v["p_below_eps_1024"] == pytest.approx(0.1, abs=0.01)
    assert 0.02 < v["p_below_eps_256"] < 0.98
    assert v["skew_1024"] > 0
    assert len(rows) == 400
    with pytest.raises(ValueError, match="kappa < 3"):
        stable_sum_experiment(TwoPoint(2 / 3, 1 / 3, 8 / 9), [16, 32], 2, 1)


def test_tail_verdicts_truncated_moments():
    rng = np.random.default_rng(5)
    M = rng.pareto(3.0, 5000) + 1
    rows = [{"M": m, "mu": 2 * m, "s2": m * m} for m in M]
    v = tail_verdicts(rows, 3.0, trunc_n=(1024, 4096), max_lag=3)
    x = np.minimum((2 * M) ** 3, 1024 * math.sqrt(math.log(1024)))
    assert v["trunc_mean_1024"] == pytest.approx(x.mean() / math.log(1024), rel=1e-12)
    assert v["trunc_var_1024"] == pytest.approx(x.var(ddof=1) / (1024 * math.sqrt(math.log(1024))), rel=1e-12)
    assert v["m3_lln_1024"] == pytest.approx(np.sum(M[:1024] ** 3) / (1024 * math.log(1024)), rel=1e-12)
    assert "cov_lag_3" in v and v["low_power"]
    assert v["hill_M"] == pytest.approx(3.0, rel=0.3)


def test_lag_covariance_decays():
    rows, v = ratelab.tail_experiment(TwoPoint(2 / 3, 1 / 3, 8 / 9), 100_000, 2)
    assert abs(v["cov_lag_10"]) < abs(v["cov_lag_1"])


def test_m3_lln_small_run():
    rows, v = m3_lln_experiment(TwoPoint(2 / 3, 1 / 3, 8 / 9), [64, 256], 20, 1)
    assert set(v) == {"rel_iqr_64", "rel_iqr_256", "median_64", "median_256"}
    assert all(r["value"] > 0 for r in rows)


def test_relative_iqr():
    assert relative_iqr([1, 2, 3, 4, 5]) == pytest.approx((4 - 2) / 3)
