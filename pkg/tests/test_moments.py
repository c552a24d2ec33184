import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import crossing_pmf, crossing_raw_moments

from rwre.environment import Environment, TwoPoint, constant_law, env_statics, ladder_decompose, sample_env_P, sample_env_Q
from rwre.moments import (
    BlockMoments,
    block_moments,
    fifth_abs_central_bound,
    fifth_abs_central_mc,
    mean_profile,
    moment_m,
    moment_profile,
    mu_tilde_gap,
    reflect_at,
    reflection_site,
    third_profile,
    variance_profile,
)

small_omegas = st.lists(st.floats(0.3, 0.95), min_size=1, max_size=8)


def env_from(omegas, left=-1):
    return Environment(left, np.array([1.0] + list(omegas)))


def test_constant_environment_fixed_points():
    p = 0.75
    env = sample_env_P(constant_law(p), -200, 10, 1)
    prof = moment_profile(env)
    deep = prof.at(5)
    assert deep["e"] == pytest.approx(1 / (2 * p - 1), rel=1e-9)
    assert deep["v"] == pytest.approx(4 * p * (1 - p) / (2 * p - 1) ** 3, rel=1e-9)
    assert deep["t3"] == pytest.approx((1 / p + 6 * 2 * 6) / (1 - 1 / 3), rel=1e-9)
    assert deep["t3"] == pytest.approx(110, rel=1e-9)
    assert moment_m(env, 5, 2) == pytest.approx(10, rel=1e-9)


def test_reflection_adjacent_site():
    env = env_from([0.4, 0.6])
    prof = moment_profile(env, order=5)
    first = prof.at(0)
    assert first == {"e": 1.0, "v": 0.0, "t3": 1.0, "c3": 0.0, "m4": 1.0, "m5": 1.0}


def test_one_recursion_step():
    env = env_from([1 / 3, 0.5])
    assert mean_profile(env)[1] == pytest.approx(5.0, rel=1e-14)


def test_moment_m_consistency_and_errors():
    env = sample_env_P(TwoPoint.for_kappa(2.5), -30, 20, 3)
    e = mean_profile(env)
    for i in (-5, 0, 21):
        assert moment_m(env, i, 1) == pytest.approx(e[i - env.left - 1], rel=1e-12)
    with pytest.raises(ValueError):
        moment_m(env, 3, 6)
    with pytest.raises(IndexError):
        moment_m(env, 22, 2)
    with pytest.raises(ValueError):
        moment_profile(env, order=2)


@settings(max_examples=60)
@given(small_omegas, st.data())
def test_moments_match_absorbing_chain(omegas, data):
    env = env_from(omegas)
    prof = moment_profile(env, order=5)
    i = data.draw(st.integers(env.left + 1, env.right + 1))
    raw = crossing_raw_moments(env.omegas, env.left, i)
    got = prof.at(i)
    assert got["e"] == pytest.approx(raw[0], rel=1e-8)
    assert got["v"] + got["e"] ** 2 == pytest.approx(raw[1], rel=1e-8)
    assert got["t3"] == pytest.approx(raw[2], rel=1e-8)
    assert got["m4"] == pytest.approx(raw[3], rel=1e-8)
    assert got["m5"] == pytest.approx(raw[4], rel=1e-8)


@given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=50))
def test_recursion_and_lower_bound(omegas):
    env = env_from(omegas, left=-3 if len(omegas) > 3 else -1)
    e = mean_profile(env)
    w = env_statics(env).W
    om, rho = env.omegas, env.rho
    for k in range(1, e.size):
        assert e[k] == pytest.approx(1 / om[k] + rho[k] * e[k - 1], rel=1e-10)
    prof = moment_profile(env)
    assert np.all(prof.v >= 0)
    # c3_i >= 16 W_{i-1}^3, exact arithmetic with a rounding allowance
    assert np.all(prof.c3 >= 16 * w**3 * (1 - 1e-9) - 1e-9 * prof.t3)


def test_third_profile_centered():
    env = sample_env_P(TwoPoint.for_kappa(3.0), -50, 30, 8)
    t3, c3 = third_profile(env)
    prof = moment_profile(env)
    assert np.allclose(c3, prof.c3, rtol=0, atol=1e-9 * np.max(t3))


def test_strict_variant_is_shifted():
    env = env_from([0.6, 0.7, 0.8])
    loose = mean_profile(env)
    strict = mean_profile(env, strict=True)
    assert np.allclose(strict[:-1], loose[1:])
    assert np.isnan(strict[-1])
    assert variance_profile(env, strict=True).shape == loose.shape


def test_fifth_abs_bound_dominates_exact():
    env = env_from([0.45, 0.6, 0.35, 0.7])
    prof = moment_profile(env, order=5)
    bound = fifth_abs_central_bound(prof)
    for i in range(env.left + 1, env.right + 2):
        pmf = crossing_pmf(env.omegas, env.left, i, 20000)
        t = np.arange(pmf.size)
        exact = float(np.sum(pmf * np.abs(t - prof.at(i)["e"]) ** 5))
        assert bound[prof.index(i)] >= exact * (1 - 1e-9)
    with pytest.raises(ValueError):
        fifth_abs_central_bound(moment_profile(env))


def test_fifth_abs_mc_against_exact():
    env = env_from([0.45, 0.6, 0.55, 0.7])
    prof = moment_profile(env)
    est, se = fifth_abs_central_mc(env, [2, 3], 200_000, 4)
    for k, i in enumerate((2, 3)):
        pmf = crossing_pmf(env.omegas, env.left, i, 20000)
        t = np.arange(pmf.size)
        exact = float(np.sum(pmf * np.abs(t - prof.at(i)["e"]) ** 5))
        assert abs(est[k] - exact) < 4 * se[k]


def test_profile_text_and_window():
    env = env_from([0.6, 0.7])
    prof = moment_profile(env)
    text = prof.to_text().splitlines()
    assert text[0] == "# site e v t3"
    assert len(text) == 1 + prof.e.size
    assert prof.hitting_mean(2) == pytest.approx(prof.e[1] + prof.e[2])
    with pytest.raises(IndexError):
        prof.index(5)


# -- blocks -----------------------------------------------------------------


def test_blocks_constant_law():
    env = sample_env_P(constant_law(0.75), -100, 30, 1)
    dec = ladder_decompose(env)
    prof = moment_profile(env)
    bm = block_moments(env, dec, prof)
    assert np.allclose(bm.mu, prof.e[prof.window(1, 31)])
    assert np.allclose(bm.s2, prof.v[prof.window(1, 31)])


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_blocks_are_site_sums_and_bounds_hold(seed):
    env, dec = sample_env_Q(TwoPoint.for_kappa(2.5), 30, seed, pad_sites=8)
    prof = moment_profile(env)
    bm = block_moments(env, dec, prof)
    for k in range(bm.n_blocks):
        sl = prof.window(int(dec.nus[k]) + 1, int(dec.nus[k + 1]))
        assert bm.mu[k] == pytest.approx(prof.e[sl].sum(), rel=1e-12)
        assert bm.s2[k] == pytest.approx(prof.v[sl].sum(), rel=1e-12)
        assert bm.m3[k] == pytest.approx(prof.t3[sl].sum(), rel=1e-12)
    assert bm.sum_bound_holds().all()
    assert bm.m3_lower_holds().all()


def test_block_bound_R_direct():
    env, dec = sample_env_Q(TwoPoint.for_kappa(2.5), 10, 21, pad_sites=4)
    prof = moment_profile(env)
    bm = block_moments(env, dec, prof)
    sts = env_statics(env)
    for k in range(bm.n_blocks):
        a, b = int(dec.nus[k]), int(dec.nus[k + 1])
        r = sum(sts.Pi(a, x - 1) for x in range(a + 1, b + 1)) if b > a else 0.0
        expected = bm.mu[k] + 6 * bm.mu[k] * bm.s2[k] + r * prof.at(a)["t3"]
        assert bm.sum_bound[k] == pytest.approx(expected, rel=1e-10)


def test_block_check_raises_on_violation():
    bm = BlockMoments(
        np.array([0, 1]), np.array([2.0]), np.array([6.0]), np.array([1.0]), np.array([1.0]),
        np.array([0.0]), np.array([100.0]),
    )
    assert not bm.m3_lower_holds()[0]
    assert bm.sum_bound_holds()[0]


def test_reflect_at_truncates_left():
    law = TwoPoint.for_kappa(2.5)
    a = sample_env_P(law, -40, 20, 1)
    b = sample_env_P(law, -40, 20, 2)
    om = b.omegas.copy()
    om[a.pos(-10):] = a.omegas[a.pos(-10):]
    b = Environment(-40, om)
    ea = mean_profile(reflect_at(a, -10))
    eb = mean_profile(reflect_at(b, -10))
    assert np.array_equal(ea[a.pos(-10):], eb[b.pos(-10):])
    with pytest.raises(IndexError):
        reflect_at(a, 50)


def test_mu_tilde_gap_matches_reflected_profile():
    env, dec = sample_env_Q(TwoPoint.for_kappa(2.5), 40, 3, pad_sites=200)
    sts = env_statics(env)
    n = 16
    gap = mu_tilde_gap(env, dec, n, sts)
    bm = block_moments(env, dec, n=n)
    for k in range(dec.n_blocks):
        a, b = int(dec.nus[k]), int(dec.nus[k + 1])
        refl = mean_profile(reflect_at(env, reflection_site(a, n)))
        direct = refl[a + 1 - env.left - 1 : b - env.left].sum()
        assert bm.mu[k] - direct == pytest.approx(gap[k], rel=1e-6, abs=1e-9 * bm.mu[k])
    assert np.all(bm.mu_tilde <= bm.mu)


def test_mu_tilde_gap_decays():
    env, dec = sample_env_Q(TwoPoint.for_kappa(2.5), 2000, 5, pad_sites=200)
    fracs = []
    for n in (16, 256, 4096):
        gap = mu_tilde_gap(env, dec, n)
        fracs.append(np.mean(gap > np.exp(-(n**0.25))))
    assert fracs[0] >= fracs[1] >= fracs[2]
    assert fracs[2] < fracs[0] or fracs[0] == 0


def test_moment_running_averages_stable():
    law = TwoPoint.for_kappa(2.5)
    e1, t3 = [], []
    for r in range(4000):
        env = sample_env_P(law, -150, 1, r)
        prof = moment_profile(env)
        e1.append(prof.at(1)["e"])
        t3.append(prof.at(1)["t3"])
    e1, t3 = np.array(e1), np.array(t3)
    for x, p in ((e1, 2.0), (t3, 2.5 / 3 - 0.1)):
        run = np.cumsum(x**p) / np.arange(1, x.size + 1)
        assert 0.5 < run[-1] / run[x.size // 2] < 2.0
