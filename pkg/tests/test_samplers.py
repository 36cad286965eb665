import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from ctrw_lab.errors import SeriesDivergence
from ctrw_lab.rng import RngStream
from ctrw_lab.samplers import (
    Exponential, FiniteMeanGeneric, Pareto, PhiMapped, PointMass, PositiveStable, TailFunction, Truncated,
    TruncatedImageTail, distribution_from_dict, mittag_leffler_laplace, sample_mittag_leffler_direct,
    sample_mittag_leffler_wait, sample_pareto, sample_phi_mapped, sample_positive_stable,
    sample_subordinator_increment, stable_sf, stable_tail_series,
)
from ctrw_lab.symbols import Atomic, BernsteinSymbol, build_truncation_symbol, identity_symbol, stable_symbol


def within_3se(samples, s, target):
    v = np.exp(-s * np.asarray(samples))
    se = v.std(ddof=1) / math.sqrt(len(v))
    return abs(v.mean() - target) <= 3 * se + 1e-12, (v.mean(), target, se)


def levy_sf(t, x):
    # alpha = 1/2: D_t is Levy with P(D_t > x) = erf(t / (2 sqrt x))
    return special.erf(t / (2 * np.sqrt(x)))


# --- positive stable -----------------------------------------------------

def test_stable_laplace_transform():
    x = sample_positive_stable(0.5, 1.0, RngStream(11), 10 ** 6)
    ok, info = within_3se(x, 1.0, math.exp(-1))
    assert ok, info


def test_stable_tail_vs_levy_closed_form():
    x = sample_positive_stable(0.5, 1.0, RngStream(12), 10 ** 6)
    for q in (2.0, 5.0, 10.0):
        p = float(np.mean(x > q))
        se = math.sqrt(p * (1 - p) / len(x))
        assert abs(p - stable_tail_series(0.5, 1.0, q)) < 3 * se
        assert stable_tail_series(0.5, 1.0, q) == pytest.approx(levy_sf(1.0, q), abs=1e-11)


def test_stable_self_similarity():
    a = sample_positive_stable(0.7, 3.0, RngStream(13), 20000)
    b = 3.0 ** (1 / 0.7) * sample_positive_stable(0.7, 1.0, RngStream(14), 20000)
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_stable_vectorized_time():
    t = np.array([0.5, 1.0, 2.0])
    assert sample_positive_stable(0.5, t, RngStream(1)).shape == (3,)


# --- tail series and stable_sf -------------------------------------------

def test_series_leading_term():
    val = stable_tail_series(0.5, 1.0, 100.0)
    assert abs(val - 0.1 / math.sqrt(math.pi)) < 5e-4
    assert val == pytest.approx(levy_sf(1.0, 100.0), abs=1e-12)


def test_series_pole_term_vanishes():
    # the n = 2 coefficient carries 1/Gamma(0) at alpha = 1/2, so only odd
    # powers of z remain and P(D > x) is an odd function of z = t x^-1/2
    z = 0.1
    odd = sum((-1) ** (k - 1) * z ** k / (math.factorial(k) * math.gamma(1 - 0.5 * k))
              for k in (1, 3, 5, 7, 9))
    assert special.rgamma(0.0) == 0.0
    assert stable_tail_series(0.5, z, 1.0) == pytest.approx(odd, abs=1e-13)


def test_series_monotone():
    xs = np.logspace(0.5, 4, 40)
    vals = [stable_tail_series(0.6, 1.0, x) for x in xs]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_series_divergence():
    with pytest.raises(SeriesDivergence):
        stable_tail_series(0.5, 50.0, 1.0)


def test_stable_sf_matches_levy_everywhere():
    t = np.array([0.01, 0.3, 1.0, 4.0, 30.0])
    x = np.logspace(-3, 5, 60)
    got = stable_sf(0.5, t[:, None], x[None, :])
    assert np.max(np.abs(got - levy_sf(t[:, None], x[None, :]))) < 1e-10


@pytest.mark.parametrize("alpha", [0.3, 0.8])
def test_stable_sf_vs_monte_carlo(alpha):
    x = sample_positive_stable(alpha, 1.0, RngStream(15), 10 ** 6)
    for q in (0.2, 1.0, 3.0, 30.0):
        p = float(np.mean(x > q))
        se = math.sqrt(p * (1 - p) / len(x))
        assert abs(p - stable_sf(alpha, 1.0, q)) < 3 * se + 1e-9


def test_stable_sf_edges():
    assert stable_sf(0.5, 0.0, 1.0) == 0.0
    assert stable_sf(0.5, 1.0, 0.0) == 1.0


# --- Pareto --------------------------------------------------------------

def test_pareto_support_and_median():
    alpha = 0.5
    w = sample_pareto(alpha, RngStream(16), 10 ** 6)
    x_m = math.gamma(0.5) ** -2
    assert w.min() >= x_m
    assert Pareto(alpha).quantile_from_uniform(1.0) == pytest.approx(x_m)
    assert np.median(w) == pytest.approx((2 / math.sqrt(math.pi)) ** 2, rel=0.01)


def test_pareto_against_scipy():
    p = Pareto(0.4)
    w = p.sample(RngStream(17), 20000)
    ref = stats.pareto(b=0.4, scale=p.x_m)
    assert stats.kstest(w, ref.cdf).pvalue > 0.01
    t = np.array([p.x_m * 0.5, p.x_m, 3.0, 100.0])
    assert np.allclose(p.sf(t), ref.sf(t), rtol=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(1e-12, 1.0))
def test_pareto_quantile_inverts_survival(alpha, u):
    p = Pareto(alpha)
    assert p.sf(p.quantile_from_uniform(u)) == pytest.approx(u, rel=1e-10)


def test_pareto_laplace_matches_quadrature():
    p = Pareto(0.5)
    mp.mp.dps = 30
    for s in (0.1, 1.0, 5.0):
        want = mp.quad(lambda y: (1 - mp.e ** (-s * y)) * 0.5 * p.x_m ** 0.5 * y ** -1.5, [p.x_m, 1, mp.inf])
        assert p.one_minus_laplace(s) == pytest.approx(float(want), rel=1e-10)


# --- universal Laplace contract ------------------------------------------

def _truncated_pareto_lt(s, m=10.0, alpha=0.5):
    mp.mp.dps = 30
    xm = mp.gamma(1 - alpha) ** (-1 / mp.mpf(alpha))
    dens = lambda y: alpha * xm ** alpha * y ** (-alpha - 1)
    return float((xm / m) ** alpha + mp.quad(lambda y: mp.e ** (-s * y) * dens(y), [xm, m]))


def _pareto_lt(s, alpha=0.5):
    mp.mp.dps = 30
    xm = mp.gamma(1 - alpha) ** (-1 / mp.mpf(alpha))
    return float(mp.quad(lambda y: mp.e ** (-s * y) * alpha * xm ** alpha * y ** (-alpha - 1), [xm, 1, mp.inf]))


PSI_M, MU_M = build_truncation_symbol(Pareto(0.5), 10.0)

CONTRACT = {
    "exponential": (Exponential(2.0), lambda s: 2 / (2 + s)),
    "point_mass": (PointMass(1.5), lambda s: math.exp(-1.5 * s)),
    "pareto": (Pareto(0.5), _pareto_lt),
    "stable": (PositiveStable(0.7, 2.0), lambda s: math.exp(-2 * s ** 0.7)),
    "truncated": (Truncated(Pareto(0.5), 10.0), _truncated_pareto_lt),
    "image": (PhiMapped(Truncated(Pareto(0.5), 10.0), PSI_M),
              lambda s: _truncated_pareto_lt(s + s ** 0.5 / MU_M)),
    "ml": (PhiMapped(Exponential(1.0), stable_symbol(0.5)), lambda s: 1 / (1 + s ** 0.5)),
    "generic": (FiniteMeanGeneric(TailFunction(lambda t: np.exp(-np.asarray(t) ** 2))),
                lambda s: 1 - s * math.sqrt(math.pi) / 2 * math.exp(s * s / 4) * math.erfc(s / 2)),
}


@pytest.mark.parametrize("name", sorted(CONTRACT))
def test_sampler_laplace_contract(name):
    dist, lt = CONTRACT[name]
    x = dist.sample(RngStream(100 + len(name)), 10 ** 5)
    for s in (0.5, 1.0, 2.0):
        ok, info = within_3se(x, s, lt(s))
        assert ok, (name, s, info)


@pytest.mark.parametrize("name", ["exponential", "pareto", "stable", "truncated"])
def test_laplace_method_matches_oracle(name):
    dist, lt = CONTRACT[name]
    for s in (0.5, 1.0, 2.0):
        assert dist.laplace(s) == pytest.approx(lt(s), rel=1e-9)


# --- subordinator increments ---------------------------------------------

def test_drift_increment_deterministic():
    assert sample_subordinator_increment(identity_symbol(), 0.3, RngStream(1)) == 0.3


def test_psi_m_increment_is_drift_plus_stable():
    a = sample_subordinator_increment(PSI_M, 0.3, RngStream(20), size=20000) - 0.3
    b = sample_positive_stable(0.5, 0.3 / MU_M, RngStream(21), 20000)
    assert a.min() >= 0
    assert stats.ks_2samp(a, b).pvalue > 0.01


@pytest.mark.parametrize("psi", [PSI_M, BernsteinSymbol(0.5, Atomic(((1.0, 2.0), (0.2, 1.0))))])
def test_increment_laplace(psi):
    dt = 0.7
    x = sample_subordinator_increment(psi, dt, RngStream(22), size=10 ** 5)
    for s in (0.5, 1.0, 2.0):
        if psi is PSI_M:
            exponent = s + s ** 0.5 / MU_M
        else:
            exponent = 0.5 * s + 2 * (1 - math.exp(-s)) + (1 - math.exp(-0.2 * s))
        ok, info = within_3se(x, s, math.exp(-dt * exponent))
        assert ok, info


# --- mapped laws and Mittag-Leffler --------------------------------------

def test_identity_map_returns_input():
    u = Exponential(1.0).sample(RngStream(5), 1000)
    v = sample_phi_mapped(Exponential(1.0), identity_symbol(), RngStream(5), 1000)
    assert np.array_equal(u, v)


def test_mittag_leffler_laplace():
    x = sample_mittag_leffler_wait(0.5, 1.0, RngStream(23), 10 ** 6)
    ok, info = within_3se(x, 1.0, 0.5)
    assert ok, info
    assert mittag_leffler_laplace(0.5, 1.0, 1.0) == 0.5
    assert float(np.mean(x > 0)) == 1.0


def test_mittag_leffler_matches_mixture_form():
    alpha, lam, n = 0.5, 2.0, 10 ** 5
    g = RngStream(24).generator
    u = g.exponential(1 / lam, n)
    ref = u ** (1 / alpha) * sample_positive_stable(alpha, 1.0, g, n)
    x = sample_mittag_leffler_wait(alpha, lam, RngStream(25), n)
    assert stats.ks_2samp(x, ref).pvalue > 0.01
    y = sample_mittag_leffler_direct(alpha, lam, RngStream(26), n)
    assert stats.ks_2samp(x, y).pvalue > 0.01


def test_composition_of_maps():
    a1, a2, n = 0.7, 0.6, 50000
    g = RngStream(27).generator
    inner = sample_phi_mapped(Exponential(1.0), stable_symbol(a1), g, n)
    twice = sample_subordinator_increment(stable_symbol(a2), inner, g)
    ref = sample_mittag_leffler_direct(a1 * a2, 1.0, RngStream(28), n)
    assert stats.ks_2samp(twice, ref).pvalue > 0.01


# --- tail of the truncated image -----------------------------------------

def _envelope(x, m=10.0, alpha=0.5):
    """E P(D_{V/mu} > x) with the stable tail from its power series."""
    mp.mp.dps = 20
    xm = float(mp.gamma(1 - alpha) ** (-1 / alpha))
    f = lambda y: alpha * xm ** alpha * float(y) ** (-alpha - 1) * stable_tail_series(alpha, float(y) / MU_M, x)
    return float(mp.quad(f, [xm, m]))


def test_image_tail_sandwich_and_monte_carlo():
    m = 10.0
    tail = TruncatedImageTail(Pareto(0.5), m)
    x = 10 * m
    lo, hi = _envelope(x), _envelope(x - m)
    assert lo <= tail(x) <= hi
    v = sample_phi_mapped(Truncated(Pareto(0.5), m), PSI_M, RngStream(29), 10 ** 6)
    for q in (0.2, 3.0, 20.0, x):
        p = float(np.mean(v > q))
        se = math.sqrt(p * (1 - p) / len(v))
        assert abs(p - tail(q)) < 3 * se, (q, p, tail(q))


# --- determinism and serialization ---------------------------------------

def test_same_stream_same_bytes():
    a = sample_phi_mapped(Truncated(Pareto(0.5), 10.0), PSI_M, RngStream(7, 3), 1000)
    b = sample_phi_mapped(Truncated(Pareto(0.5), 10.0), PSI_M, RngStream(7, 3), 1000)
    assert a.tobytes() == b.tobytes()


def test_split_and_substream():
    parent = RngStream(9)
    kids = parent.split(4)
    assert len({k.stream_id for k in kids}) == 4
    for i, k in enumerate(kids):
        assert RngStream(9).substream(i).stream_id == k.stream_id
    draws = [k.generator.random(3).tobytes() for k in kids]
    assert len(set(draws)) == 4


def test_checkpoint_replay():
    r = RngStream(4, 2)
    r.generator.random(13)
    cp = r.checkpoint()
    again = RngStream(cp.seed, cp.stream_id, cp.counter)
    assert r.generator.random(50).tobytes() == again.generator.random(50).tobytes()


def test_distribution_roundtrip():
    for d in (Exponential(3.0), PointMass(2.0), Pareto(0.5), PositiveStable(0.3, 2.0),
              Truncated(Pareto(0.5), 10.0), PhiMapped(Exponential(1.0), PSI_M)):
        back = distribution_from_dict(d.to_dict())
        assert back.one_minus_laplace(0.7) == pytest.approx(d.one_minus_laplace(0.7), rel=1e-12)
