import math

import numpy as np
import pytest
from scipy import stats

from ctrw_lab.ctrw import (
    SpaceTimeJumpModel, TemporalLandscape, build_time_changed_representation, drift_process,
    general_scheme_ctrw, identity_violations, quenched_type1, quenched_type2, quenched_variance_check,
    relative_stability_sample, residual_lifetime, scaled_ctrw_pair, sigma_sq_mu, simulate_ctrw,
)
from ctrw_lab.errors import ModelInvalid, UnboundedSymbolRequired
from ctrw_lab.paths import TimeChange
from ctrw_lab.rng import RngStream
from ctrw_lab.samplers import (
    Exponential, Pareto, PhiMapped, PointMass, Truncated, sample_mittag_leffler_wait, sample_phi_mapped,
    sample_positive_stable,
)
from ctrw_lab.symbols import Atomic, BernsteinSymbol, build_truncation_symbol, identity_symbol, stable_symbol

PSI_M, MU_M = build_truncation_symbol(Pareto(0.5), 10.0)
W_M = Truncated(Pareto(0.5), 10.0)


def unit_model():
    return SpaceTimeJumpModel(PointMass(1.0), spatial_conditional=lambda w, g: np.ones_like(w), validate=False)


# --- models and plain CTRW -----------------------------------------------

def test_deterministic_walk():
    p = simulate_ctrw(unit_model(), 3.5, RngStream(0))
    assert p.epochs.tolist() == [1.0, 2.0, 3.0]
    assert p.values.tolist() == [1.0, 2.0, 3.0]


def test_registration():
    with pytest.raises(ModelInvalid):
        SpaceTimeJumpModel(Exponential(), spatial_conditional=lambda w, g: w)
    with pytest.raises(ModelInvalid):
        SpaceTimeJumpModel(PointMass(1.0), spatial_conditional=lambda w, g: np.ones_like(w))
    SpaceTimeJumpModel(Exponential(), variance_profile=lambda w: np.minimum(w, 1.0))
    SpaceTimeJumpModel(Exponential(), dimension=3)


def test_fractional_poisson_mean_count():
    # Mittag-Leffler waits: E N_t = t^alpha / Gamma(1 + alpha)
    alpha, t, reps = 0.5, 4.0, 20000
    model = SpaceTimeJumpModel(PhiMapped(Exponential(1.0), stable_symbol(alpha)), validate=False)
    g = RngStream(1).generator
    counts = np.array([simulate_ctrw(model, t, g).n_jumps for _ in range(reps)])
    se = counts.std(ddof=1) / math.sqrt(reps)
    assert abs(counts.mean() - t ** alpha / math.gamma(1 + alpha)) < 3 * se


# --- time-changed representation -----------------------------------------

def test_drift_representation_is_identity():
    rep = build_time_changed_representation(Exponential(1.0), identity_symbol())
    sc = rep.scenario(5.0, RngStream(2))
    assert np.allclose(sc.W_prime, sc.U[:len(sc.W_prime)], rtol=0, atol=1e-12)
    grid = np.linspace(0, 5, 11)
    assert np.allclose(sc.E(grid), grid, atol=1e-12)


def test_uncertified_symbol_rejected():
    with pytest.raises(UnboundedSymbolRequired):
        build_time_changed_representation(Exponential(1.0), BernsteinSymbol(0.0, Atomic(((1.0, 1.0),))))


@pytest.mark.parametrize("U,psi", [(W_M, PSI_M), (Exponential(1.0), stable_symbol(0.5)),
                                   (Exponential(1.0), BernsteinSymbol(1.0, Atomic(((0.5, 2.0),))).certify())])
def test_pathwise_identity(U, psi):
    rep = build_time_changed_representation(U, psi)
    g = RngStream(3).generator
    for _ in range(100):
        sc = rep.scenario(20.0, g)
        times = np.concatenate([g.uniform(0, 20, 900), sc.Y.epochs[:100]])
        assert identity_violations(sc, times) == 0


def test_identity_against_shifted_evaluation():
    # independent evaluation: X(E(t + eta)-) for tiny eta, away from breakpoints
    rep = build_time_changed_representation(W_M, PSI_M)
    g = RngStream(4).generator
    for _ in range(50):
        sc = rep.scenario(20.0, g)
        t = g.uniform(0, 20, 300)
        near = np.min(np.abs(t[:, None] - np.concatenate([sc.E.xs, sc.Y.epochs])[None, :]), axis=1)
        t = t[near > 1e-6]
        rhs = sc.X.left_limit(sc.E(t + 1e-9))
        assert np.array_equal(sc.Y(t), rhs)


def test_waits_follow_mapped_law():
    rep = build_time_changed_representation(W_M, PSI_M)
    g = RngStream(5).generator
    waits = np.concatenate([rep.scenario(1.0, g).W_prime[:20] for _ in range(1000)])
    ref = sample_phi_mapped(W_M, PSI_M, RngStream(6), 20000)
    assert stats.ks_2samp(waits, ref).pvalue > 0.01


def test_representation_count_law():
    alpha, t = 0.5, 4.0
    rep = build_time_changed_representation(Exponential(1.0), stable_symbol(alpha))
    g = RngStream(7).generator
    counts = np.array([rep.scenario(t, g).Y.n_jumps for _ in range(20000)])
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - t ** alpha / math.gamma(1 + alpha)) < 3 * se


# --- scaled pairs --------------------------------------------------------

def test_scaled_pair_n1_and_drift_decay():
    one = scaled_ctrw_pair(W_M, PSI_M, 1)
    assert one.a_n == 1.0 and one.psi_n is PSI_M
    drifts = [scaled_ctrw_pair(W_M, PSI_M, n).psi_n.drift for n in (10, 100, 1000, 10000)]
    assert all(a > b for a, b in zip(drifts, drifts[1:]))
    assert drifts[-1] < 0.01


def test_scaled_pair_two_constructions_agree():
    pair = scaled_ctrw_pair(W_M, PSI_M, 100)
    g1, g2 = RngStream(8).generator, RngStream(9).generator
    a = [pair.scenario(1.0, g1).Y(1.0) for _ in range(3000)]
    b = [pair.sample_Y(1.0, g2)(1.0) for _ in range(3000)]
    assert stats.ks_2samp(a, b).pvalue > 0.01


# --- environments --------------------------------------------------------

def test_type1_identity_environment_is_plain_walk():
    model = SpaceTimeJumpModel(Exponential(1.0))
    a = quenched_type1(TimeChange.linear(1.0, 30.0), model, 30.0, RngStream(10))
    b = simulate_ctrw(model, 30.0, RngStream(10))
    assert np.allclose(a.epochs, b.epochs, rtol=1e-14, atol=0) and np.array_equal(a.values, b.values)


def test_type1_plateau_freezes():
    xi = TimeChange([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 1.0, 2.0])
    model = SpaceTimeJumpModel(Exponential(1.0))
    g = RngStream(11).generator
    for _ in range(200):
        p = quenched_type1(xi, model, 3.0, g, time_scale=0.01, space_scale=0.1)
        assert not np.any((p.epochs > 1.0) & (p.epochs <= 2.0))


def test_type2_unit_traps_is_plain_walk():
    model = SpaceTimeJumpModel(Exponential(1.0))
    land = TemporalLandscape(lambda g, k: np.ones(k), Exponential(1.0))
    a = quenched_type2(land, model, 30.0, RngStream(12))
    b = simulate_ctrw(model, 30.0, RngStream(12))
    assert np.array_equal(a.epochs, b.epochs) and np.array_equal(a.values, b.values)


def test_type2_annealed_waits_are_mittag_leffler():
    alpha, n = 0.5, 20000
    land = TemporalLandscape(lambda g, k: sample_positive_stable(alpha, 1.0, g, k), Exponential(1.0),
                             power=1 / alpha, normalize=False)
    g = RngStream(13).generator
    w = land.realize(n, g) * land.waits(n, g)
    assert stats.ks_2samp(w, sample_mittag_leffler_wait(alpha, 1.0, RngStream(14), n)).pvalue > 0.01


def test_type2_normalization_scale():
    alpha, n = 0.5, 200000
    tau = lambda g, k: sample_positive_stable(alpha, 1.0, g, k)
    on = TemporalLandscape(tau, Exponential(1.0), power=1 / alpha, normalize=True)
    off = TemporalLandscape(tau, Exponential(1.0), power=1 / alpha, normalize=False)
    assert on.normalization() == pytest.approx(math.gamma(1 + 1 / alpha))
    g1, g2 = RngStream(15).generator, RngStream(16).generator
    m_on = np.median(on.realize(n, g1) * on.waits(n, g1))
    m_off = np.median(off.realize(n, g2) * off.waits(n, g2))
    assert m_off / m_on == pytest.approx(math.gamma(1 + 1 / alpha), rel=0.02)


def test_general_scheme_diagonal():
    n = 100
    p = general_scheme_ctrw(drift_process(1.0), drift_process(1.0), PointMass(1.0), n, 1.0, RngStream(17))
    t = np.linspace(0, 1, 1001)
    assert np.max(np.abs(p(t) - t)) < 2 / n


# --- second moments ------------------------------------------------------

def test_sigma_sq_mu_examples():
    assert np.allclose(sigma_sq_mu(lambda w: np.eye(2), Exponential(1.0)), np.eye(2), rtol=0, atol=1e-12)
    assert sigma_sq_mu(lambda w: min(w, 1.0), PointMass(0.5)) == 0.5
    assert sigma_sq_mu(lambda w: min(w, 1.0), Exponential(1.0)) == pytest.approx(1 - math.exp(-1), abs=1e-6)


def test_quenched_variance():
    model = SpaceTimeJumpModel(Exponential(1.0))
    grid = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    ident = quenched_variance_check(TimeChange.linear(1.0, 3.0), model, grid, 300, RngStream(18), n=300)
    assert ident.max_abs_z < 4  # 6 checkpoints; fixed seed
    half = quenched_variance_check(TimeChange.linear(0.5, 3.0), model, grid, 300, RngStream(19), n=300)
    assert np.allclose(half.qv_reference, grid / 2)
    assert half.max_abs_z < 4
    flat = TimeChange([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 1.0, 2.0])
    rep = quenched_variance_check(flat, model, grid, 100, RngStream(20), n=300)
    assert rep.accrual[2] == 0.0 and rep.accrual[3] == 0.0
    assert rep.qv_mean[1] == rep.qv_mean[2] == rep.qv_mean[3]


# --- relative stability --------------------------------------------------

def test_relative_stability():
    x = relative_stability_sample(Exponential(1.0), 10 ** 5, 500, RngStream(21))
    assert x.var(ddof=1) < 1e-3
    assert abs(x.mean() - 1) < 0.01


def test_residual_lifetime():
    z = residual_lifetime(Exponential(1.0), 20.0, 2000, RngStream(22))
    assert stats.kstest(z, "expon").pvalue > 0.01  # memoryless
    big = residual_lifetime(Exponential(1.0), 1e4, 200, RngStream(23))
    assert np.quantile(big / 1e4, 0.95) < 0.05
