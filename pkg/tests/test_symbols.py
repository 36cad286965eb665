import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctrw_lab.errors import InsufficientGrid, NonIntegrableMeasure, UnboundedSymbolRequired
from ctrw_lab.samplers import Exponential, Pareto, PointMass, Truncated
from ctrw_lab.symbols import (
    Atomic, BernsteinSymbol, ScaledDistribution, StablePower, apply_phi_hat, build_truncation_symbol,
    certify_injection_bound, check_complete_monotone, check_homogeneity, check_regularity, compose_symbols,
    compute_a_n, eval_symbol, identity_symbol, integrated_tail, rescale_symbol, stable_symbol,
)

S_GRID = np.logspace(-2, 2, 25)


def _pareto_truncated_oracle(alpha, m, s):
    """(1/mu) * int (1 - e^{-sy}) f_m(dy) and mu, at 40 digits."""
    mp.mp.dps = 40
    a = mp.mpf(alpha)
    xm = mp.gamma(1 - a) ** (-1 / a)
    dens = lambda y: a * xm ** a * y ** (-a - 1)
    mu = mp.quad(lambda y: y * dens(y), [xm, m])
    val = mp.quad(lambda y: (1 - mp.e ** (-s * y)) * dens(y), [xm, 1, m])
    return float(val / mu), float(mu)


# --- eval_symbol ---------------------------------------------------------

def test_eval_stable_and_drift():
    assert eval_symbol(stable_symbol(0.5), 4.0) == pytest.approx(2.0, abs=1e-15)
    assert eval_symbol(identity_symbol(), 3.0) == 3.0


def test_eval_truncated_pareto_matches_quadrature():
    W = Pareto(0.5)
    want, mu = _pareto_truncated_oracle(0.5, 10, 1)
    psi = BernsteinSymbol(0.0, ScaledDistribution(Truncated(W, 10.0), 1.0 / mu))
    assert eval_symbol(psi, 1.0) == pytest.approx(want, abs=1e-8)


def test_eval_rejects_negative_argument():
    with pytest.raises(ValueError):
        eval_symbol(identity_symbol(), -1.0)


def test_stable_index_outside_unit_interval():
    with pytest.raises(NonIntegrableMeasure):
        StablePower(1.0)


@st.composite
def symbols(draw):
    drift = draw(st.floats(0, 3))
    kind = draw(st.sampled_from(["stable", "atomic", "exp"]))
    if kind == "stable":
        mu = StablePower(draw(st.floats(0.05, 0.95)), draw(st.floats(0.1, 5)))
    elif kind == "atomic":
        k = draw(st.integers(1, 4))
        mu = Atomic(tuple((draw(st.floats(0.01, 10)), draw(st.floats(0.01, 10))) for _ in range(k)))
    else:
        mu = ScaledDistribution(Exponential(1.0), draw(st.floats(0.1, 5)), draw(st.floats(0.1, 5)))
    return BernsteinSymbol(drift, mu)


@settings(max_examples=60, deadline=None)
@given(symbols())
def test_symbol_monotone_and_concave(psi):
    v = eval_symbol(psi, S_GRID)
    scale = max(1.0, float(np.max(v)))
    assert np.all(np.diff(v) >= -1e-12 * scale)
    slopes = np.diff(v) / np.diff(S_GRID)
    assert np.all(np.diff(slopes) <= 1e-9 * scale)


# --- apply_phi_hat and complete monotonicity ----------------------------

def test_phi_hat_identity_and_mittag_leffler():
    f = lambda s: 1.0 / (1.0 + s)
    same = apply_phi_hat(f, identity_symbol())
    ml = apply_phi_hat(f, stable_symbol(0.6))
    for s in (0.1, 1.0, 7.0):
        assert same(s) == pytest.approx(f(s), rel=1e-15)
        assert ml(s) == pytest.approx(1.0 / (1.0 + s ** 0.6), rel=1e-14)
    assert ml(1e-14) == pytest.approx(1.0, abs=1e-7)


def test_cm_examples():
    grid = np.linspace(0.1, 5, 30)
    assert check_complete_monotone(lambda s: math.exp(-s), grid, 4).passed
    assert check_complete_monotone(lambda s: 1 / (1 + s ** 0.5), grid, 4).passed
    bad = check_complete_monotone(lambda s: math.sin(s) + 2, np.linspace(0.1, 9.9, 40), 2)
    assert not bad.passed
    assert any(not o["passed"] for o in bad.orders)


def test_cm_sign_pattern_matches_symbolic_derivatives():
    # derivatives of 1/(1+sqrt s) alternate in sign at five points
    mp.mp.dps = 30
    f = lambda s: 1 / (1 + mp.sqrt(s))
    for s in (0.3, 0.7, 1.5, 3.0, 4.5):
        for k in range(1, 5):
            assert (-1) ** k * mp.diff(f, s, k) > 0


def test_cm_grid_too_small():
    with pytest.raises(InsufficientGrid):
        check_complete_monotone(math.exp, [1, 2, 3], 4)


@settings(max_examples=25, deadline=None)
@given(symbols(), st.sampled_from(["exp", "ml", "gamma2"]))
def test_composition_stays_completely_monotone(psi, which):
    f = {"exp": lambda s: math.exp(-s), "ml": lambda s: 1 / (1 + s ** 0.7),
         "gamma2": lambda s: (1 + s) ** -2}[which]
    g = apply_phi_hat(f, psi)
    assert check_complete_monotone(g, np.linspace(0.2, 4, 25), 4).passed


def test_compose_symbols():
    c = compose_symbols(stable_symbol(0.5), stable_symbol(0.4))
    assert c(3.0) == pytest.approx(3.0 ** 0.2, rel=1e-14)


# --- truncation ----------------------------------------------------------

def test_truncation_dirac():
    psi, mu = build_truncation_symbol(PointMass(1.0), 2.0, form="general")
    assert mu == 1.0
    for s in (0.5, 1.0, 3.0):
        assert eval_symbol(psi, s) == pytest.approx(s + 1 - math.exp(-s), rel=1e-14)


def test_truncated_moment_matches_quadrature():
    _, mu_oracle = _pareto_truncated_oracle(0.5, 10, 1)
    _, mu = build_truncation_symbol(Pareto(0.5), 10.0)
    assert mu == pytest.approx(mu_oracle, abs=1e-10)


def test_truncation_symbol_tends_to_identity():
    gaps = [abs(eval_symbol(build_truncation_symbol(Pareto(0.5), m)[0], 1.0) - 1.0)
            for m in (1e2, 1e4, 1e6)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 2e-3


# --- rescaling and a_n ---------------------------------------------------

def test_rescale_examples():
    psi = stable_symbol(0.5)
    assert rescale_symbol(psi, 1, 1.0) is psi
    for n in (2, 10, 1000):
        r = rescale_symbol(psi, n, n ** -2.0)
        assert np.allclose(eval_symbol(r, S_GRID), eval_symbol(psi, S_GRID), rtol=1e-10, atol=0)
    d = rescale_symbol(identity_symbol(), 4, 0.25)
    assert d.drift == 1.0 and d.measure is None


def test_rescale_needs_certificate():
    with pytest.raises(UnboundedSymbolRequired):
        rescale_symbol(BernsteinSymbol(0.0, Atomic(((1.0, 1.0),))), 2, 0.5)


@settings(max_examples=50, deadline=None)
@given(symbols(), st.integers(1, 10 ** 4), st.floats(1e-4, 1.0), st.floats(0.01, 100))
def test_rescale_matches_definition(psi, n, a, s):
    psi = psi.certify_if_possible()
    if not psi.unbounded_certified:
        return
    r = rescale_symbol(psi, n, a)
    assert eval_symbol(r, s) == pytest.approx(n * eval_symbol(psi, a * s), rel=1e-9)


def test_a_n_exponential_closed_form():
    assert compute_a_n(Exponential(1.0), 1).a_n == 1.0
    for n in (2, 10, 1000, 10 ** 6):
        assert compute_a_n(Exponential(1.0), n).a_n == pytest.approx(1 / (n - 1), rel=1e-10)


def test_a_n_accepts_plain_transform():
    f = lambda s: 1 / (1 + s ** 0.5)
    for n in (2, 50):
        assert compute_a_n(f, n).a_n == pytest.approx((n - 1) ** -2.0, rel=1e-9)


def test_a_n_pareto_asymptotics():
    n = 10 ** 6
    a = compute_a_n(Pareto(0.5), n).a_n
    assert a / n ** -2.0 == pytest.approx(1.0, abs=0.02)
    W = Pareto(0.5)
    for t in (0.5, 1.0, 2.0):
        assert n * W.sf(t / a) == pytest.approx(t ** -0.5 / math.gamma(0.5), rel=0.02)


def test_a_n_strictly_decreasing():
    a = [compute_a_n(Pareto(0.3), n).a_n for n in (1, 2, 5, 50, 500)]
    assert all(x > y for x, y in zip(a, a[1:]))


# --- integrated tails and injection bounds -------------------------------

def test_integrated_tail_examples():
    mu = Atomic(((1.0, 1.0),))
    assert integrated_tail(mu, 0.5) == 0.5
    assert integrated_tail(mu, 2.0) == 1.0
    mp.mp.dps = 30
    oracle = mp.quad(lambda y: y ** -0.5 / mp.gamma(0.5), [0, 1])
    assert integrated_tail(StablePower(0.5), 1.0) == pytest.approx(float(oracle), abs=1e-8)


def test_integrated_tail_scaled_distribution():
    mu = ScaledDistribution(Exponential(1.0), 2.0)
    assert integrated_tail(mu, 1.5) == pytest.approx(2 * (1 - math.exp(-1.5)), abs=1e-10)


def test_injection_bound_examples():
    rep = certify_injection_bound(stable_symbol(0.5), 2.0, [0.1, 1, 10])
    assert rep.passed
    assert all(r["ratio"] == pytest.approx(2 ** 0.5) for r in rep.rows)
    one = certify_injection_bound(stable_symbol(0.5), 1.0, [0.1, 1, 10])
    assert one.passed and all(r["ratio"] == pytest.approx(1.0) for r in one.rows)
    at = certify_injection_bound(BernsteinSymbol(0.0, Atomic(((1.0, 1.0),))), 2.0, [0.25])
    assert at.passed
    assert at.rows[0]["ratio"] == pytest.approx((1 - math.exp(-4)) / (1 - math.exp(-2)))


@settings(max_examples=40, deadline=None)
@given(symbols(), st.floats(1.0, 20), st.floats(0.01, 50))
def test_injection_bound_holds(psi, lam, s):
    assert certify_injection_bound(psi, lam, [s]).max_violation <= 1e-9


# --- regularity and homogeneity ------------------------------------------

def test_regularity():
    seq = np.logspace(-1, -12, 12)
    assert check_regularity(stable_symbol(0.5), seq)
    assert not check_regularity(identity_symbol(), seq)
    psi_m, _ = build_truncation_symbol(Pareto(0.5), 10.0)
    assert check_regularity(psi_m, np.logspace(-1, -20, 20))


def test_homogeneity_stable():
    alpha = 0.5
    lams = [0.25, 0.5, 2.0]
    rep = check_homogeneity(StablePower(alpha), lams, np.logspace(-3, 3, 30))
    assert rep.kind == "sub"
    for lam in lams:
        # admissible C are those >= lam^{-1/alpha}; the witness is the one nearest 1
        want = max(lam ** (-1 / alpha), 1.0)
        assert rep.sub_witness[lam] == pytest.approx(want, rel=0.025)


def test_homogeneity_power_atoms():
    atoms = tuple((float(k), float(k) ** -0.5 - float(k + 1) ** -0.5) for k in range(1, 200))
    rep = check_homogeneity(Atomic(atoms), [0.5, 0.8], np.arange(1.0, 100.0))
    assert rep.kind == "sub"


# --- certification and serialization -------------------------------------

def test_certify():
    assert BernsteinSymbol(0.5).certify().unbounded_certified
    with pytest.raises(UnboundedSymbolRequired):
        BernsteinSymbol(0.0, Atomic(((1.0, 1.0),))).certify()
    assert BernsteinSymbol(1.0, Atomic(((1.0, 1.0),))).certify().unbounded_certified


def test_json_roundtrip():
    psi, _ = build_truncation_symbol(Pareto(0.5), 10.0, form="general")
    for sym in (psi, stable_symbol(0.3, 2.0), BernsteinSymbol(1.0, Atomic(((1.0, 2.0), (3.0, 0.5))))):
        back = BernsteinSymbol.from_dict(json.loads(json.dumps(sym.to_dict())))
        assert np.allclose(eval_symbol(back, [0.5, 2.0]), eval_symbol(sym, [0.5, 2.0]), rtol=1e-14)
