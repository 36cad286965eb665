"""Continuous-time random walks, their time-changed representation and
random-walk-in-random-environment simulators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ModelInvalid, QuadratureFailure, UnboundedSymbolRequired, ZeroProgress
from .paths import StepPath, SubordinatorSkeleton, TimeChange, compose, generalized_inverse
from .rng import RngStream, as_generator
from .samplers import (Exponential, PhiMapped, PointMass, sample_positive_stable,
                       sample_subordinator_increment)
from .symbols import Atomic, BernsteinSymbol, StablePower, compute_a_n, rescale_symbol

MAX_JUMPS = 10 ** 7
_REGISTRATION_SEED = 0x5EED


def _rademacher(gen, shape):
    return 2.0 * gen.integers(0, 2, size=shape) - 1.0


def _step_path(epochs, values, horizon, initial=0.0):
    """StepPath from possibly repeated epochs; simultaneous jumps merge."""
    epochs = np.asarray(epochs, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = epochs <= horizon
    epochs, values = epochs[keep], values[keep]
    at_zero = epochs <= 0
    if at_zero.any():
        initial = values[at_zero][-1]
        epochs, values = epochs[~at_zero], values[~at_zero]
    if len(epochs):
        last = np.append(np.diff(epochs) > 0, True)
        epochs, values = epochs[last], values[last]
    return StepPath(epochs, values, horizon, initial)


def _zeros(dim):
    return 0.0 if dim == 1 else np.zeros(dim)


# --------------------------------------------------------------------------
# jump models

@dataclass
class SpaceTimeJumpModel:
    """Joint law of (J, W): W from ``waiting``, then J given W = w.

    Without a ``spatial_conditional`` each component of J is a fair +-1 step,
    multiplied by ``sqrt(variance_profile(w))`` when a profile is given.  A
    custom ``spatial_conditional(w, gen)`` returns one jump per entry of w.
    Centering is checked at construction unless ``validate`` is false.
    """
    waiting: object = field(default_factory=Exponential)
    dimension: int = 1
    variance_profile: Callable | None = None
    spatial_conditional: Callable | None = None
    validate: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ModelInvalid("dimension must be positive")
        if self.validate:
            register_model(self)

    @property
    def coupled(self) -> bool:
        return self.variance_profile is not None or self.spatial_conditional is not None

    def sample_jumps(self, w, rng):
        gen = as_generator(rng)
        w = np.asarray(w, dtype=float)
        if self.spatial_conditional is not None:
            return np.asarray(self.spatial_conditional(w, gen), dtype=float)
        shape = w.shape if self.dimension == 1 else w.shape + (self.dimension,)
        steps = _rademacher(gen, shape)
        if self.variance_profile is not None:
            scale = np.sqrt(np.asarray(self.variance_profile(w), dtype=float))
            steps = steps * (scale if self.dimension == 1 else scale[..., None])
        return steps

    def sample(self, rng, size):
        gen = as_generator(rng)
        w = np.asarray(self.waiting.sample(gen, size), dtype=float)
        return w, self.sample_jumps(w, gen)

    def sigma_sq(self, w):
        """Conditional covariance of J given W = w (default spatial law only)."""
        if self.spatial_conditional is not None:
            raise NotImplementedError("covariance of a custom spatial law is not known in closed form")
        v = 1.0 if self.variance_profile is None else float(self.variance_profile(w))
        return v * np.eye(self.dimension) if self.dimension > 1 else v


def register_model(model: SpaceTimeJumpModel, grid_size: int = 32, reps: int = 4000,
                   z_max: float = 5.0) -> SpaceTimeJumpModel:
    """Statistical check of E(J | W = w) = 0 and bounded second moments.

    Runs on a fixed internal stream so registration is reproducible.
    """
    gen = RngStream(_REGISTRATION_SEED).generator
    w_grid = np.unique(np.asarray(model.waiting.sample(gen, grid_size), dtype=float))
    second = []
    for w in w_grid:
        j = np.asarray(model.sample_jumps(np.full(reps, w), gen), dtype=float).reshape(reps, -1)
        if not np.all(np.isfinite(j)):
            raise ModelInvalid(f"non-finite jumps at w={w:g}")
        mean = j.mean(axis=0)
        sd = j.std(axis=0, ddof=1)
        se = sd / math.sqrt(reps)
        bad = np.where(se > 0, np.abs(mean) > z_max * se, np.abs(mean) > 1e-12)
        if bad.any():
            raise ModelInvalid(f"E(J | W={w:g}) is not zero (sample mean {mean.tolist()})")
        second.append(float(np.mean(np.sum(j * j, axis=1))))
    if not np.all(np.isfinite(second)):
        raise ModelInvalid("conditional second moment is not bounded on the grid")
    return model


# --------------------------------------------------------------------------
# plain CTRW

def _renewal_chunks(sample_chunk, horizon, start=256):
    """Draw chunks until the running epoch sum exceeds the horizon."""
    parts, total, size, drawn = [], 0.0, start, 0
    while True:
        chunk = sample_chunk(size)
        parts.append(chunk)
        drawn += size
        total += float(np.sum(chunk[0]))
        if total > horizon:
            return parts
        if drawn >= MAX_JUMPS:
            raise ZeroProgress(f"{drawn} jumps drawn without reaching horizon {horizon:g}")
        size = min(2 * size, MAX_JUMPS - drawn)


def simulate_ctrw(model: SpaceTimeJumpModel, horizon: float, rng,
                  time_scale: float = 1.0, space_scale: float = 1.0) -> StepPath:
    """Partial sums of jumps at the partial sums of waits, up to ``horizon``."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    gen = as_generator(rng)

    def chunk(k):
        w, j = model.sample(gen, k)
        return time_scale * w, space_scale * j

    parts = _renewal_chunks(chunk, horizon)
    w = np.concatenate([p[0] for p in parts])
    j = np.concatenate([p[1] for p in parts])
    return _step_path(np.cumsum(w), np.cumsum(j, axis=0), horizon, _zeros(model.dimension))


# --------------------------------------------------------------------------
# time-changed representation

@dataclass
class Scenario:
    """One shared draw: X from (J, U), the subordinator skeleton D read at the
    epochs of X, its inverse E, and the CTRW Y with waits W'_k."""
    U: np.ndarray
    J: np.ndarray
    W_prime: np.ndarray
    X: StepPath
    D: SubordinatorSkeleton
    E: TimeChange
    Y: StepPath


def identity_violations(sc: Scenario, times) -> int:
    """Count query times where Y_t differs from lim_{s down to t} X(E_s -)."""
    times = np.asarray(times, dtype=float)
    E = sc.E
    e = E(times)
    k = np.searchsorted(E.xs, times, side="right") - 1
    nxt = np.minimum(k + 1, len(E.xs) - 1)
    flat = (nxt > k) & (E.xs[nxt] > E.xs[k]) & (E.ys[nxt] == E.ys[k])
    rhs = np.where(flat, sc.X.left_limit(e), sc.X(e))
    return int(np.count_nonzero(sc.Y(times) != rhs))


@dataclass
class TimeChangedRepresentation:
    """A CTRW whose waits are D_U in law, built from one shared scenario.

    ``time_scale`` multiplies U (the epochs of X live in D-time) and
    ``space_scale`` multiplies J.
    """
    U_spec: object
    psi: BernsteinSymbol
    J_model: SpaceTimeJumpModel | None = None
    time_scale: float = 1.0
    space_scale: float = 1.0

    def __post_init__(self):
        if not self.psi.unbounded_certified:
            raise UnboundedSymbolRequired("the symbol must be certified unbounded")
        if self.J_model is None:
            self.J_model = SpaceTimeJumpModel(self.U_spec, validate=False)

    @property
    def waiting_law(self):
        return PhiMapped(self.U_spec, self.psi)

    def scenario(self, horizon: float, rng) -> Scenario:
        gen = as_generator(rng)
        jump_psi = BernsteinSymbol(0.0, self.psi.measure) if self.psi.measure is not None else None
        b = self.psi.drift

        def chunk(k):
            u_raw = np.asarray(self.U_spec.sample(gen, k), dtype=float)
            u = self.time_scale * u_raw
            jumps = (np.asarray(sample_subordinator_increment(jump_psi, u, gen), dtype=float)
                     if jump_psi is not None else np.zeros(k))
            j = self.space_scale * self.J_model.sample_jumps(u_raw, gen)
            return b * u + jumps, u, jumps, u_raw, j

        parts = _renewal_chunks(chunk, horizon)
        u = np.concatenate([p[1] for p in parts])
        jumps = np.concatenate([p[2] for p in parts])
        u_raw = np.concatenate([p[3] for p in parts])
        j = np.concatenate([p[4] for p in parts])
        T = np.cumsum(u)
        D = SubordinatorSkeleton(b, T, jumps, float(T[-1]))
        y_epochs = D(T)
        S = np.cumsum(j, axis=0)
        dim = self.J_model.dimension
        X = _step_path(T, S, float(T[-1]), _zeros(dim))
        Y = _step_path(y_epochs, S, horizon, _zeros(dim))
        E = generalized_inverse(D)
        w_prime = np.diff(np.concatenate([[0.0], y_epochs]))
        return Scenario(u_raw, j, w_prime, X, D, E, Y)

    def sample_Y(self, horizon: float, rng) -> StepPath:
        return self.scenario(horizon, rng).Y


def build_time_changed_representation(U_spec, psi: BernsteinSymbol,
                                      J_model: SpaceTimeJumpModel | None = None) -> TimeChangedRepresentation:
    return TimeChangedRepresentation(U_spec, psi, J_model)


def first_passage_batch(U_spec, psi: BernsteinSymbol, level: float, rng, size: int,
                        time_scale: float = 1.0, chunk: int = 2048, rows: int = 1024) -> np.ndarray:
    """E(level) = inf{s : D_s > level} with D read at the renewal epochs of U.

    Jumps of D over each renewal interval are lumped at its right end, so the
    answer is exact up to one renewal interval (of length time_scale * U).
    """
    gen = as_generator(rng)
    b = psi.drift
    jump_psi = BernsteinSymbol(0.0, psi.measure) if psi.measure is not None else None
    out = np.empty(size)
    for lo in range(0, size, rows):
        idx = np.arange(lo, min(lo + rows, size))
        pos = np.zeros(len(idx))
        clock = np.zeros(len(idx))
        while len(idx):
            u = time_scale * np.asarray(U_spec.sample(gen, (len(idx), chunk)), dtype=float)
            jp = (np.asarray(sample_subordinator_increment(jump_psi, u, gen), dtype=float)
                  if jump_psi is not None else np.zeros_like(u))
            inc = b * u + jp
            d_end = pos[:, None] + np.cumsum(inc, axis=1)
            t_end = clock[:, None] + np.cumsum(u, axis=1)
            crossed = d_end > level
            hit = crossed.any(axis=1)
            k = np.argmax(crossed, axis=1)
            rows_hit = np.nonzero(hit)[0]
            if len(rows_hit):
                kk = k[rows_hit]
                d_prev = d_end[rows_hit, kk] - inc[rows_hit, kk]
                t_prev = t_end[rows_hit, kk] - u[rows_hit, kk]
                by_drift = d_prev + b * u[rows_hit, kk] > level
                with np.errstate(divide="ignore", invalid="ignore"):
                    e = np.where(by_drift, t_prev + (level - d_prev) / b, t_end[rows_hit, kk])
                out[idx[rows_hit]] = e
            miss = ~hit
            idx, pos, clock = idx[miss], d_end[miss, -1], t_end[miss, -1]
    return out


def inverse_stable_marginal(alpha: float, scale: float, t: float, rng, size=None):
    """E_t for D with symbol scale * s**alpha: P(E_t <= x) = P(D_x >= t)."""
    d1 = sample_positive_stable(alpha, 1.0, rng, size)
    return t ** alpha * np.asarray(d1) ** (-alpha) / scale


@dataclass
class ScaledPair:
    """Y^n with waits a_n W and its representation through X^n and E^n."""
    n: int
    a_n: float
    psi: BernsteinSymbol
    psi_n: BernsteinSymbol
    representation: TimeChangedRepresentation

    def scenario(self, horizon, rng) -> Scenario:
        return self.representation.scenario(horizon, rng)

    def sample_Y(self, horizon, rng) -> StepPath:
        """Y^n from i.i.d. waits a_n W drawn without the shared scenario."""
        rep = self.representation
        model = SpaceTimeJumpModel(PhiMapped(rep.U_spec, self.psi), validate=False,
                                   dimension=rep.J_model.dimension)
        return simulate_ctrw(model, horizon, rng, time_scale=self.a_n, space_scale=rep.space_scale)

    def sample_E(self, level, rng, size) -> np.ndarray:
        rep = self.representation
        return first_passage_batch(rep.U_spec, self.psi_n, level, rng, size, time_scale=rep.time_scale)


def scaled_ctrw_pair(U_spec, psi: BernsteinSymbol, n: int, J_model=None,
                     space_scale: float | None = None) -> ScaledPair:
    if n < 1:
        raise ValueError("n must be at least 1")
    a_n = compute_a_n(PhiMapped(U_spec, psi), n).a_n
    psi_n = rescale_symbol(psi, n, a_n)
    sp = n ** -0.5 if space_scale is None else space_scale
    rep = TimeChangedRepresentation(U_spec, psi_n, J_model, time_scale=1.0 / n, space_scale=sp)
    return ScaledPair(n, a_n, psi, psi_n, rep)


# --------------------------------------------------------------------------
# lazily revealed processes

class LazyProcess:
    """A process with independent increments, revealed at increasing times.

    Values at any increasing list of times have the exact joint law.
    """

    def __init__(self, increment: Callable, rng, dim: int = 1):
        self._increment = increment
        self._gen = None if rng is None else as_generator(rng)
        self._t = 0.0
        self._v = _zeros(dim)

    def at(self, times):
        times = np.asarray(times, dtype=float)
        if len(times) == 0:
            return times.copy()
        dt = np.diff(np.concatenate([[self._t], times]))
        if np.any(dt < 0):
            raise ValueError("times must be increasing and past the last query")
        inc = np.asarray(self._increment(dt, self._gen), dtype=float)
        vals = self._v + np.cumsum(inc, axis=0)
        self._t, self._v = float(times[-1]), vals[-1]
        return vals


def subordinator_process(psi: BernsteinSymbol, rng) -> LazyProcess:
    return LazyProcess(lambda dt, g: sample_subordinator_increment(psi, dt, g), rng)


def brownian_process(rng, sigma: float = 1.0, dim: int = 1) -> LazyProcess:
    def inc(dt, g):
        shape = dt.shape if dim == 1 else dt.shape + (dim,)
        z = g.standard_normal(shape)
        return sigma * z * (np.sqrt(dt) if dim == 1 else np.sqrt(dt)[:, None])
    return LazyProcess(inc, rng, dim)


def drift_process(rate: float = 1.0) -> LazyProcess:
    return LazyProcess(lambda dt, g: rate * dt, None)


# --------------------------------------------------------------------------
# random walks in random environment

def quenched_type1(xi, U_model: SpaceTimeJumpModel, horizon: float, rng,
                   time_scale: float = 1.0, space_scale: float = 1.0) -> StepPath:
    """t -> X(xi(t)) for a walk X independent of the environment xi.

    ``xi`` is a continuous TimeChange, or a LazyProcess subordinator D whose
    inverse is the environment.  In the latter case D is revealed only at the
    renewal epochs of X; since X and D are independent this reproduces the
    exact joint law of (X, E) at every epoch.
    """
    gen = as_generator(rng)
    dim = U_model.dimension
    if isinstance(xi, TimeChange):
        top = float(xi(horizon))
        if top <= 0:
            return StepPath([], np.zeros((0,) if dim == 1 else (0, dim)), horizon, _zeros(dim))
        walk = simulate_ctrw(U_model, top, gen, time_scale, space_scale)
        return compose(walk, xi, horizon)

    def chunk(k):
        w, j = U_model.sample(gen, k)
        return time_scale * w, space_scale * j

    epochs, jumps, d_vals = [], [], []
    clock = 0.0
    size = 256
    while True:
        w, j = chunk(size)
        t = clock + np.cumsum(w)
        d = xi.at(t)
        epochs.append(t)
        jumps.append(j)
        d_vals.append(d)
        clock = float(t[-1])
        if d[-1] > horizon:
            break
        if sum(len(e) for e in epochs) >= MAX_JUMPS:
            raise ZeroProgress("environment never passed the horizon")
        size *= 2
    T = np.concatenate(epochs)
    Dv = np.concatenate(d_vals)
    S = np.cumsum(np.concatenate(jumps), axis=0)
    # piecewise-linear D through its revealed values; its inverse is continuous
    env = TimeChange(np.concatenate([[0.0], Dv]), np.concatenate([[0.0], T]))
    walk = _step_path(T, S, float(T[-1]), _zeros(dim))
    return compose(walk, env, horizon)


@dataclass
class TemporalLandscape:
    """Trap depths tau_n and the finite-mean waits that they modulate.

    The n-th wait is ``tau_n * V_n**power``, divided by ``E V**power`` when
    ``normalize`` is set so that the modulated waits have mean one.
    """
    tau_law: Callable
    waiting: object = field(default_factory=Exponential)
    power: float = 1.0
    normalize: bool = True

    def normalization(self) -> float:
        if not self.normalize:
            return 1.0
        if self.power == 1.0 and hasattr(self.waiting, "mean"):
            return float(self.waiting.mean())
        if isinstance(self.waiting, Exponential):
            return math.gamma(1.0 + self.power) / self.waiting.rate ** self.power
        p = self.power
        val, _ = integrate.quad(lambda v: p * v ** (p - 1) * float(self.waiting.sf(v)), 0, np.inf, limit=500)
        return val

    def realize(self, count: int, rng) -> np.ndarray:
        tau = np.asarray(self.tau_law(as_generator(rng), count), dtype=float)
        if np.any(tau <= 0):
            raise ModelInvalid("trap depths must be positive")
        return tau

    def waits(self, count: int, rng) -> np.ndarray:
        v = np.asarray(self.waiting.sample(as_generator(rng), count), dtype=float)
        return v ** self.power / self.normalization()


def quenched_type2(landscape: TemporalLandscape, J_model: SpaceTimeJumpModel, horizon: float, rng,
                   tau=None, time_scale: float = 1.0, space_scale: float = 1.0) -> StepPath:
    """Walk with epochs sum tau_i U_i for a given trap realization ``tau``.

    Without ``tau`` the landscape is drawn along the way (an annealed draw).
    """
    gen = as_generator(rng)
    norm = landscape.normalization()
    given = None if tau is None else np.asarray(tau, dtype=float)
    used = 0

    def chunk(k):
        nonlocal used
        if given is None:
            t = landscape.realize(k, gen)
        else:
            if used + k > len(given):
                k = len(given) - used
                if k <= 0:
                    raise ValueError("the landscape realization is too short for this horizon")
            t = given[used:used + k]
        used += k
        v = np.asarray(landscape.waiting.sample(gen, k), dtype=float)
        w = t * v ** landscape.power / norm
        return time_scale * w, space_scale * J_model.sample_jumps(w, gen)

    parts = _renewal_chunks(chunk, horizon)
    w = np.concatenate([p[0] for p in parts])
    j = np.concatenate([p[1] for p in parts])
    return _step_path(np.cumsum(w), np.cumsum(j, axis=0), horizon, _zeros(J_model.dimension))


def general_scheme_ctrw(A: LazyProcess, D: LazyProcess, U_spec, n: int, horizon: float, rng,
                        a_n: float | None = None) -> StepPath:
    """CTRW whose jumps and waits are increments of (A, D) over renewal epochs.

    Epochs of U are ``a_n * sum U_j`` (``a_n = 1/n`` by default); the walk jumps
    to A(T_i) at time D(T_i).
    """
    gen = as_generator(rng)
    scale = 1.0 / n if a_n is None else a_n
    times, a_vals, d_vals = [], [], []
    clock, size, drawn = 0.0, 256, 0
    while True:
        u = scale * np.asarray(U_spec.sample(gen, size), dtype=float)
        t = clock + np.cumsum(u)
        a_vals.append(A.at(t))
        d = D.at(t)
        d_vals.append(d)
        times.append(t)
        clock = float(t[-1])
        drawn += size
        if d[-1] > horizon:
            break
        if drawn >= MAX_JUMPS:
            raise ZeroProgress("D never passed the horizon")
        size *= 2
    av = np.concatenate(a_vals)
    return _step_path(np.concatenate(d_vals), av, horizon, _zeros(1 if av.ndim == 1 else av.shape[1]))


# --------------------------------------------------------------------------
# relative stability and quenched variance

def sum_of_waits(U_spec, n: int, reps: int, rng, chunk: int = 1 << 16) -> np.ndarray:
    """reps independent copies of U_1 + ... + U_n."""
    gen = as_generator(rng)
    out = np.zeros(reps)
    left = n
    while left:
        k = min(left, max(1, chunk // reps))
        out += np.asarray(U_spec.sample(gen, (reps, k)), dtype=float).sum(axis=1)
        left -= k
    return out


def relative_stability_sample(U_spec, n: int, reps: int, rng) -> np.ndarray:
    """Samples of a_n T_n, which concentrate at 1 for relatively stable laws."""
    a_n = compute_a_n(U_spec, n).a_n
    return a_n * sum_of_waits(U_spec, n, reps, rng)


def residual_lifetime(U_spec, t: float, reps: int, rng) -> np.ndarray:
    """Z_t = T_{N_t + 1} - t for the renewal process of U."""
    gen = as_generator(rng)
    out = np.empty(reps)
    for r in range(reps):
        parts = _renewal_chunks(lambda k: (np.asarray(U_spec.sample(gen, k), dtype=float),), t)
        T = np.cumsum(np.concatenate([p[0] for p in parts]))
        out[r] = T[np.searchsorted(T, t, side="right")] - t
    return out


def sigma_sq_mu(sigma_sq: Callable, mu, mc_samples: int = 10 ** 6):
    """Integral of the conditional covariance sigma_sq(w) against the law mu."""
    def as_arr(w):
        return np.asarray(sigma_sq(w), dtype=float)

    if isinstance(mu, PointMass):
        return as_arr(mu.value)
    if isinstance(mu, Atomic):
        return sum(m * as_arr(x) for x, m in mu.atoms) / mu.total_mass
    if hasattr(mu, "pdf"):
        lower = float(getattr(mu, "x_m", 0.0) or 0.0)
        val, err = integrate.quad_vec(lambda w: as_arr(w) * float(mu.pdf(w)), lower, np.inf,
                                      epsabs=1e-12, epsrel=1e-10, limit=500)
        if not np.all(np.isfinite(val)) or np.max(np.abs(err)) > 1e-7:
            raise QuadratureFailure(f"sigma^2 integral did not converge (error {np.max(err):g})")
        return val
    gen = RngStream(_REGISTRATION_SEED, 1).generator
    w = np.asarray(mu.sample(gen, mc_samples), dtype=float)
    return np.mean([as_arr(x) for x in w], axis=0)


@dataclass
class QuenchedVarianceReport:
    t_grid: np.ndarray
    xi_values: np.ndarray
    qv_mean: np.ndarray
    qv_reference: np.ndarray
    z: np.ndarray
    accrual: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def to_dict(self):
        return {k: np.asarray(v).tolist() for k, v in self.__dict__.items()}


def _zscore(mean, sd, ref, reps):
    se = sd / math.sqrt(reps)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (mean - ref) / se, np.where(mean == ref, 0.0, np.inf))
    return z


def quenched_variance_check(xi: TimeChange, model: SpaceTimeJumpModel, t_grid, reps: int, rng,
                            n: int = 1000) -> QuenchedVarianceReport:
    """Quadratic variation of X^n_t = n^(-1/2) X(n xi(t)) against its mean.

    The reference is tr(sigma^2_mu) xi(t) / E(U), exact for exponential waits.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    gen = as_generator(rng)
    horizon = float(t_grid.max())
    qv = np.zeros((reps, len(t_grid)))
    for r in range(reps):
        path = quenched_type1(xi, model, horizon, gen, time_scale=1.0 / n, space_scale=n ** -0.5)
        sq = path.jumps() ** 2
        sq = sq if sq.ndim == 1 else sq.sum(axis=1)
        cum = np.concatenate([[0.0], np.cumsum(sq)])
        qv[r] = cum[path.count(t_grid)]
    if model.spatial_conditional is None and model.variance_profile is None:
        tr = float(model.dimension)
    else:
        tr = float(np.trace(np.atleast_2d(sigma_sq_mu(model.sigma_sq, model.waiting))))
    xi_vals = np.asarray(xi(t_grid), dtype=float)
    ref = tr * xi_vals / float(model.waiting.mean())
    mean = qv.mean(axis=0)
    sd = qv.std(axis=0, ddof=1)
    accrual = np.diff(np.concatenate([np.zeros((reps, 1)), qv], axis=1), axis=1).max(axis=0)
    return QuenchedVarianceReport(t_grid, xi_vals, mean, ref, _zscore(mean, sd, ref, reps), accrual)
