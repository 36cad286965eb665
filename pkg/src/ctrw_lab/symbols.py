"""Bernstein symbols, their Levy measures, and Laplace-transform numerics.

A symbol ``psi(s) = b*s + int (1 - exp(-s*y)) mu(dy)`` is stored through its
characteristics ``(b, mu)``.  Levy measures form a closed set of shapes:
a stable power law, a scaled probability law, or finitely many atoms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma

from .errors import (DegenerateTruncation, InsufficientGrid, NonIntegrableMeasure,
                     QuadratureFailure, RootNotBracketed, UnboundedSymbolRequired)

QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-12
# tolerance of the complete-monotonicity certificate, relative to the natural
# size of a k-th divided difference on the grid
CM_REL_TOL = 1e-7


def quad(fn, a, b, points=None, limit=200):
    """scipy quad with a hard failure when the error estimate is too large."""
    val, err = integrate.quad(fn, a, b, points=points, limit=limit,
                              epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL)
    if not np.isfinite(val) or err > max(1e3 * QUAD_ABS_TOL, 1e-8 * abs(val)):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] failed: value={val}, err={err}")
    return val


# --------------------------------------------------------------------------
# Levy measures

@dataclass(frozen=True)
class StablePower:
    """Density scale*alpha/Gamma(1-alpha) * y**(-alpha-1); symbol scale*s**alpha."""
    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise NonIntegrableMeasure(f"stable index must lie in (0, 1), got {self.alpha}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def laplace_exponent(self, s):
        return self.scale * np.power(s, self.alpha)

    def tail(self, y):
        return self.scale * np.power(y, -self.alpha) / gamma(1.0 - self.alpha)

    def scaled(self, n, a):
        return StablePower(self.alpha, self.scale * n * a ** self.alpha)

    @property
    def total_mass(self):
        return math.inf

    def to_dict(self):
        return {"kind": "stable_power", "alpha": self.alpha, "scale": self.scale}


@dataclass(frozen=True)
class ScaledDistribution:
    """``rate * f(dy / jump_scale)``: a probability law ``f`` with total mass ``rate``.

    ``base`` is any distribution object from :mod:`ctrw_lab.samplers` exposing
    ``one_minus_laplace`` and ``sf``.
    """
    base: object
    rate: float
    jump_scale: float = 1.0

    def __post_init__(self):
        if not (self.rate > 0 and self.jump_scale > 0):
            raise ValueError("rate and jump_scale must be positive")

    def laplace_exponent(self, s):
        return self.rate * self.base.one_minus_laplace(np.asarray(s, dtype=float) * self.jump_scale)

    def tail(self, y):
        return self.rate * self.base.sf(np.asarray(y, dtype=float) / self.jump_scale)

    def scaled(self, n, a):
        return ScaledDistribution(self.base, self.rate * n, self.jump_scale * a)

    @property
    def total_mass(self):
        # an atom of the base at zero carries no jumps
        return self.rate * float(self.base.sf(0.0))

    def to_dict(self):
        return {"kind": "scaled_distribution", "base": self.base.to_dict(),
                "rate": self.rate, "jump_scale": self.jump_scale}


@dataclass(frozen=True)
class Atomic:
    atoms: tuple  # ((location, mass), ...)

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        if not atoms or any(x <= 0 or w <= 0 for x, w in atoms):
            raise ValueError("atoms need positive locations and masses")
        object.__setattr__(self, "atoms", atoms)

    @property
    def locations(self):
        return np.array([x for x, _ in self.atoms])

    @property
    def masses(self):
        return np.array([w for _, w in self.atoms])

    def laplace_exponent(self, s):
        s = np.asarray(s, dtype=float)
        return np.sum(self.masses * -np.expm1(-np.multiply.outer(s, self.locations)), axis=-1)

    def tail(self, y):
        y = np.asarray(y, dtype=float)
        return np.sum(self.masses * (np.multiply.outer(y, np.ones_like(self.locations)) < self.locations),
                      axis=-1)

    def scaled(self, n, a):
        return Atomic(tuple((x * a, w * n) for x, w in self.atoms))

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def to_dict(self):
        return {"kind": "atomic", "atoms": [list(a) for a in self.atoms]}


LevyMeasure = StablePower | ScaledDistribution | Atomic


def measure_from_dict(d):
    if d is None:
        return None
    kind = d["kind"]
    if kind == "stable_power":
        return StablePower(d["alpha"], d.get("scale", 1.0))
    if kind == "atomic":
        return Atomic(tuple(tuple(a) for a in d["atoms"]))
    if kind == "scaled_distribution":
        from .samplers import distribution_from_dict
        return ScaledDistribution(distribution_from_dict(d["base"]), d["rate"], d.get("jump_scale", 1.0))
    raise ValueError(f"unknown measure kind {kind!r}")


# --------------------------------------------------------------------------
# symbols

@dataclass(frozen=True)
class BernsteinSymbol:
    drift: float = 0.0
    measure: LevyMeasure | None = None
    unbounded_certified: bool = False

    def __post_init__(self):
        if self.drift < 0:
            raise ValueError("drift must be nonnegative")

    def __call__(self, s):
        return eval_symbol(self, s)

    def certify(self) -> "BernsteinSymbol":
        """Return a copy flagged unbounded, or raise if that cannot be shown.

        Only two shapes are accepted: positive drift, or a stable component.
        A finite measure without drift yields a bounded symbol.
        """
        if self.drift > 0 or isinstance(self.measure, StablePower):
            return replace(self, unbounded_certified=True)
        raise UnboundedSymbolRequired("symbol has no drift and a finite Levy measure")

    def to_dict(self):
        return {"drift": self.drift,
                "measure": None if self.measure is None else self.measure.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "BernsteinSymbol":
        return cls(float(d.get("drift", 0.0)), measure_from_dict(d.get("measure"))).certify_if_possible()

    def certify_if_possible(self) -> "BernsteinSymbol":
        try:
            return self.certify()
        except UnboundedSymbolRequired:
            return self


def identity_symbol() -> BernsteinSymbol:
    return BernsteinSymbol(1.0).certify()


def stable_symbol(alpha: float, scale: float = 1.0) -> BernsteinSymbol:
    return BernsteinSymbol(0.0, StablePower(alpha, scale)).certify()


def eval_symbol(psi: BernsteinSymbol, s):
    """psi(s); accepts scalars or arrays of positive reals."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("symbols are evaluated on s >= 0")
    out = psi.drift * s_arr
    if psi.measure is not None:
        part = psi.measure.laplace_exponent(s_arr)
        if not np.all(np.isfinite(part)):
            raise NonIntegrableMeasure("Levy integral diverged")
        out = out + part
    return float(out) if np.ndim(out) == 0 else out


def apply_phi_hat(f_hat: Callable, psi: BernsteinSymbol) -> Callable:
    """The Laplace transform s -> f_hat(psi(s))."""
    def mapped(s):
        return f_hat(eval_symbol(psi, s))
    return mapped


def compose_symbols(outer: BernsteinSymbol, inner: BernsteinSymbol) -> Callable:
    """s -> outer(inner(s)); again a Bernstein function."""
    return lambda s: eval_symbol(outer, eval_symbol(inner, s))


# --------------------------------------------------------------------------
# complete monotonicity

@dataclass
class CMReport:
    passed: bool
    orders: list  # per order: dict(order, passed, worst, tol)
    note: str = "grid certificate only; complete monotonicity is not proven"

    def to_dict(self):
        return {"passed": self.passed, "orders": self.orders, "note": self.note}


def divided_differences(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    d = np.asarray(y, dtype=float)
    for k in range(1, order + 1):
        d = (d[1:] - d[:-1]) / (x[k:] - x[:-k])
    return d


def check_complete_monotone(f: Callable, grid: Sequence[float], order: int = 4) -> CMReport:
    """Certify on a grid that (-1)^k f[s_i, ..., s_{i+k}] >= 0 for k <= order."""
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or len(x) < order + 2:
        raise InsufficientGrid(f"need at least {order + 2} grid points, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise InsufficientGrid("grid must be strictly increasing")
    y = np.array([f(v) for v in x], dtype=float)
    scale = max(np.max(np.abs(y)), np.finfo(float).tiny)
    h = np.min(np.diff(x))
    orders = []
    for k in range(order + 1):
        dd = divided_differences(x, y, k) * (-1) ** k
        tol = CM_REL_TOL * scale / h ** k
        worst = float(dd.min())
        orders.append({"order": k, "passed": bool(worst >= -tol), "worst": worst, "tol": tol})
    return CMReport(all(o["passed"] for o in orders), orders)


# --------------------------------------------------------------------------
# truncation and rescaling

def build_truncation_symbol(W, m: float, form: str = "stable") -> tuple[BernsteinSymbol, float]:
    """Drift-one symbol whose jump part has mass 1/mu_1^m.

    ``W`` is a distribution object (see :mod:`ctrw_lab.samplers`).  With
    ``form="stable"`` the jump part is the stable measure of W's tail index,
    giving the subordinator ``t + D_{t/mu}``; with ``form="general"`` it is
    ``f(dy)/mu``.  Returns the symbol and ``mu = E(W; W <= m)``.
    """
    if not m > 0:
        raise ValueError("truncation level must be positive")
    mu = float(W.truncated_moment(m, 1))
    if not mu > 0:
        raise DegenerateTruncation(f"E(W; W <= {m}) vanishes")
    if form == "stable":
        alpha = W.tail_function().alpha
        if alpha is None:
            raise ValueError("stable form needs a known tail index")
        measure = StablePower(alpha, 1.0 / mu)
    elif form == "general":
        measure = ScaledDistribution(W, 1.0 / mu)
    else:
        raise ValueError(f"unknown truncation form {form!r}")
    return BernsteinSymbol(1.0, measure).certify(), mu


def rescale_symbol(psi: BernsteinSymbol, n: int, a_n: float) -> BernsteinSymbol:
    """Symbol with drift n*a_n*b and measure n*mu(dy/a_n)."""
    if not psi.unbounded_certified:
        raise UnboundedSymbolRequired("rescaling needs a certified symbol")
    if n == 1 and a_n == 1.0:
        return psi
    measure = None if psi.measure is None else psi.measure.scaled(n, a_n)
    return BernsteinSymbol(n * a_n * psi.drift, measure, unbounded_certified=True)


@dataclass(frozen=True)
class ScalingSchedule:
    n: int
    a_n: float
    rule: str


def compute_a_n(f_hat, n: int, normalize_first: bool = True) -> ScalingSchedule:
    """Solve 1 - f_hat(a) = 1/n.

    ``f_hat`` is a Laplace transform callable or a distribution object; for
    the latter its ``one_minus_laplace`` is used to avoid cancellation.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1 and normalize_first:
        return ScalingSchedule(1, 1.0, "a_1 = 1 by convention")
    if hasattr(f_hat, "one_minus_laplace"):
        gap = f_hat.one_minus_laplace
    else:
        gap = lambda s: 1.0 - f_hat(s)
    target = 1.0 / n

    def g(a):
        return float(gap(a)) - target

    hi = 1.0
    while g(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise RootNotBracketed("1 - f_hat never reaches 1/n")
    lo = hi
    while g(lo) > 0:
        lo *= 0.5
        if lo < 1e-300:
            raise RootNotBracketed("1 - f_hat stays above 1/n near zero")
    if lo == hi:
        hi = lo * 2.0
    a = optimize.brentq(g, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=500)
    return ScalingSchedule(n, a, "root of 1 - f_hat(a) = 1/n")


# --------------------------------------------------------------------------
# tail integrals and certificates

def integrated_tail(mu: LevyMeasure, s: float) -> float:
    """I(s) = int_0^s mu(y, inf) dy."""
    if not s > 0:
        raise ValueError("s must be positive")
    if isinstance(mu, StablePower):
        return mu.scale * s ** (1.0 - mu.alpha) / ((1.0 - mu.alpha) * gamma(1.0 - mu.alpha))
    if isinstance(mu, Atomic):
        return float(np.sum(mu.masses * np.minimum(mu.locations, s)))
    if isinstance(mu, ScaledDistribution):
        return quad(lambda y: float(mu.tail(y)), 0.0, s, limit=500)
    raise TypeError(f"unsupported measure {mu!r}")


@dataclass
class InjectionReport:
    lam: float
    rows: list  # per s: dict(s, ratio, lower, upper, violation)
    max_violation: float

    @property
    def passed(self):
        return self.max_violation <= 0.0

    def to_dict(self):
        return {"lambda": self.lam, "rows": self.rows, "max_violation": self.max_violation}


def certify_injection_bound(psi: BernsteinSymbol, lam: float, s_grid) -> InjectionReport:
    """Check the two-sided bound of psi(1/s)/psi(1/(lam*s)) by integrated tails.

    A positive drift b is folded in as b + I(s), which keeps both constants.
    """
    lo_c, hi_c = (math.e - 1) / math.e, math.e / (math.e - 1)

    def itail(s):
        val = psi.drift
        if psi.measure is not None:
            val += integrated_tail(psi.measure, s)
        return val

    rows, worst = [], -math.inf
    for s in np.asarray(s_grid, dtype=float):
        ratio = eval_symbol(psi, 1.0 / s) / eval_symbol(psi, 1.0 / (lam * s))
        base = lam * itail(s) / itail(lam * s)
        lower, upper = lo_c * base, hi_c * base
        violation = max(lower - ratio, ratio - upper)
        worst = max(worst, violation)
        rows.append({"s": float(s), "ratio": ratio, "lower": lower, "upper": upper,
                     "violation": violation})
    return InjectionReport(lam, rows, worst)


def check_regularity(psi: BernsteinSymbol, s_sequence, tol: float = 1e-3) -> bool:
    """True when s/psi(s) decreases along the sequence and ends below ``tol``."""
    s = np.asarray(s_sequence, dtype=float)
    if len(s) < 5 or np.any(np.diff(s) >= 0) or np.any(s <= 0):
        raise ValueError("need at least 5 strictly decreasing positive points")
    r = s / np.asarray(eval_symbol(psi, s))
    return bool(np.all(np.diff(r) <= 1e-15 * r[:-1]) and r[-1] < tol)


@dataclass
class HomogeneityReport:
    kind: str  # "sub", "super" or "neither"
    sub_witness: dict = field(default_factory=dict)    # lambda -> C or None
    super_witness: dict = field(default_factory=dict)
    note: str = "classification holds on the tested grid only"


def check_homogeneity(mu: LevyMeasure, lambdas, xs, c_grid=None) -> HomogeneityReport:
    """Search a log grid of C for mu(C x, inf) <= lam mu(x, inf) (sub) or >= (super)."""
    xs = np.asarray(xs, dtype=float)
    cs = np.logspace(-8, 8, 1601) if c_grid is None else np.asarray(c_grid, dtype=float)
    base = np.asarray(mu.tail(xs), dtype=float)
    shifted = np.asarray(mu.tail(np.multiply.outer(cs, xs)), dtype=float)  # (C, x)
    slack = 1e-12 * np.maximum(base, 1e-300)
    sub_w, sup_w = {}, {}
    for lam in lambdas:
        ok_sub = np.all(shifted <= lam * base + slack, axis=1)
        ok_sup = np.all(lam * base <= shifted + slack, axis=1)
        sub_w[float(lam)] = float(cs[ok_sub][np.argmin(np.abs(np.log(cs[ok_sub])))]) if ok_sub.any() else None
        sup_w[float(lam)] = float(cs[ok_sup][np.argmin(np.abs(np.log(cs[ok_sup])))]) if ok_sup.any() else None
    if all(c is not None for c in sub_w.values()):
        kind = "sub"
    elif all(c is not None for c in sup_w.values()):
        kind = "super"
    else:
        kind = "neither"
    return HomogeneityReport(kind, sub_w, sup_w)
