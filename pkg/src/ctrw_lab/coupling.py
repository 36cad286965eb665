"""Dyadic customer/server couplings of two tails and the path-coupling pipeline.

Two laws on [0, inf) are discretized on unit intervals I_j = [j, j+1).  Mass
common to both is coupled inside each interval.  The excess
``e_j = F1(I_j) - F2(I_j)`` is then matched inside each dyadic block
[2^n, 2^(n+1)): intervals with e_j < 0 are customers, the others servers, and
customers are served first-in-first-out by index from servers taken in index
order.  Whatever a block cannot match is its residual; residuals of all blocks
are paired in a final first-in-first-out pass.

Convention: F1 is the law of Y (the mapped, finite-mean representation),
F2 the law of X; a customer interval carries surplus X mass, a server
interval surplus Y mass.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .errors import HorizonTooSmall, MarginalMismatch

DEFAULT_J_MAX = 2 ** 16
MARGINAL_TOL = 1e-12


# --------------------------------------------------------------------------
# discretized tails

@dataclass(frozen=True)
class DiscretizedTail:
    masses: np.ndarray      # mass of I_j, j < j_max
    residual: float         # mass beyond j_max
    source: object = None   # tail evaluator used to build it

    @property
    def j_max(self):
        return len(self.masses)

    def survival(self):
        """F(j) = mass of [j, inf) for j = 0..j_max."""
        tail = np.concatenate([np.cumsum(self.masses[::-1])[::-1], [0.0]])
        return tail + self.residual


def interval_masses(tail, j_max: int = DEFAULT_J_MAX) -> DiscretizedTail:
    """Masses F(j) - F(j+1) of a nonnegative law given by ``tail(t) = P(X > t)``.

    The law is taken to live on [0, inf), so F(0) = 1 even when ``tail(0) < 1``
    (an atom at zero belongs to I_0).
    """
    j = np.arange(j_max + 1, dtype=float)
    F = np.array(tail(j), dtype=float).reshape(-1)
    F[0] = 1.0
    if np.any(np.diff(F) > 1e-15) or F.min() < -1e-15:
        raise ValueError("tail must be non-increasing with values in [0, 1]")
    masses = np.maximum(F[:-1] - F[1:], 0.0)
    residual = max(float(F[-1]), 0.0)
    return DiscretizedTail(masses, residual, tail)


def dyadic_blocks(j_max: int):
    """Block boundaries [0,1), [1,2), [2,4), ... covering range(j_max)."""
    edges = [0, 1]
    while edges[-1] < j_max:
        edges.append(min(2 * edges[-1], j_max))
    return list(zip(edges[:-1], edges[1:]))


# --------------------------------------------------------------------------
# the plan

@dataclass
class CouplingPlan:
    F1: DiscretizedTail
    F2: DiscretizedTail
    within: np.ndarray                 # min(F1(I_j), F2(I_j))
    excess: np.ndarray                 # F1(I_j) - F2(I_j)
    cross: np.ndarray                  # rows (j_customer, k_server, mass) inside blocks
    block_residual: list               # per block: dict(start, stop, residual)
    last_server: np.ndarray            # per interval: last server index, -1 unserved, -2 not a customer
    leftover_pairs: np.ndarray         # rows (j_x, k_y, mass) pairing block residuals; -1 = beyond j_max
    beyond_common: float               # min of the two masses beyond j_max
    beyond_bound: float                # certified bound on the excess mass beyond j_max
    notes: list = field(default_factory=list)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def j_max(self):
        return self.F1.j_max

    def marginals(self):
        """Reconstruct (F1(I_j), F2(I_j)) from the plan's assignments."""
        m1 = self.within.copy()
        m2 = self.within.copy()
        for rows, cx, cy in ((self.cross, 0, 1), (self.leftover_pairs, 0, 1)):
            if len(rows) == 0:
                continue
            jx, ky, w = rows[:, cx].astype(int), rows[:, cy].astype(int), rows[:, 2]
            ok = jx >= 0
            np.add.at(m2, jx[ok], w[ok])
            ok = ky >= 0
            np.add.at(m1, ky[ok], w[ok])
        return m1, m2

    def to_csv(self, path):
        """Rows (j, k, mass): j indexes X intervals, k indexes Y intervals."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["j", "k", "mass"])
            for j in np.nonzero(self.within > 0)[0]:
                wr.writerow([int(j), int(j), f"{self.within[j]:.17g}"])
            for rows in (self.cross, self.leftover_pairs):
                for jx, ky, w in rows:
                    wr.writerow([int(jx), int(ky), f"{w:.17g}"])


def _fifo_match(demand: np.ndarray, supply: np.ndarray):
    """Northwest-corner matching of two ordered mass lists.

    Returns (pairs, last) where pairs are (demand index, supply index, mass)
    and last[d] is the index of the last supplier of demand d, or -1 when the
    supply ran out before d was fully served.
    """
    pairs = []
    last = np.full(len(demand), -1, dtype=int)
    di = si = 0
    need = demand[0] if len(demand) else 0.0
    have = supply[0] if len(supply) else 0.0
    while di < len(demand) and si < len(supply):
        take = min(need, have)
        if take > 0:
            pairs.append((di, si, take))
        need -= take
        have -= take
        # compare against the scale of the inputs so rounding cannot create
        # phantom partial services
        if need <= 1e-15 * demand[di]:
            last[di] = si
            di += 1
            need = demand[di] if di < len(demand) else 0.0
            if have <= 1e-15 * supply[si]:
                si += 1
                have = supply[si] if si < len(supply) else 0.0
        else:
            si += 1
            have = supply[si] if si < len(supply) else 0.0
    return pairs, last


def dyadic_coupling(F1: DiscretizedTail, F2: DiscretizedTail, certify_beyond: bool = True) -> CouplingPlan:
    """Build the within-interval plus dyadic-queue coupling of F1 (Y) and F2 (X)."""
    if F1.j_max != F2.j_max:
        raise ValueError("both tails must be discretized to the same j_max")
    a = np.asarray(F1.masses, dtype=np.longdouble)
    b = np.asarray(F2.masses, dtype=np.longdouble)
    within = np.minimum(a, b)
    excess = a - b
    cross = []
    last_server = np.full(F1.j_max, -2, dtype=int)
    block_residual = []
    left_x, left_y = [], []  # leftovers (index, mass) in index order
    for start, stop in dyadic_blocks(F1.j_max):
        e = excess[start:stop]
        cust = np.nonzero(e < 0)[0]
        serv = np.nonzero(e >= 0)[0]
        demand = -e[cust]
        supply = e[serv].copy()
        pairs, last = _fifo_match(demand, supply)
        served_d = np.zeros(len(cust), dtype=np.longdouble)
        used_s = np.zeros(len(serv), dtype=np.longdouble)
        for di, si, w in pairs:
            cross.append((start + cust[di], start + serv[si], w))
            served_d[di] += w
            used_s[si] += w
        if len(serv):
            last_server[start + cust] = np.where(last >= 0, start + serv[np.maximum(last, 0)], -1)
        else:
            last_server[start + cust] = -1
        for di in range(len(cust)):
            rest = demand[di] - served_d[di]
            if rest > 1e-15 * demand[di]:
                left_x.append((start + cust[di], rest))
        for si in range(len(serv)):
            rest = supply[si] - used_s[si]
            if rest > 1e-15 * max(supply[si], 1e-300):
                left_y.append((start + serv[si], rest))
        block_residual.append({"start": start, "stop": stop, "residual": float(np.sum(e))})

    # beyond j_max: mass common to both tails continues the same scheme; only
    # the difference of the two residual masses must be paired here
    r1, r2 = F1.residual, F2.residual
    beyond_common = min(r1, r2)
    if r1 > r2:
        left_y.append((-1, np.longdouble(r1 - r2)))
    elif r2 > r1:
        left_x.append((-1, np.longdouble(r2 - r1)))
    notes = []
    beyond_bound = 0.0
    if beyond_common > 0:
        beyond_bound, note = _beyond_bound(F1, F2, certify_beyond)
        notes.append(note)

    # pair block leftovers first-in-first-out, the region beyond j_max last
    order = lambda item: (item[0] < 0, item[0])
    left_x.sort(key=order)
    left_y.sort(key=order)
    pairs, _ = _fifo_match(np.array([m for _, m in left_x], dtype=np.longdouble),
                           np.array([m for _, m in left_y], dtype=np.longdouble))
    leftover_pairs = np.array([(left_x[d][0], left_y[s][0], float(w)) for d, s, w in pairs],
                              dtype=float).reshape(-1, 3)
    cross_arr = np.array([(j, k, float(w)) for j, k, w in cross], dtype=float).reshape(-1, 3)
    plan = CouplingPlan(F1, F2, within.astype(float), excess.astype(float), cross_arr, block_residual,
                        last_server, leftover_pairs, float(beyond_common), float(beyond_bound), notes)
    _check_marginals(plan)
    return plan


def _beyond_bound(F1, F2, certify):
    """Bound the mass beyond j_max that the continued scheme could move by more than 1.

    Only the interval excesses can travel; past j_max they sum to |g(j_max)|
    with g = F1 - F2 as long as the excess keeps one sign.  The sign is
    checked on the last block and, when a source tail is available, on a
    geometric grid out to 2^20 * j_max.
    """
    J = F1.j_max
    g_J = abs(F1.residual - F2.residual)
    e = np.asarray(F1.masses[J // 2:]) - np.asarray(F2.masses[J // 2:])
    signs = {int(np.sign(v)) for v in e if v != 0}
    certified = len(signs) <= 1
    if certified and F1.source is not None and F2.source is not None:
        grid = J * 2.0 ** np.arange(0, 21)
        g = np.asarray(F1.source(grid), dtype=float) - np.asarray(F2.source(grid), dtype=float)
        dg = np.diff(g)
        certified = bool(np.all(dg <= 0) or np.all(dg >= 0))
    if not certified and certify:
        raise HorizonTooSmall("excess changes sign near j_max; enlarge j_max")
    note = ("beyond j_max: excess bounded by |g(j_max)| = %.3g (%s)"
            % (g_J, "monotone check passed" if certified else "NOT certified"))
    return g_J if certified else F1.residual + F2.residual, note


def _check_marginals(plan: CouplingPlan):
    m1, m2 = plan.marginals()
    err1 = np.max(np.abs(m1 - plan.F1.masses)) if plan.j_max else 0.0
    err2 = np.max(np.abs(m2 - plan.F2.masses)) if plan.j_max else 0.0
    if max(err1, err2) > MARGINAL_TOL:
        raise MarginalMismatch(f"plan marginals off by {max(err1, err2):.3g}")
    for rows in (plan.cross, plan.leftover_pairs):
        if len(rows) and rows[:, 2].min() < 0:
            raise MarginalMismatch("negative mass in plan")


def worked_example():
    """Laws on [0, 8) whose excesses on [4, 8) are (-0.2, -0.4, 0.1, 0.7).

    The block [4, 8) is left with a surplus 0.2 of F1; the deficit sits on I_0.
    """
    F1 = np.array([0.2, 0, 0, 0, 0.0, 0.0, 0.1, 0.7])
    F2 = np.array([0.4, 0, 0, 0, 0.2, 0.4, 0.0, 0.0])
    return DiscretizedTail(F1, 0.0), DiscretizedTail(F2, 0.0)


# --------------------------------------------------------------------------
# i-bad intervals

def find_i_bad(plan: CouplingPlan, i: int) -> list[int]:
    """Customer intervals whose last server lies more than ``i`` intervals away.

    Customers a block cannot fully serve have no last server and are
    reported as bad for every ``i``.
    """
    cust = np.nonzero(plan.last_server != -2)[0]
    last = plan.last_server[cust]
    bad = (last == -1) | (np.abs(last - cust) > i)
    return [int(j) for j in cust[bad]]


def find_i_bad_by_cumulants(plan: CouplingPlan, i: int, form: str = "excess") -> list[int]:
    """The two cumulative conditions for i-badness, evaluated block by block.

    With ``form="excess"`` the cumulants are those of the queue (server
    surplus against customer demand); this agrees exactly with
    :func:`find_i_bad`.  With ``form="full"`` the full interval masses F1, F2
    are used, which coincides with the queue form whenever no mass was
    coupled inside the intervals involved.
    """
    out = []
    ex = np.asarray(plan.excess, dtype=np.longdouble)
    if form == "excess":
        sup = np.where(ex >= 0, ex, 0)
        dem = np.where(ex < 0, -ex, 0)
    elif form == "full":
        sup = np.asarray(plan.F1.masses, dtype=np.longdouble)
        dem = np.asarray(plan.F2.masses, dtype=np.longdouble)
    else:
        raise ValueError(form)
    for start, stop in dyadic_blocks(plan.j_max):
        cs = np.concatenate([[0], np.cumsum(sup[start:stop])])  # cs[r] = sum over [start, start+r)
        cd = np.concatenate([[0], np.cumsum(dem[start:stop])])
        n = stop - start
        for r in range(n):
            if ex[start + r] >= 0:
                continue
            need = cd[r + 1]
            tol = 1e-15 * max(float(need), 1e-300)
            left = max(r - i, 0)
            right = min(r + i + 1, n)
            cond1 = r - i > 0 and cs[left] >= need - tol
            cond2 = cs[right] < need - tol
            if cond1 or cond2:
                out.append(start + r)
    return out


def slowly_varying_part(tail_fn, alpha):
    return lambda t: np.asarray(tail_fn(t), dtype=float) * np.asarray(t, dtype=float) ** alpha


def epsilon_estimates(tail_x, tail_y, alpha, i, cap):
    """Grid suprema for the slow-variation and discrepancy constants.

    eps1 = sup_{j>=i, 1<=lam<=2} |L(j lam)/L(j) - 1| with L(t) = t^alpha P(X > t);
    eps2 = sup_{t>=i} |g(t)| / (L(t) t^-alpha) with g = P(Y > t) - P(X > t).
    Both are suprema over [i, cap] only.
    """
    L = slowly_varying_part(tail_x, alpha)
    js = np.unique(np.geomspace(i, cap, 400))
    lams = np.linspace(1.0, 2.0, 41)
    ratio = L(np.multiply.outer(js, lams)) / L(js)[:, None]
    eps1 = float(np.max(np.abs(ratio - 1.0)))
    g = np.asarray(tail_y(js), dtype=float) - np.asarray(tail_x(js), dtype=float)
    eps2 = float(np.max(np.abs(g) / (L(js) * js ** -alpha)))
    return eps1, eps2


def i_bad_threshold(i, alpha, eps1, eps2):
    """Index below which no i-bad interval can sit (first cumulative condition)."""
    return (((i + 1) * alpha) ** (1 / (alpha + 1))
            * (2.0 ** math.floor(math.log2(i))) ** (alpha / (1 + alpha))
            * (2 * eps2 + eps1) ** (-1 / (1 + alpha)) - 1)


# --------------------------------------------------------------------------
# placement inside unit intervals

GRID_POINTS = 129


def _interval_cdfs(plan: CouplingPlan, which: int, js) -> np.ndarray:
    """Conditional CDFs u -> P(Z <= j + u | Z in I_j) on a uniform u-grid.

    Rows are cached on the plan.  Without a source tail the placement is
    uniform.  An atom at zero shows up as a positive value at u = 0.
    """
    dist = plan.F1 if which == 1 else plan.F2
    cache = plan.cache.setdefault(which, {})
    js = np.asarray(js, dtype=int)
    todo = np.array(sorted({int(j) for j in js if int(j) not in cache}), dtype=int)
    u = np.linspace(0.0, 1.0, GRID_POINTS)
    if len(todo):
        if dist.source is None:
            for j in todo:
                cache[j] = u.copy()
        else:
            F = dist.survival()
            pts = (todo[:, None] + u[None, :]).ravel()
            tail = np.asarray(dist.source(pts), dtype=float).reshape(len(todo), -1)
            for r, j in enumerate(todo):
                mass = float(dist.masses[j])
                if mass <= 0:
                    cache[j] = u.copy()
                    continue
                g = np.clip((F[j] - tail[r]) / mass, 0.0, 1.0)
                g = np.maximum.accumulate(g)
                g[-1] = 1.0
                cache[j] = g
    return np.array([cache[int(j)] for j in js]).reshape(len(js), GRID_POINTS)


def _conditional_quantile(G: np.ndarray, row: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inverse of the gridded CDF ``G[row[k]]`` at level ``v[k]`` (linear in u)."""
    m, P = G.shape
    u = np.linspace(0.0, 1.0, P)
    # offset each row by 2 * row index so one searchsorted serves all rows
    flat = (G + 2.0 * np.arange(m)[:, None]).ravel()
    pos = np.searchsorted(flat, v + 2.0 * row, side="left") - row * P
    k = np.clip(pos, 1, P - 1)
    g0, g1 = G[row, k - 1], G[row, k]
    gap = g1 - g0
    frac = np.where(gap > 0, (v - g0) / np.where(gap > 0, gap, 1.0), 0.0)
    out = u[k - 1] + np.clip(frac, 0.0, 1.0) * (u[k] - u[k - 1])
    return np.where(v <= G[row, 0], 0.0, out)


def _frac_diff_sf(Gx: np.ndarray, Gy: np.ndarray, v) -> np.ndarray:
    """P(fx - fy > v) for independent fractional parts with gridded CDFs."""
    u = np.linspace(0.0, 1.0, Gx.shape[1])
    mid = 0.5 * (u[:-1] + u[1:])
    dGx = np.diff(Gx, axis=1)
    v = np.asarray(v, dtype=float).reshape(-1, 1)
    # P(fy < mid - v), with the atom of fy at zero counted as below any u > 0
    pts = mid[None, :] - v
    gy = np.array([np.interp(p, u, row, left=0.0, right=1.0) for p, row in zip(pts, Gy)])
    gy = np.where(pts <= 0, 0.0, gy)
    return np.sum(dGx * gy, axis=1)


# --------------------------------------------------------------------------
# tail of |X - Y| under the plan

def _pair_exceed(plan: CouplingPlan, rows, i):
    """(sum of mass times P(|X - Y| > i), mass with an unknown location)."""
    if len(rows) == 0:
        return 0.0, 0.0
    jx, ky, w = rows[:, 0].astype(int), rows[:, 1].astype(int), rows[:, 2]
    unknown = (jx < 0) | (ky < 0)
    d = np.abs(ky - jx).astype(float)
    total = float(np.sum(w[~unknown & (d >= i + 1)]))
    partial = ~unknown & (d > i - 1) & (d < i + 1)
    if partial.any():
        jp, kp, wp = jx[partial], ky[partial], w[partial]
        Gx = _interval_cdfs(plan, 2, jp)
        Gy = _interval_cdfs(plan, 1, kp)
        shift = (kp - jp).astype(float)
        # X - Y = (jx - ky) + fx - fy
        p = _frac_diff_sf(Gx, Gy, i + shift) + _frac_diff_sf(Gy, Gx, i - shift)
        total += float(np.sum(wp * p))
    return total, float(np.sum(w[unknown]))


@dataclass
class TailReport:
    i: float
    value: float        # exact part + certified bound for the region beyond j_max
    exact_part: float
    beyond_bound: float


def coupled_tail(plan: CouplingPlan, i: float, rel_tol: float = 0.01, report: bool = False):
    """P(|X - Y| > i) under the plan.

    Cross and leftover pairs sit independently at their conditional laws
    inside their intervals; within-interval couples are at distance below
    one, so ``i >= 1`` is required.  Mass whose location beyond j_max is
    unknown is counted as exceeding; HorizonTooSmall is raised when that
    bound exceeds ``rel_tol`` times the answer.
    """
    if i < 1:
        raise ValueError("coupled_tail needs i >= 1")
    cross, _ = _pair_exceed(plan, plan.cross, i)
    left, unknown = _pair_exceed(plan, plan.leftover_pairs, i)
    exact = cross + left
    bound = unknown + plan.beyond_bound
    if bound > rel_tol * max(exact, 1e-300) and bound > 0:
        raise HorizonTooSmall(f"mass beyond j_max ({bound:.3g}) is not negligible at i={i} "
                              f"(exact part {exact:.3g})")
    if report:
        return TailReport(float(i), exact + bound, exact, bound)
    return exact + bound


def sample_pair_from_plan(plan: CouplingPlan, rng, size=None):
    """Draw (x, y) with the plan's joint law; x follows F2 and y follows F1.

    Inside an interval a point is placed at the conditional quantile of its
    law.  Within-interval couples share the quantile level (comonotone);
    cross and leftover pairs use independent levels.  Mass beyond j_max is
    drawn from the source tails by a shared quantile level.
    """
    from .rng import as_generator
    gen = as_generator(rng)
    n = 1 if size is None else int(np.prod(size))
    J = plan.j_max
    w_within = plan.within
    w_cross = plan.cross[:, 2] if len(plan.cross) else np.zeros(0)
    w_left = plan.leftover_pairs[:, 2] if len(plan.leftover_pairs) else np.zeros(0)
    weights = np.concatenate([w_within, w_cross, w_left, [plan.beyond_common]])
    weights = weights / weights.sum()
    cat = gen.choice(len(weights), size=n, p=weights)
    u1 = gen.random(n)
    u2 = gen.random(n)
    jx = np.full(n, -1, dtype=int)
    ky = np.full(n, -1, dtype=int)
    shared = np.zeros(n, dtype=bool)
    nw, nc = len(w_within), len(w_cross)
    m = cat < nw
    jx[m] = ky[m] = cat[m]
    shared[m] = True
    m = (cat >= nw) & (cat < nw + nc)
    if m.any():
        rows = plan.cross[cat[m] - nw]
        jx[m], ky[m] = rows[:, 0], rows[:, 1]
    m = (cat >= nw + nc) & (cat < len(weights) - 1)
    if m.any():
        rows = plan.leftover_pairs[cat[m] - nw - nc]
        jx[m], ky[m] = rows[:, 0], rows[:, 1]
    uy = np.where(shared, u1, u2)
    x = np.full(n, np.nan)
    y = np.full(n, np.nan)
    for arr, idx, lev, which in ((x, jx, u1, 2), (y, ky, uy, 1)):
        ok = idx >= 0
        if ok.any():
            uniq, inv = np.unique(idx[ok], return_inverse=True)
            G = _interval_cdfs(plan, which, uniq)
            arr[ok] = idx[ok] + _conditional_quantile(G, inv, lev[ok])
    # beyond j_max (comonotone) and unknown leftovers: invert the source tails
    for arr, dist in ((x, plan.F2), (y, plan.F1)):
        todo = np.isnan(arr)
        if todo.any():
            if dist.source is None:
                raise ValueError("sampling beyond j_max needs the source tail")
            table = plan.cache.setdefault(("table", which_of(dist, plan)), _tail_table(dist.source, J))
            arr[todo] = _tail_quantile(dist.source, dist.residual * u1[todo], J, table)
    if size is None:
        return float(x[0]), float(y[0])
    return x.reshape(size), y.reshape(size)


def which_of(dist, plan):
    return 1 if dist is plan.F1 else 2


def _tail_table(tail, lo, decades=24, per_decade=40):
    """Geometric grid above ``lo`` with tail values, used to bracket quantiles."""
    t = lo * np.logspace(0, decades, decades * per_decade + 1)
    return t, np.minimum.accumulate(np.asarray(tail(t), dtype=float))


def _tail_quantile(tail, p, lo, table=None, steps=50):
    """Solve tail(t) = p for t >= lo by bisection in log space."""
    p = np.asarray(p, dtype=float)
    a = np.full_like(p, float(lo))
    b = a * 2.0
    if table is not None:
        t, v = table
        # v is non-increasing; find the last grid point still above p
        k = np.searchsorted(-v, -p, side="left") - 1
        inside = (k >= 0) & (k < len(t) - 1)
        a = np.where(inside, t[np.clip(k, 0, len(t) - 1)], a)
        b = np.where(inside, t[np.clip(k + 1, 0, len(t) - 1)], b)
    else:
        steps = 200
    while True:
        over = np.asarray(tail(b)) > p
        if not over.any():
            break
        a = np.where(over, b, a)
        b = np.where(over, b * 4.0, b)
    for _ in range(steps):
        mid = np.sqrt(a * b)
        above = np.asarray(tail(mid)) > p
        a = np.where(above, mid, a)
        b = np.where(above, b, mid)
    return b


def tail_ratio(plan: CouplingPlan, i, alpha):
    """coupled_tail(i) / (i^-alpha / Gamma(1 - alpha))."""
    return coupled_tail(plan, i) / (i ** -alpha / gamma(1.0 - alpha))


# --------------------------------------------------------------------------
# path coupling

@dataclass(frozen=True)
class StepBound:
    """Computable bound on d_J1 between the walks built from (J, a W) and (J, a U)."""
    bound: float
    l1: float
    osc_y: float
    osc_x: float
    equal_counts: bool
    collision: float = 0.0


def _window_oscillation(epochs, S, lo, hi):
    """sup over jumps with epochs in [lo, hi] of |partial sum from the first of them|."""
    b0 = np.searchsorted(epochs, lo, side="left")
    b1 = np.searchsorted(epochs, hi, side="right")
    if b1 <= b0:
        return 0.0
    base = S[b0 - 1] if b0 > 0 else 0.0
    return float(np.max(np.abs(S[b0:b1] - base)))


def _sup_gap(ty, tx, S):
    """sup_t |Y(t) - X(t)| for step paths with the shared partial sums S."""
    t = np.union1d(ty, tx)
    vy = np.concatenate([[0.0], S])[np.searchsorted(ty, t, side="right")]
    vx = np.concatenate([[0.0], S])[np.searchsorted(tx, t, side="right")]
    return float(np.max(np.abs(vy - vx), initial=0.0))


def _collision(epochs, S):
    """Value gap forced by jumps sharing an epoch (including epoch 0).

    The other walk passes through the intermediate partial sums of such a
    run at distinct times, which no time change can hide.
    """
    e = np.concatenate([[0.0], epochs])
    v = np.concatenate([[0.0], S])
    if len(e) < 2 or np.all(np.diff(e) > 0):
        return 0.0
    starts = np.concatenate([[0], np.nonzero(np.diff(e) > 0)[0] + 1])
    ends = np.concatenate([starts[1:], [len(e)]]) - 1
    gap = np.abs(v - np.repeat(v[ends], ends - starts + 1))
    return float(np.max(np.maximum.reduceat(gap, starts)))


def step2_bound(w, u, jumps, a_n: float, horizon: float, epsilon: float, space_scale: float = 1.0) -> StepBound:
    """The l1 + tail-window bound for two walks sharing their spatial jumps.

    When both walks make the same number of jumps by the horizon the
    piecewise-linear time change matching epoch to epoch gives the l1 sum of
    the wait differences directly.  Otherwise the walks are truncated at the
    jump count reached by ``horizon - epsilon/2`` and the partial-sum
    oscillations inside [horizon - epsilon/2, horizon] are added.  That
    argument needs the truncated l1 sum below epsilon/2; past it the sup-norm
    gap under the identity time change is folded in so the result stays a bound.
    """
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    ty, tx = a_n * np.cumsum(w), a_n * np.cumsum(u)
    dev = np.concatenate([[0.0], np.cumsum(a_n * np.abs(w - u))])
    ky = int(np.searchsorted(ty, horizon, side="right"))
    kx = int(np.searchsorted(tx, horizon, side="right"))
    S = space_scale * np.cumsum(np.asarray(jumps, dtype=float))
    if ky == kx:
        l1 = float(dev[ky])
        col = _collision(ty[:ky], S[:ky]) + _collision(tx[:kx], S[:kx])
        return StepBound(l1 + col, l1, 0.0, 0.0, True, col)
    cut = horizon - epsilon / 2.0
    M = max(int(np.searchsorted(ty, cut, side="right")), int(np.searchsorted(tx, cut, side="right")))
    l1 = float(dev[M])
    oy = _window_oscillation(ty, S, cut, horizon)
    ox = _window_oscillation(tx, S, cut, horizon)
    col = _collision(ty[:M], S[:M]) + _collision(tx[:M], S[:M])
    total = l1 + oy + ox + col
    if l1 >= epsilon / 2.0:
        total = max(total, _sup_gap(ty[:ky], tx[:kx], S))
    return StepBound(total, l1, oy, ox, False, col)


def prohorov_estimate(bounds: np.ndarray, eps_grid: np.ndarray) -> float:
    """Smallest grid epsilon with P(bound(epsilon) > epsilon) < epsilon.

    ``bounds[r, k]`` is replica r's bound computed with window eps_grid[k].
    Returns 0 when every bound vanishes and inf when no grid point qualifies.
    """
    if not np.any(bounds):
        return 0.0
    p = np.mean(bounds > eps_grid[None, :], axis=0)
    ok = np.nonzero(p < eps_grid)[0]
    return float(eps_grid[ok[0]]) if len(ok) else math.inf


DEFAULT_EPS_GRID = np.logspace(-4, 0, 161)
BOOTSTRAP_STREAM = 1 << 40


@dataclass
class PathCouplingReport:
    n: int
    a_n: float
    epsilon: float
    horizon: float
    pairing: str
    bounds: np.ndarray           # replica bound at the requested epsilon
    bound_grid: np.ndarray       # replica x eps_grid
    eps_grid: np.ndarray
    p_exceed: float
    eps_hat: float
    exact_checked: int
    exact_violations: int

    def to_dict(self):
        return {"n": self.n, "a_n": self.a_n, "epsilon": self.epsilon, "horizon": self.horizon,
                "pairing": self.pairing, "p_exceed": self.p_exceed, "eps_hat": self.eps_hat,
                "exact_checked": self.exact_checked, "exact_violations": self.exact_violations,
                "mean_bound": float(np.mean(self.bounds))}


def _replica_stream(rng, r):
    from .rng import RngStream, as_generator
    if isinstance(rng, RngStream):
        return rng.substream(r).generator
    return as_generator(rng)


def _draw_pairs(plan, gen, pairing, a_n, horizon, chunk=1024):
    """Draw (W, U, J) chunks until both walks pass the horizon."""
    ws, us, js = [], [], []
    sw = su = 0.0
    while sw * a_n <= horizon or su * a_n <= horizon:
        x, y = sample_pair_from_plan(plan, gen, chunk)
        if pairing == "independent":
            y = y[gen.permutation(chunk)]
        elif pairing == "identical":
            y = x
        j = 2.0 * gen.integers(0, 2, size=chunk) - 1.0
        ws.append(x)
        us.append(y)
        js.append(j)
        sw += float(np.sum(x))
        su += float(np.sum(y))
    return np.concatenate(ws), np.concatenate(us), np.concatenate(js)


def _replica_bounds(w, u, j, a, sp, horizon, epsilon, grid):
    at_eps = step2_bound(w, u, j, a, horizon, epsilon, sp).bound
    return at_eps, np.array([step2_bound(w, u, j, a, horizon, e, sp).bound for e in grid])


def _exact_check(w, u, j, a, sp, horizon, bound):
    """(checked, violated) for the exact J1 distance on replicas with few jumps."""
    from .ctrw import _step_path
    from .paths import j1_exact_small
    ty, tx = a * np.cumsum(w), a * np.cumsum(u)
    ky = int(np.searchsorted(ty, horizon, side="right"))
    kx = int(np.searchsorted(tx, horizon, side="right"))
    if max(ky, kx) > 8:
        return False, False
    S = sp * np.cumsum(j)
    d = j1_exact_small(_step_path(ty[:ky], S[:ky], horizon), _step_path(tx[:kx], S[:kx], horizon))
    return True, d > bound + 1e-12


def path_coupling_distance(plan: CouplingPlan, n: int, epsilon: float, horizon: float, reps: int, rng,
                           alpha: float, pairing: str = "plan", a_n: float | None = None,
                           eps_grid=None, exact_check: bool = True) -> PathCouplingReport:
    """Replicated Step-2 bounds between Y^n (waits a_n W) and X^n (waits a_n U).

    W follows F2 and U follows F1 of ``plan``; spatial jumps are shared fair
    +-1 steps scaled by n^(-1/2).  ``pairing`` is "plan" (the coupling),
    "independent" (same marginals, pairs shuffled) or "identical" (U = W).
    With an RngStream, replica r always uses substream r, so runs at
    different n share their random numbers.
    """
    if pairing not in ("plan", "independent", "identical"):
        raise ValueError(f"unknown pairing {pairing!r}")
    a = n ** (-1.0 / alpha) if a_n is None else a_n
    grid = DEFAULT_EPS_GRID if eps_grid is None else np.asarray(eps_grid, dtype=float)
    sp = n ** -0.5
    bounds = np.empty(reps)
    bound_grid = np.empty((reps, len(grid)))
    checked = violations = 0
    for r in range(reps):
        gen = _replica_stream(rng, r)
        w, u, j = _draw_pairs(plan, gen, pairing, a, horizon)
        bounds[r], bound_grid[r] = _replica_bounds(w, u, j, a, sp, horizon, epsilon, grid)
        if exact_check:
            c, v = _exact_check(w, u, j, a, sp, horizon, bounds[r])
            checked += c
            violations += v
    p = float(np.mean(bounds > epsilon))
    return PathCouplingReport(n, a, epsilon, horizon, pairing, bounds, bound_grid, grid, p,
                              prohorov_estimate(bound_grid, grid), checked, violations)


# --------------------------------------------------------------------------
# rate scan

@dataclass
class RateScanPlan:
    """Constants of the rate statement for tail index alpha and correction order beta."""
    alpha: float
    beta: float = math.inf
    n_grid: tuple = (100, 316, 1000, 3162)
    c: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1 or self.beta <= self.alpha:
            raise ValueError("need 0 < alpha < 1 and beta > alpha")
        if self.c is None:
            self.c = 0.5 * self.xi0
        if not self.c < self.xi0:
            raise ValueError("c must stay below xi0")

    @property
    def xi0(self) -> float:
        a, b = self.alpha, self.beta
        second = 1.0 / 3.0 if math.isinf(b) else (b - a) / (3 * b + a + 4)
        return min(a / (7 * a + 4), second)

    @property
    def gamma(self) -> float:
        return min(2 * self.alpha, self.beta)

    @property
    def c_prime(self) -> float:
        return 3.0 * self.c / self.alpha

    def M1(self, n) -> float:
        return self.c_prime * n * math.log(n)

    def M2(self, n) -> float:
        return self.c_prime * n ** (1 - self.alpha * self.c_prime) * math.log(n)

    # alternative parametrization, reported alongside
    @property
    def proof_xi0(self) -> float:
        return self.alpha * (self.gamma + 1) / (self.alpha + 1)

    def c_of_xi(self, xi) -> float:
        return (xi - self.alpha) / (3 * xi + self.alpha)

    def xi_of_c(self, c=None) -> float:
        """The xi solving -c = (c' - 1/alpha) xi + 1 with c' = 3c/alpha."""
        c = self.c if c is None else c
        return self.alpha * (1 + c) / (1 - 3 * c)

    def identity_residual(self) -> float:
        xi = self.xi_of_c()
        return -self.c - ((self.c_prime - 1 / self.alpha) * xi + 1)

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "n_grid": list(self.n_grid), "c": self.c,
                "c_prime": self.c_prime, "xi0": self.xi0, "gamma": self.gamma,
                "M1": [self.M1(n) for n in self.n_grid], "M2": [self.M2(n) for n in self.n_grid],
                "proof_xi0": self.proof_xi0, "proof_c_at_proof_xi0": self.c_of_xi(self.proof_xi0),
                "xi_of_c": self.xi_of_c(), "identity_residual": self.identity_residual()}


@dataclass
class RateReport:
    plan: RateScanPlan
    n: list
    eps_hat: list
    exponent: float
    c_hat: float
    ci: tuple
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"n": self.n, "eps_hat": self.eps_hat, "fitted_exponent": self.exponent,
                "fitted_c": self.c_hat, "ci": list(self.ci), "theory": self.plan.to_dict(),
                "target": f"c < xi0 = {self.plan.xi0:.6g}", "notes": self.notes}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def rate_scan(rate_plan: RateScanPlan, plan: CouplingPlan, reps: int, rng, horizon: float = 1.0,
              epsilon: float = 0.1, pairing: str = "plan", n_boot: int = 1000) -> RateReport:
    """eps_hat(n) over the plan's n-grid and a log-log fit eps_hat ~ C n^exponent.

    The confidence interval resamples replicas (the same resample at every
    n) and refits.
    """
    from .rng import RngStream, as_generator
    ns = list(rate_plan.n_grid)
    if len(ns) < 4:
        raise ValueError("the n-grid needs at least 4 points")
    grid = DEFAULT_EPS_GRID
    alpha = rate_plan.alpha
    scales = [(n ** (-1.0 / alpha), n ** -0.5) for n in ns]
    grids = [np.empty((reps, len(grid))) for _ in ns]
    a_min = min(a for a, _ in scales)
    for r in range(reps):
        # one draw serves every n: smaller n use a prefix of the same sequence
        w, u, j = _draw_pairs(plan, _replica_stream(rng, r), pairing, a_min, horizon)
        for k, (a, sp) in enumerate(scales):
            grids[k][r] = _replica_bounds(w, u, j, a, sp, horizon, epsilon, grid)[1]
    eps = [prohorov_estimate(g, grid) for g in grids]
    notes = []
    if not all(0 < e < math.inf for e in eps):
        notes.append("some eps_hat are zero or infinite; no fit")
        return RateReport(rate_plan, ns, eps, math.nan, math.nan, (math.nan, math.nan), notes)
    # replicas use substreams 0..reps-1; the bootstrap gets one far outside that range
    boot_gen = rng.substream(BOOTSTRAP_STREAM).generator if isinstance(rng, RngStream) else as_generator(rng)
    lx = np.log(np.array(ns, dtype=float))
    slope = float(np.polyfit(lx, np.log(eps), 1)[0])
    slopes = []
    for _ in range(n_boot):
        idx = boot_gen.integers(0, reps, size=reps)
        e = np.array([prohorov_estimate(g[idx], grid) for g in grids])
        if np.all((e > 0) & np.isfinite(e)):
            slopes.append(np.polyfit(lx, np.log(e), 1)[0])
    if len(slopes) < n_boot:
        notes.append(f"{n_boot - len(slopes)} bootstrap draws had a zero or infinite eps_hat and were dropped")
    ci = tuple(float(q) for q in np.quantile(slopes, [0.025, 0.975])) if slopes else (math.nan, math.nan)
    return RateReport(rate_plan, ns, eps, slope, -slope, ci, notes)
