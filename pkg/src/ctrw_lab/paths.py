"""Step paths, time changes and Skorohod J1 machinery.

Vector-valued paths are compared in the max norm over components.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import JumpCountMismatch, TooManyJumps


def _as_values(values, initial):
    v = np.asarray(values, dtype=float)
    init = np.asarray(initial, dtype=float)
    if v.ndim == 1 and init.ndim == 0:
        return v, init
    if v.ndim == 1:
        v = v.reshape(-1, init.size)
    if init.ndim == 0:
        init = np.full(v.shape[1], float(init))
    return v, init


class StepPath:
    """A right-continuous piecewise-constant path on [0, horizon].

    ``values[k]`` is the path value from ``epochs[k]`` until the next epoch;
    before the first epoch the path equals ``initial``.
    """

    def __init__(self, epochs, values, horizon: float, initial=0.0):
        epochs = np.asarray(epochs, dtype=float).reshape(-1)
        values, initial = _as_values(values, initial)
        if len(values) != len(epochs):
            raise ValueError("epochs and values differ in length")
        if len(epochs) and (np.any(np.diff(epochs) <= 0) or epochs[0] <= 0 or epochs[-1] > horizon):
            raise ValueError("epochs must be strictly increasing inside (0, horizon]")
        self.epochs = epochs
        self.values = values
        self.horizon = float(horizon)
        self.initial = initial

    def __repr__(self):
        return f"StepPath({len(self.epochs)} jumps, horizon={self.horizon})"

    @property
    def n_jumps(self):
        return len(self.epochs)

    @property
    def dim(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def all_values(self):
        """Initial value followed by the post-jump values."""
        init = np.asarray(self.initial)[None] if self.values.ndim == 1 else self.initial[None, :]
        return np.concatenate([init, self.values], axis=0)

    def jumps(self):
        return np.diff(self.all_values(), axis=0)

    def __call__(self, t):
        idx = np.searchsorted(self.epochs, t, side="right")
        return self.all_values()[idx]

    def left_limit(self, t):
        idx = np.searchsorted(self.epochs, t, side="left")
        return self.all_values()[idx]

    def count(self, t):
        """Number of epochs <= t (the renewal counting process)."""
        return np.searchsorted(self.epochs, t, side="right")

    def restricted(self, horizon: float) -> "StepPath":
        k = np.searchsorted(self.epochs, horizon, side="right")
        return StepPath(self.epochs[:k], self.values[:k], horizon, self.initial)

    def to_json(self):
        return json.dumps({"epochs": self.epochs.tolist(), "values": self.values.tolist(),
                           "initial": np.asarray(self.initial).tolist(), "horizon": self.horizon})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["epochs"], d["values"], d["horizon"], d.get("initial", 0.0))

    def to_csv(self, path):
        vals = self.all_values().reshape(len(self.epochs) + 1, -1)
        times = np.concatenate([[0.0], self.epochs])
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"value_{k}" for k in range(vals.shape[1])])
            for t, row in zip(times, vals):
                wr.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


class TimeChange:
    """A non-decreasing piecewise-linear function with f(0) = 0.

    Breakpoints may repeat an abscissa; the repeated point is a jump and
    evaluation is right-continuous.  Beyond the last breakpoint the function
    is held constant.
    """

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs[0] != 0 or np.any(np.diff(xs) < 0) or np.any(np.diff(ys) < 0):
            raise ValueError("breakpoints must start at 0 and be non-decreasing")
        self.xs, self.ys = xs, ys

    @classmethod
    def linear(cls, slope: float, horizon: float):
        return cls([0.0, horizon], [0.0, slope * horizon])

    @property
    def horizon(self):
        return float(self.xs[-1])

    @property
    def is_continuous(self):
        return not np.any((np.diff(self.xs) == 0) & (np.diff(self.ys) > 0))

    def _interp(self, t, k):
        k = np.clip(k, 0, len(self.xs) - 1)
        nxt = np.minimum(k + 1, len(self.xs) - 1)
        x0, x1, y0, y1 = self.xs[k], self.xs[nxt], self.ys[k], self.ys[nxt]
        span = np.where(x1 > x0, x1 - x0, 1.0)
        frac = np.where(x1 > x0, np.clip((t - x0) / span, 0.0, 1.0), 0.0)
        return y0 + frac * (y1 - y0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.xs, t, side="right") - 1
        out = self._interp(t, k)
        return float(out) if out.ndim == 0 else out

    def left_limit(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.xs, t, side="left") - 1
        out = np.where(k < 0, self.ys[0], self._interp(t, k))
        return float(out) if out.ndim == 0 else out

    def graph(self):
        return self.xs, self.ys


@dataclass(frozen=True)
class SubordinatorSkeleton:
    """D(t) = drift * t + sum of jumps at epochs <= t, on [0, horizon]."""
    drift: float
    epochs: np.ndarray
    sizes: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "epochs", np.asarray(self.epochs, dtype=float))
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.sizes)])
        out = self.drift * t + cum[np.searchsorted(self.epochs, t, side="right")]
        return float(out) if out.ndim == 0 else out

    def left_limit(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.sizes)])
        out = self.drift * t + cum[np.searchsorted(self.epochs, t, side="left")]
        return float(out) if out.ndim == 0 else out

    def graph(self):
        """Breakpoints of the graph with each jump drawn as a vertical segment."""
        # same arithmetic as __call__ so graph points and evaluations agree bitwise
        cum = np.concatenate([[0.0], np.cumsum(self.sizes)])
        k = len(self.epochs)
        xs = np.empty(2 * k + 2)
        ys = np.empty(2 * k + 2)
        xs[0] = ys[0] = 0.0
        xs[1:-1:2] = xs[2:-1:2] = self.epochs
        ys[1:-1:2] = self.drift * self.epochs + cum[:-1]
        ys[2:-1:2] = self.drift * self.epochs + cum[1:]
        xs[-1] = self.horizon
        ys[-1] = self.drift * self.horizon + cum[-1]
        return xs, ys


def generalized_inverse(d) -> TimeChange:
    """The right-continuous inverse v -> inf{s : d(s) > v} on [0, d(horizon)].

    Jumps of ``d`` become flat stretches of the inverse and flat stretches of
    ``d`` become jumps.  ``d`` may be a SubordinatorSkeleton, a TimeChange or a
    non-decreasing StepPath started at zero.
    """
    if isinstance(d, StepPath):
        if d.dim != 1:
            raise ValueError("only scalar paths can be inverted")
        d = SubordinatorSkeleton(0.0, d.epochs, d.jumps(), d.horizon)
    xs, ys = d.graph()
    if ys[0] != 0 or np.any(np.diff(ys) < 0):
        raise ValueError("d must be non-decreasing from 0")
    # swapping coordinates turns the graph of d into the graph of its inverse;
    # drop zero-length pieces so the breakpoint list stays minimal
    keep = np.ones(len(xs), dtype=bool)
    keep[1:] = (np.diff(xs) > 0) | (np.diff(ys) > 0)
    return TimeChange(ys[keep], xs[keep])


def apply_H(f: StepPath, d, horizon: float | None = None) -> StepPath:
    """The path t -> lim_{s down to t} f(E(s)-) with E the inverse of ``d``.

    Left limits are taken first and right limits in t last.  For step paths
    this moves a jump of f at time sigma to time d(sigma): inside a flat
    stretch of E (a jump of d) the pre-jump value is kept, and the jump shows
    when the stretch ends.  Jumps sent to the same time merge.
    """
    top = float(d(d.horizon)) if horizon is None else float(horizon)
    new_t = np.asarray(d(f.epochs), dtype=float) if f.n_jumps else np.zeros(0)
    keep = new_t <= top
    new_t, vals = new_t[keep], f.values[keep]
    initial = f.initial
    at_zero = new_t <= 0
    if at_zero.any():
        initial = vals[at_zero][-1]
        new_t, vals = new_t[~at_zero], vals[~at_zero]
    if len(new_t):
        last_of_group = np.append(np.diff(new_t) > 0, True)
        new_t, vals = new_t[last_of_group], vals[last_of_group]
    return StepPath(new_t, vals, top, initial)


def compose(f: StepPath, xi: TimeChange, horizon: float) -> StepPath:
    """t -> f(xi(t)) for a continuous non-decreasing xi."""
    values = f.all_values()
    # epoch sigma is crossed at the first t with xi(t) >= sigma
    inv = generalized_inverse_left(xi, f.epochs)
    keep = inv <= horizon
    t, vals = inv[keep], values[1:][keep]
    initial = f.initial
    if len(t) and np.any(t <= 0):
        initial = vals[t <= 0][-1]
        vals, t = vals[t > 0], t[t > 0]
    if len(t):
        last = np.append(np.diff(t) > 0, True)
        t, vals = t[last], vals[last]
    return StepPath(t, vals, horizon, initial)


def generalized_inverse_left(xi: TimeChange, levels):
    """inf{t : xi(t) >= level} for each level (inf of the empty set is inf)."""
    xs, ys = xi.xs, xi.ys
    levels = np.asarray(levels, dtype=float)
    k = np.searchsorted(ys, levels, side="left")
    out = np.full(levels.shape, np.inf)
    inside = k < len(ys)
    kk = k[inside]
    lv = levels[inside]
    prev = np.maximum(kk - 1, 0)
    y0, y1 = ys[prev], ys[kk]
    x0, x1 = xs[prev], xs[kk]
    frac = np.where(y1 > y0, (lv - y0) / np.where(y1 > y0, y1 - y0, 1.0), 1.0)
    val = np.where(kk == 0, xs[0], x0 + frac * (x1 - x0))
    out[inside] = val
    return out


# --------------------------------------------------------------------------
# J1 distances

def _vals(path: StepPath):
    v = path.all_values()
    return v.reshape(len(v), -1)


def _sup_diff(a, b):
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def j1_upper(f: StepPath, g: StepPath) -> float:
    """J1 bound from the time change sending the k-th jump of g to the k-th jump of f."""
    if f.n_jumps != g.n_jumps:
        raise JumpCountMismatch(f"{f.n_jumps} jumps versus {g.n_jumps}")
    if f.horizon != g.horizon:
        raise ValueError("paths must share a horizon")
    value_gap = _sup_diff(_vals(f), _vals(g))
    time_gap = float(np.max(np.abs(f.epochs - g.epochs))) if f.n_jumps else 0.0
    return max(value_gap, time_gap)


def j1_exact_small(f: StepPath, g: StepPath, max_jumps: int = 8) -> float:
    """Exact J1 distance between two step paths with few jumps.

    A time change only decides the order in which the jumps of f and g are
    met, with simultaneous jumps allowed.  Each such order is a monotone
    lattice path through the pairs (jumps of f passed, jumps of g passed);
    its cost is the larger of the biggest value gap along the path and the
    smallest epoch displacement that realizes the order.  The minimum over
    lattice paths is found by a bottleneck dynamic program.
    """
    if max_jumps > 8:
        raise ValueError("max_jumps is capped at 8")
    if f.n_jumps > max_jumps or g.n_jumps > max_jumps:
        raise TooManyJumps(f"paths have {f.n_jumps} and {g.n_jumps} jumps; limit {max_jumps}")
    if f.horizon != g.horizon:
        raise ValueError("paths must share a horizon")
    return _j1_bottleneck(f, g)


def _j1_bottleneck(f, g):
    T = f.horizon
    vf, vg = _vals(f), _vals(g)
    tf, tg = f.epochs, g.epochs
    nf, ng = len(tf), len(tg)
    # gap[a, b]: value mismatch after a jumps of f and b jumps of g
    gap = np.max(np.abs(vf[:, None, :] - vg[None, :, :]), axis=2)
    tg_ext = np.concatenate([[0.0], tg, [T]])  # tg_ext[b] = epoch of g-jump b (b=1..ng)

    def window(t, lo, hi):
        return max(lo - t, t - hi, 0.0)

    best = np.full((nf + 1, ng + 1), np.inf)
    best[0, 0] = gap[0, 0]
    for a in range(nf + 1):
        for b in range(ng + 1):
            if a == 0 and b == 0:
                continue
            cands = []
            if a > 0:
                # f-jump a moves strictly between g-jumps b and b+1
                step = window(tf[a - 1], tg_ext[b], tg_ext[b + 1])
                cands.append(max(best[a - 1, b], step))
            if b > 0:
                # a g-jump costs nothing by itself: the order it imposes is
                # already paid for in the windows of the neighbouring f-jumps
                cands.append(best[a, b - 1])
            if a > 0 and b > 0:
                step = abs(tf[a - 1] - tg[b - 1])
                cands.append(max(best[a - 1, b - 1], step))
            best[a, b] = max(min(cands), gap[a, b])
    return float(best[nf, ng])


def modulus_of_continuity(path: StepPath, delta: float) -> float:
    """Smallest max oscillation over partitions of [0, T) into cells longer than delta.

    Cells are half-open [t_{i-1}, t_i), so a jump sitting exactly on a cut
    point does not count.  Cut points only matter through whether they sit
    on an epoch or in the gap after one; for each candidate level the
    earliest admissible position of every cut type is propagated.
    """
    T = path.horizon
    if not 0 < delta < T:
        raise ValueError("need 0 < delta < T")
    ep = path.epochs[path.epochs < T]
    vals = _vals(path)[: len(ep) + 1]
    K = len(ep)
    # oscillation of values[a..c]
    osc = np.zeros((K + 1, K + 1))
    for a in range(K + 1):
        lo = vals[a].copy()
        hi = vals[a].copy()
        for c in range(a, K + 1):
            lo = np.minimum(lo, vals[c])
            hi = np.maximum(hi, vals[c])
            osc[a, c] = float(np.max(hi - lo))
    levels = np.unique(osc[np.triu_indices(K + 1)])
    bounds = np.concatenate([[0.0], ep, [T]])

    def feasible(v):
        # anchors: ("point", k) cut at epoch k (k=0 is time 0); ("gap", k) cut in (e_k, e_{k+1})
        # earliest[kind][k] = earliest position reachable with cost <= v
        INF = np.inf
        point = np.full(K + 1, INF)
        gap_ = np.full(K + 1, INF)
        point[0] = 0.0
        anchors = []
        for k in range(K + 1):
            anchors.append(("point", k))
            anchors.append(("gap", k))
        for idx, (kind, k) in enumerate(anchors):
            pos = point[k] if kind == "point" else gap_[k]
            if pos == INF:
                continue
            start = k  # the cell opens with the value after epoch k
            # end of horizon
            if osc[start, K] <= v and T - pos > delta:
                return True
            for kind2, k2 in anchors[idx + 1:]:
                last = k2 - 1 if kind2 == "point" else k2
                if last < start or osc[start, last] > v:
                    continue
                if kind2 == "point":
                    p = bounds[k2]
                    if p - pos > delta and p < point[k2]:
                        point[k2] = p
                else:
                    lo, hi = bounds[k2], bounds[k2 + 1]
                    p = max(lo, pos + delta)
                    if p < hi and p < gap_[k2]:
                        # the infimum is not attained; nudge to keep strict inequalities
                        gap_[k2] = np.nextafter(p, np.inf)
        return False

    lo_i, hi_i = 0, len(levels) - 1
    if not feasible(levels[hi_i]):
        return float(levels[hi_i])
    while lo_i < hi_i:
        mid = (lo_i + hi_i) // 2
        if feasible(levels[mid]):
            hi_i = mid
        else:
            lo_i = mid + 1
    return float(levels[lo_i])


def check_A_delta(epochs, delta: float, horizon: float | None = None) -> bool:
    """True when every renewal gap up to the last epoch <= horizon is below delta."""
    ep = np.sort(np.asarray(epochs, dtype=float))
    if horizon is not None:
        ep = ep[ep <= horizon]
    if len(ep) == 0:
        return True
    gaps = np.diff(np.concatenate([[0.0], ep]))
    return bool(np.max(gaps) < delta)
