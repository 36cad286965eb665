"""Experiment orchestration, statistics and artifact emission.

Each acceptance experiment is a named function taking an ExperimentConfig and
a seeded RngStream and returning StatReports plus tables.  ``run_experiment``
writes the tables as CSV, the reports as JSON and a manifest, and returns 0
exactly when every report passes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from .errors import ConfigInvalid, EmptySample, NonPositiveData
from .rng import RngStream


# --------------------------------------------------------------------------
# configuration and reports

@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str = "out"
    n_grid: list | None = None
    reps: int | None = None
    horizon: float | None = None
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}")
        spec = EXPERIMENTS[self.experiment]
        if self.n_grid is None:
            self.n_grid = list(spec.default_n_grid)
        elif not isinstance(self.n_grid, (list, tuple)) or len(self.n_grid) == 0:
            raise ConfigInvalid("n_grid must be a nonempty list")
        self.n_grid = list(self.n_grid)
        if any((not isinstance(n, (int, np.integer))) or n < 1 for n in self.n_grid):
            raise ConfigInvalid("n_grid entries must be positive integers")
        if self.reps is not None and self.reps < 1:
            raise ConfigInvalid("reps must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigInvalid("horizon must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigInvalid("seed must fit in 64 bits")
        if self.threads < 1:
            raise ConfigInvalid("threads must be positive")

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        known = {"experiment", "seed", "out", "n_grid", "reps", "horizon", "params", "tolerances", "threads"}
        extra = set(d) - known
        if extra:
            raise ConfigInvalid(f"unknown config keys {sorted(extra)}")
        if "experiment" not in d:
            raise ConfigInvalid("config needs an experiment name")
        return cls(**d)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigInvalid(f"cannot read config {path}: {e}") from e
        return cls.from_dict(d, **overrides)

    def to_dict(self):
        return asdict(self)

    def run_dict(self):
        """The fields that determine results (output dir and thread count do not)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return d

    def hash(self) -> str:
        text = json.dumps(self.run_dict(), sort_keys=True, default=float)
        return hashlib.sha256(text.encode()).hexdigest()

    def param(self, key, default):
        return self.params.get(key, default)

    def tol(self, key, default):
        return self.tolerances.get(key, default)


@dataclass
class StatReport:
    """One statistic with its reference and a recomputable verdict.

    ``kind`` selects the rule: "p" passes when p_value > threshold, "z" when
    |z| < threshold, "max" when value < threshold, "min" when value > threshold,
    "eq" when value == reference.
    """
    name: str
    value: float
    reference: float | None = None
    p_value: float | None = None
    z: float | None = None
    threshold: float | None = None
    kind: str = "p"

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")

    @property
    def passed(self) -> bool:
        if self.kind == "p":
            return self.p_value is not None and self.p_value > self.threshold
        if self.kind == "z":
            return self.z is not None and abs(self.z) < self.threshold
        if self.kind == "max":
            return self.value < self.threshold
        if self.kind == "min":
            return self.value > self.threshold
        if self.kind == "eq":
            return self.value == self.reference
        raise ValueError(f"unknown report kind {self.kind!r}")

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        bits = [f"value={self.value:.6g}"]
        if self.reference is not None:
            bits.append(f"ref={self.reference:.6g}")
        if self.p_value is not None:
            bits.append(f"p={self.p_value:.4g}")
        if self.z is not None:
            bits.append(f"z={self.z:.3f}")
        if self.threshold is not None:
            bits.append(f"thr={self.threshold:g}")
        return f"{verdict} {self.name}: " + " ".join(bits)


# --------------------------------------------------------------------------
# statistics

def ks_two_sample(a, b, name: str = "ks", threshold: float = 0.01) -> StatReport:
    """Two-sample Kolmogorov-Smirnov statistic with its asymptotic p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    res = stats.ks_2samp(a, b, method="asymp")
    return StatReport(name, float(res.statistic), 0.0, float(min(max(res.pvalue, 0.0), 1.0)),
                      threshold=threshold, kind="p")


def mc_mean_report(name, samples, reference, threshold=3.0) -> StatReport:
    """z-score of a Monte Carlo mean against an exact reference."""
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(samples.size))
    z = (mean - reference) / se if se > 0 else (0.0 if mean == reference else math.inf)
    return StatReport(name, mean, float(reference), z=float(z), threshold=threshold, kind="z")


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    ci: tuple

    def to_dict(self):
        return {"exponent": self.exponent, "intercept": self.intercept, "ci": list(self.ci)}


def _loglog(xs, ys):
    slope, icpt = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(icpt)


def fit_power_law(xs, ys=None, replicates=None, n_boot: int = 1000, level: float = 0.95,
                  seed: int = 0) -> PowerLawFit:
    """Least-squares fit of log y = intercept + exponent * log x.

    With ``replicates`` (shape len(xs) x R, one column per independent
    replicate) the point fit uses the mean of log y across replicates and the
    interval resamples whole columns.  Otherwise the interval comes from a
    residual bootstrap of the single series.
    """
    xs = np.asarray(xs, dtype=float)
    if replicates is not None:
        reps = np.asarray(replicates, dtype=float)
        if reps.ndim != 2 or reps.shape[0] != len(xs):
            raise ValueError("replicates must have one row per x")
        data = reps
    else:
        data = np.asarray(ys, dtype=float)[:, None]
    if len(xs) < 4:
        raise ValueError("need at least 4 points")
    if np.any(xs <= 0) or np.any(~(data > 0)) or np.any(~np.isfinite(data)):
        raise NonPositiveData("power-law fits need positive, finite data")
    logs = np.log(data)
    lx = np.log(xs)
    slope, icpt = np.polyfit(lx, logs.mean(axis=1), 1)
    gen = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    if data.shape[1] > 1:
        R = data.shape[1]
        for b in range(n_boot):
            cols = gen.integers(0, R, size=R)
            boot[b] = np.polyfit(lx, logs[:, cols].mean(axis=1), 1)[0]
    else:
        fitted = icpt + slope * lx
        resid = logs[:, 0] - fitted
        for b in range(n_boot):
            boot[b] = np.polyfit(lx, fitted + gen.choice(resid, size=len(resid)), 1)[0]
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    # keep the point estimate inside its interval when the bootstrap is degenerate
    return PowerLawFit(float(slope), float(icpt), (float(min(lo, slope)), float(max(hi, slope))))


# --------------------------------------------------------------------------
# results and artifacts

@dataclass
class ExperimentResult:
    reports: list
    tables: dict = field(default_factory=dict)    # name -> (header, rows)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=10, cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def run_experiment(config: ExperimentConfig) -> tuple[int, ExperimentResult]:
    """Run one configured experiment and write its artifacts under ``config.out``.

    Returns (exit status, result); the status is 0 iff every report passes.
    """
    if not isinstance(config, ExperimentConfig):
        raise ConfigInvalid("run_experiment needs an ExperimentConfig")
    spec = EXPERIMENTS[config.experiment]
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    result = spec.fn(config, RngStream(int(config.seed)))
    wall = time.time() - start
    for name, (header, rows) in result.tables.items():
        write_csv(out / f"{name}.csv", header, rows)
    reports = {"experiment": config.experiment, "passed": result.passed,
               "reports": [r.to_dict() for r in result.reports], "extra": result.extra}
    (out / "reports.json").write_text(json.dumps(_jsonable(reports), indent=2, sort_keys=True) + "\n")
    manifest = {"experiment": config.experiment, "config": config.run_dict(), "config_hash": config.hash(),
                "seed": int(config.seed), "git_describe": git_describe(), "wall_time_s": wall,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "artifacts": sorted([f"{n}.csv" for n in result.tables] + ["reports.json"])}
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return (0 if result.passed else 1), result


def parallel_map(fn: Callable, streams, threads: int = 1):
    """Map over pre-split streams; results keep stream order whatever the pool size."""
    if threads <= 1:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, streams))


# --------------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class ExperimentSpec:
    fn: Callable
    criterion: int | None
    needs_n_grid: bool = False
    default_n_grid: tuple = ()


EXPERIMENTS: dict[str, ExperimentSpec] = {}


def experiment(name, criterion=None, n_grid=()):
    def register(fn):
        EXPERIMENTS[name] = ExperimentSpec(fn, criterion, bool(n_grid), tuple(n_grid))
        return fn
    return register


@experiment("verify-stable-sampler", criterion=1)
def exp_stable_sampler(cfg: ExperimentConfig, rng: RngStream) -> ExperimentResult:
    from .samplers import sample_positive_stable
    alphas = cfg.param("alphas", [0.3, 0.5, 0.8])
    s_points = cfg.param("s", [0.5, 1.0, 2.0])
    N = int(cfg.reps or 10 ** 6)
    zmax = cfg.tol("z", 3.0)
    reports, rows = [], []
    for k, alpha in enumerate(alphas):
        x = sample_positive_stable(alpha, 1.0, rng.substream(k).generator, N)
        for s in s_points:
            rep = mc_mean_report(f"stable LT alpha={alpha} s={s}", np.exp(-s * x), math.exp(-s ** alpha), zmax)
            reports.append(rep)
            rows.append([alpha, s, rep.value, rep.reference, rep.z])
    return ExperimentResult(reports, {"stable_lt": (["alpha", "s", "empirical", "exact", "z"], rows)})


@experiment("verify-ml-renewal", criterion=2)
def exp_ml_renewal(cfg, rng):
    from .samplers import (Exponential, mittag_leffler_laplace, sample_phi_mapped,
                           sample_positive_stable)
    from .symbols import stable_symbol
    alpha = cfg.param("alpha", 0.5)
    N = int(cfg.reps or 10 ** 5)
    a = sample_phi_mapped(Exponential(1.0), stable_symbol(alpha), rng.substream(0).generator, N)
    g = rng.substream(1).generator
    u = Exponential(1.0).sample(g, N)
    b = u ** (1.0 / alpha) * sample_positive_stable(alpha, 1.0, g, N)
    ks = ks_two_sample(a, b, "phi-mapped Exp vs U^(1/alpha) D_1", cfg.tol("p", 0.01))
    lt = mc_mean_report("Mittag-Leffler LT at s=1", np.exp(-a), float(mittag_leffler_laplace(alpha, 1.0, 1.0)),
                        cfg.tol("z", 3.0))
    q = np.linspace(0.01, 0.99, 99)
    rows = [[p, x, y] for p, x, y in zip(q, np.quantile(a, q), np.quantile(b, q))]
    return ExperimentResult([ks, lt], {"ml_quantiles": (["level", "phi_mapped", "product_form"], rows)})


def _symbol_from_params(p, default):
    from .symbols import BernsteinSymbol
    return BernsteinSymbol.from_dict(p) if p else default


@experiment("verify-time-change", criterion=3)
def exp_time_change(cfg, rng):
    from .ctrw import build_time_changed_representation, identity_violations
    from .samplers import Exponential, distribution_from_dict
    from .symbols import BernsteinSymbol, StablePower
    U = distribution_from_dict(cfg.params["U"]) if "U" in cfg.params else Exponential(1.0)
    psi = _symbol_from_params(cfg.params.get("psi"), BernsteinSymbol(1.0, StablePower(0.5, 1.0)))
    psi = psi.certify()
    rep = build_time_changed_representation(U, psi)
    scenarios = int(cfg.reps or 1000)
    queries = int(cfg.param("queries", 1000))
    horizon = float(cfg.horizon or 5.0)

    def one(stream):
        g = stream.generator
        sc = rep.scenario(horizon, g)
        # half the queries at the jump epochs of Y (and of the plateaus of E), half uniform
        marks = np.concatenate([sc.Y.epochs, sc.E.xs[(sc.E.xs > 0) & (sc.E.xs < horizon)]])
        k = min(len(marks), queries // 2)
        q = np.concatenate([g.choice(marks, size=k, replace=False) if k else np.zeros(0),
                            g.uniform(0.0, horizon, queries - k)])
        return identity_violations(sc, q), sc.Y.n_jumps

    res = parallel_map(one, rng.split(scenarios), cfg.threads)
    bad = int(sum(r[0] for r in res))
    rows = [[i, r[0], r[1]] for i, r in enumerate(res)]
    report = StatReport("time-change identity violations", bad, 0, kind="eq")
    return ExperimentResult([report], {"identity": (["scenario", "violations", "jumps"], rows)},
                            {"queries_per_scenario": queries, "scenarios": scenarios})


def _pareto_pair(cfg):
    from .samplers import Pareto, Truncated
    from .symbols import build_truncation_symbol
    alpha = cfg.param("alpha", 0.5)
    m = cfg.param("m", 10.0)
    W = Pareto(alpha)
    psi, mu1 = build_truncation_symbol(W, m)
    return W, Truncated(W, m), psi, mu1


@experiment("verify-en-convergence", criterion=4, n_grid=(10 ** 4,))
def exp_en_convergence(cfg, rng):
    from .ctrw import inverse_stable_marginal, scaled_ctrw_pair
    W, U, psi, mu1 = _pareto_pair(cfg)
    N = int(cfg.reps or 10 ** 4)
    level = float(cfg.horizon or 1.0)
    reports, rows = [], []
    for k, n in enumerate(cfg.n_grid):
        pair = scaled_ctrw_pair(U, psi, int(n))
        e = pair.sample_E(level, rng.substream(2 * k).generator, N)
        ref = inverse_stable_marginal(W.alpha, psi.measure.scale, level, rng.substream(2 * k + 1).generator, N)
        rep = ks_two_sample(e, ref, f"E^n({level}) vs inverse stable, n={n}", cfg.tol("p", 0.01))
        reports.append(rep)
        rows.append([n, pair.a_n, rep.value, rep.p_value, float(e.mean()), float(ref.mean())])
    return ExperimentResult(reports, {"en_marginal": (["n", "a_n", "ks", "p", "mean_En", "mean_ref"], rows)},
                            {"mu1": mu1})


@experiment("verify-relative-stability", criterion=8)
def exp_relative_stability(cfg, rng):
    from .ctrw import relative_stability_sample
    from .paths import check_A_delta
    from .samplers import Exponential
    U = Exponential(1.0)
    n_var = int(cfg.param("n_var", 10 ** 5))
    reps_var = int(cfg.param("reps_var", 1000))
    n_A = int(cfg.param("n_A", 10 ** 4))
    reps_A = int(cfg.param("reps_A", 2000))
    delta = float(cfg.param("delta", 0.05))
    T = float(cfg.horizon or 1.0)
    x = relative_stability_sample(U, n_var, reps_var, rng.substream(0).generator)
    var = float(x.var(ddof=1))
    g = rng.substream(1).generator
    hits = 0
    for _ in range(reps_A):
        # epochs a_n T_i with a_n = 1/n, read until past T
        t = np.cumsum(U.sample(g, int(2 * n_A * T) + 64)) / n_A
        while t[-1] <= T:
            t = np.concatenate([t, t[-1] + np.cumsum(U.sample(g, n_A)) / n_A])
        hits += check_A_delta(t, delta, T)
    pA = hits / reps_A
    reports = [StatReport(f"Var(a_n T_n), n={n_var}", var, threshold=cfg.tol("var", 1e-3), kind="max"),
               StatReport(f"P(A_delta), n={n_A}, delta={delta}", pA, threshold=cfg.tol("pA", 0.99), kind="min")]
    rows = [["var_anTn", n_var, var], ["P_A_delta", n_A, pA]]
    return ExperimentResult(reports, {"relative_stability": (["statistic", "n", "value"], rows)})


@experiment("coupling-plan", criterion=5)
def exp_coupling_plan(cfg, rng):
    from .coupling import dyadic_coupling, find_i_bad, worked_example
    F1, F2 = worked_example()
    plan = dyadic_coupling(F1, F2)
    block = [b for b in plan.block_residual if b["start"] == 4][0]
    bad2 = 4 in find_i_bad(plan, 2)
    bad4 = 4 in find_i_bad(plan, 4)
    reports = [StatReport("block [4,8) residual", round(abs(block["residual"]), 12), 0.2, kind="eq"),
               StatReport("I_4 is 2-bad", float(bad2), 1.0, kind="eq"),
               StatReport("I_4 is not 4-bad", float(not bad4), 1.0, kind="eq")]
    rows = [[int(j), int(k), float(w)] for j, k, w in plan.cross]
    return ExperimentResult(reports, {"plan": (["j", "k", "mass"], rows)})


def _pareto_plan(cfg):
    from .coupling import dyadic_coupling, interval_masses
    from .samplers import TruncatedImageTail
    W, _, _, _ = _pareto_pair(cfg)
    j_max = int(cfg.param("j_max", 2 ** 16))
    img = TruncatedImageTail(W, cfg.param("m", 10.0))
    return W, dyadic_coupling(interval_masses(img, j_max), interval_masses(W.sf, j_max))


@experiment("coupling-tail", criterion=6)
def exp_coupling_tail(cfg, rng):
    from .coupling import tail_ratio
    W, plan = _pareto_plan(cfg)
    levels = cfg.param("levels", [8, 16, 32, 64, 128])
    ratios = [tail_ratio(plan, i, W.alpha) for i in levels]
    steps = np.diff(ratios)
    report = StatReport("max successive change of coupled_tail/f-bar", float(steps.max()), threshold=0.0,
                        kind="max")
    rows = [[i, r] for i, r in zip(levels, ratios)]
    return ExperimentResult([report], {"coupled_tail": (["i", "ratio"], rows)})


@experiment("pareto-rate-scan", criterion=7, n_grid=(100, 316, 1000, 3162))
def exp_rate_scan(cfg, rng):
    from .coupling import RateScanPlan, rate_scan
    W, plan = _pareto_plan(cfg)
    rp = RateScanPlan(W.alpha, math.inf, tuple(int(n) for n in cfg.n_grid), cfg.param("c", None))
    seeds = int(cfg.param("seeds", 20))
    reps = int(cfg.reps or 100)
    eps = float(cfg.param("epsilon", 0.1))
    horizon = float(cfg.horizon or 1.0)
    need = int(cfg.tol("monotone_seeds", 18))

    def one(stream):
        return rate_scan(rp, plan, reps, stream, horizon, eps, n_boot=int(cfg.param("n_boot", 1000)))

    scans = parallel_map(one, rng.split(seeds), cfg.threads)
    table = np.array([s.eps_hat for s in scans], dtype=float)
    monotone = int(np.sum(np.all(np.diff(table, axis=1) <= 0, axis=1)))
    reports = [StatReport("seeds with non-increasing eps_hat", monotone, threshold=need - 0.5, kind="min")]
    extra = {"theory": rp.to_dict(), "target": f"c < xi0 = {rp.xi0:.6g}",
             "per_seed": [s.to_dict() for s in scans]}
    try:
        fit = fit_power_law(rp.n_grid, replicates=table.T, n_boot=int(cfg.param("n_boot", 1000)), seed=cfg.seed)
        reports.append(StatReport("upper CI of fitted exponent", fit.ci[1], threshold=0.0, kind="max"))
        extra["fit"] = {**fit.to_dict(), "c_hat": -fit.exponent}
    except NonPositiveData as e:
        reports.append(StatReport("fitted exponent (no fit: nonpositive eps_hat)", math.nan, threshold=0.0,
                                  kind="max"))
        extra["fit"] = {"error": str(e)}
    rows = [[k, n, table[k, i]] for k in range(seeds) for i, n in enumerate(rp.n_grid)]
    return ExperimentResult(reports, {"rate_scan": (["seed_index", "n", "eps_hat"], rows)}, extra)


def quenched_profiles():
    from .paths import TimeChange
    return {"identity": TimeChange.linear(1.0, 4.0),
            "half-speed": TimeChange.linear(0.5, 4.0),
            "plateau": TimeChange([0.0, 1.0, 2.0, 4.0], [0.0, 1.0, 1.0, 3.0])}


@experiment("quenched-variance", criterion=10)
def exp_quenched_variance(cfg, rng):
    from .ctrw import SpaceTimeJumpModel, quenched_variance_check
    from .samplers import Exponential
    model = SpaceTimeJumpModel(Exponential(1.0), validate=False)
    t_grid = np.array(cfg.param("t_grid", [0.5, 1.0, 1.5, 2.0, 3.0]))
    reps = int(cfg.reps or 400)
    n = int(cfg.param("n", 1000))
    zmax = cfg.tol("z", 3.0)
    reports, rows = [], []
    for k, (name, xi) in enumerate(quenched_profiles().items()):
        rep = quenched_variance_check(xi, model, t_grid, reps, rng.substream(k).generator, n)
        reports.append(StatReport(f"quenched variance z, profile {name}", rep.max_abs_z, 0.0,
                                  z=rep.max_abs_z, threshold=zmax, kind="z"))
        for t, x, m, r, z in zip(rep.t_grid, rep.xi_values, rep.qv_mean, rep.qv_reference, rep.z):
            rows.append([name, t, x, m, r, z])
    return ExperimentResult(reports, {"quenched_variance": (["profile", "t", "xi", "qv_mean", "qv_ref", "z"], rows)})


@experiment("general-scheme", n_grid=(1000,))
def exp_general_scheme(cfg, rng):
    """Simulation mode: A Brownian, D drift plus stable, U exponential."""
    from .ctrw import brownian_process, general_scheme_ctrw, subordinator_process
    from .samplers import Exponential
    from .symbols import BernsteinSymbol, StablePower
    psi = _symbol_from_params(cfg.params.get("psi"), BernsteinSymbol(1.0, StablePower(0.5, 1.0))).certify()
    reps = int(cfg.reps or 200)
    horizon = float(cfg.horizon or 1.0)
    t_grid = np.linspace(0.0, horizon, 11)[1:]
    rows, finals = [], []
    for k, n in enumerate(cfg.n_grid):
        for r, s in enumerate(rng.substream(k).split(reps)):
            g = s.generator
            path = general_scheme_ctrw(brownian_process(g), subordinator_process(psi, g), Exponential(1.0),
                                       int(n), horizon, g)
            vals = path(t_grid)
            finals.append(vals[-1])
            rows += [[n, r, t, v] for t, v in zip(t_grid, vals)]
    # the limit B(E_t) at the horizon has mean zero
    rep = mc_mean_report("mean of the walk at the horizon", np.array(finals), 0.0, cfg.tol("z", 4.0))
    return ExperimentResult([rep], {"general_scheme": (["n", "replica", "t", "value"], rows)})


@experiment("verify-rwre", criterion=9, n_grid=(1000,))
def exp_rwre(cfg, rng):
    from .ctrw import (SpaceTimeJumpModel, TemporalLandscape, quenched_type1, quenched_type2,
                       simulate_ctrw, subordinator_process)
    from .samplers import Exponential, sample_mittag_leffler_direct, sample_positive_stable
    from .symbols import rescale_symbol, stable_symbol
    alpha = cfg.param("alpha", 0.5)
    n = int(cfg.n_grid[0])
    N = int(cfg.reps or 10 ** 4)
    ts = np.array(cfg.param("t", [0.5, 1.0, 2.0]))
    horizon = float(ts.max())
    # a_n solving n (1 - LT(a_n)) = 1 for the Mittag-Leffler law
    a_n = (n - 1) ** (-1.0 / alpha)
    sp = n ** -0.5

    class _ML:
        def sample(self, g, size=None):
            return sample_mittag_leffler_direct(alpha, 1.0, g, size)

    direct = SpaceTimeJumpModel(_ML(), validate=False)
    walk = SpaceTimeJumpModel(Exponential(1.0), validate=False)
    psi_n = rescale_symbol(stable_symbol(alpha), n, a_n)
    land = TemporalLandscape(lambda g, k: sample_positive_stable(alpha, 1.0, g, k), Exponential(1.0),
                             1.0 / alpha, True)
    c = land.normalization()
    samplers = {
        "direct": lambda g: simulate_ctrw(direct, horizon, g, a_n, sp)(ts),
        "type1": lambda g: quenched_type1(subordinator_process(psi_n, g), walk, horizon, g, 1.0 / n, sp)(ts),
        "type2": lambda g: quenched_type2(land, walk, horizon, g, time_scale=a_n * c, space_scale=sp)(ts),
    }
    out = {}
    for k, (name, fn) in enumerate(samplers.items()):
        out[name] = np.array(parallel_map(lambda s: fn(s.generator), rng.substream(k).split(N), cfg.threads))
    thr = cfg.tol("p", 0.01) / (2 * len(ts))
    reports, rows = [], []
    for kind in ("type1", "type2"):
        for i, t in enumerate(ts):
            rep = ks_two_sample(out[kind][:, i], out["direct"][:, i], f"{kind} vs direct at t={t}", thr)
            reports.append(rep)
            rows.append([kind, t, rep.value, rep.p_value])
    return ExperimentResult(reports, {"rwre": (["kind", "t", "ks", "p"], rows)},
                            {"a_n": a_n, "bonferroni_threshold": thr})


@experiment("verify-j1", criterion=11)
def exp_j1(cfg, rng):
    from .paths import StepPath, j1_exact_small, j1_upper
    pairs = int(cfg.reps or 500)
    max_jumps = int(cfg.param("max_jumps", 6))
    g = rng.generator

    def rand_path(k):
        ep = np.sort(g.uniform(0.0, 1.0, k))
        return StepPath(ep, np.cumsum(g.choice([-1.0, 1.0, 0.5, 2.0], size=k)), 1.0)

    mismatch = upper_bad = 0
    rows = []
    paths = []
    for i in range(pairs):
        k = int(g.integers(0, max_jumps + 1))
        f = rand_path(k)
        h = rand_path(k if g.random() < 0.5 else int(g.integers(0, max_jumps + 1)))
        d = j1_exact_small(f, h)
        o = j1_enumeration_oracle(f, h)
        mismatch += d != o
        if f.n_jumps == h.n_jumps:
            upper_bad += j1_upper(f, h) < d - 1e-12
        rows.append([i, f.n_jumps, h.n_jumps, d, o])
        paths.append(f)
    worst = 0.0
    for _ in range(int(cfg.param("triples", 1000))):
        a, b, c = (paths[int(i)] for i in g.integers(0, len(paths), 3))
        ab, bc, ac = j1_exact_small(a, b), j1_exact_small(b, c), j1_exact_small(a, c)
        worst = max(worst, ac - ab - bc, abs(ab - j1_exact_small(b, a)))
    reports = [StatReport("j1_exact_small != enumeration oracle", mismatch, 0, kind="eq"),
               StatReport("j1_upper below j1_exact_small", upper_bad, 0, kind="eq"),
               StatReport("worst metric-axiom defect", worst, threshold=1e-9, kind="max")]
    return ExperimentResult(reports, {"j1": (["pair", "jumps_f", "jumps_g", "exact", "oracle"], rows)})


def j1_enumeration_oracle(f, g) -> float:
    """d_J1 of two step paths by enumerating every interleaving of their jumps.

    An interleaving orders all jumps of f (read through lambda) and of g;
    a diagonal step matches a jump of f with one of g at a common time.
    Its cost is the largest value gap over the states it visits, together
    with the smallest displacement sup|lambda(t) - t| that realizes it.
    The displacement only takes values |e_f - e_g| (or 0), so each candidate
    is tried in turn with a greedy placement check.
    """
    vf = np.atleast_2d(np.asarray(f.all_values(), dtype=float).T).T
    vg = np.atleast_2d(np.asarray(g.all_values(), dtype=float).T).T
    ef = [float(e) for e in f.epochs]
    eg = [float(e) for e in g.epochs]
    nf, ng = len(ef), len(eg)
    gaps = np.abs(vf[:, None, :] - vg[None, :, :]).max(axis=2).tolist()
    cands = sorted({0.0} | {abs(a - b) for a in ef for b in eg})
    best = math.inf
    for eps in cands:
        if eps >= best:
            break
        tol = eps + 1e-12

        def dfs(i, j, low, cost):
            # low: g-clock time already used; f jumps land at times in [e - eps, e + eps]
            nonlocal best
            cost = max(cost, gaps[i][j])
            if max(cost, eps) >= best:
                return
            if i == nf and j == ng:
                best = max(cost, eps)
                return
            if i < nf and j < ng and abs(ef[i] - eg[j]) <= tol and eg[j] >= low:
                dfs(i + 1, j + 1, eg[j], cost)
            if i < nf:
                s = max(low, ef[i] - eps)
                if s <= ef[i] + tol and s <= f.horizon:
                    dfs(i + 1, j, s, cost)
            if j < ng and eg[j] >= low:
                dfs(i, j + 1, eg[j], cost)

        dfs(0, 0, 0.0, 0.0)
    return best


SUBCOMMANDS = sorted(EXPERIMENTS)


def default_config(name: str, **kw) -> ExperimentConfig:
    return ExperimentConfig.from_dict({"experiment": name, **kw})


def describe() -> list[str]:
    return [f"{name} (criterion {spec.criterion})" if spec.criterion else name
            for name, spec in sorted(EXPERIMENTS.items())]


def env_seed(default: int = 0) -> int:
    return int(os.environ.get("CTRW_LAB_SEED", default))
