"""Acceptance suite: one experiment per criterion at seed 0, one PASS/FAIL line each.

Run under pytest (lines appear in the -v log) or directly with
``python3 tests/test_acceptance.py``.  Tolerances are pinned here rather than
taken from the experiment defaults so that the thresholds are visible.
"""
import sys
import tempfile

import pytest

from ctrw_lab.harness import EXPERIMENTS, default_config, run_experiment

SEED = 0

# criterion -> (experiment, pinned config overrides)
CRITERIA = {
    1: ("verify-stable-sampler", {"reps": 10 ** 6, "tolerances": {"z": 3.0}}),
    2: ("verify-ml-renewal", {"reps": 10 ** 5, "tolerances": {"p": 0.01, "z": 3.0}}),
    3: ("verify-time-change", {"reps": 1000, "params": {"queries": 1000}}),
    4: ("verify-en-convergence", {"n_grid": [10 ** 4], "reps": 10 ** 4, "tolerances": {"p": 0.01}}),
    5: ("coupling-plan", {}),
    6: ("coupling-tail", {"params": {"levels": [8, 16, 32, 64, 128]}}),
    7: ("pareto-rate-scan", {"n_grid": [100, 316, 1000, 3162], "reps": 100,
                             "params": {"seeds": 20, "epsilon": 0.1}, "tolerances": {"monotone_seeds": 18}}),
    8: ("verify-relative-stability", {"params": {"n_var": 10 ** 5, "reps_var": 1000, "n_A": 10 ** 4,
                                                 "reps_A": 2000, "delta": 0.05},
                                      "tolerances": {"var": 1e-3, "pA": 0.99}}),
    9: ("verify-rwre", {"n_grid": [1000], "reps": 10 ** 4, "tolerances": {"p": 0.01}}),
    10: ("quenched-variance", {"reps": 400, "params": {"n": 1000}, "tolerances": {"z": 3.0}}),
    11: ("verify-j1", {"reps": 500, "params": {"max_jumps": 6, "triples": 1000}}),
}


def run_criterion(k, out):
    name, overrides = CRITERIA[k]
    assert EXPERIMENTS[name].criterion == k
    code, result = run_experiment(default_config(name, seed=SEED, out=out, **overrides))
    worst = next((r for r in result.reports if not r.passed), result.reports[-1])
    line = f"{'PASS' if code == 0 else 'FAIL'} criterion {k} ({name}): {worst.line()}"
    return code, line, result


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, tmp_path, capsys):
    code, line, result = run_criterion(k, str(tmp_path))
    with capsys.disabled():
        print("\n" + line)
        for r in result.reports:
            print("    " + r.line())
    assert code == 0, line


if __name__ == "__main__":
    failed = 0
    for k in sorted(CRITERIA):
        with tempfile.TemporaryDirectory() as d:
            code, line, _ = run_criterion(k, d)
        print(line, flush=True)
        failed += code != 0
    sys.exit(1 if failed else 0)
