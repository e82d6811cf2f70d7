"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The statistical criteria (4-7) run the 1-d GP-prior benchmark with 50 seeds
on a 10,001-point grid using the generating kernel, and take a few minutes.
"""

import json
import math
import time

import numpy as np
import pytest

from costaware_bo.acquisition import ei
from costaware_bo.gp import Dataset, KernelSpec, posterior, sample_posterior_paths
from costaware_bo.harness import aggregate, cost_adjusted_regret, ei_cost_check, run_trial
from costaware_bo.problems import load_tabular, make_synthetic
from costaware_bo.stopping import RuleConfig
from costaware_bo.verify import (
    bound_suite,
    equivalence_suite,
    pandora_suite,
    root_accuracy_suite,
    unknown_cost_suite,
)

N_SEEDS = 50
KERNEL = KernelSpec(0.1, 1.0, 0.0)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_01_stopping_form_equivalence(acceptance_log):
    res, secs = timed(equivalence_suite, 1000, seed=0)
    ok = res.details["disagreements"] == 0 and secs < 5.0
    acceptance_log(1, ok, f"{res.lines[0]}, {secs:.2f}s (limit 5s)")
    assert ok


def test_criterion_02_pbgi_root_accuracy(acceptance_log):
    res, secs = timed(root_accuracy_suite, 1000, seed=0, iters=100)
    ok = res.passed and secs < 2.0
    acceptance_log(2, ok, f"{res.lines[0]}, {secs:.3f}s (limit 2s)")
    assert ok


def test_criterion_03_pandora_optimality(acceptance_log):
    res, secs = timed(pandora_suite, 200, seed=0, max_boxes=4, max_atoms=4)
    ok = res.passed and secs < 30.0
    acceptance_log(3, ok, f"{'; '.join(res.lines)}, {secs:.2f}s (limit 30s)")
    assert ok


@pytest.fixture(scope="module")
def bound_run():
    return timed(bound_suite, (0.1, 0.01), n_seeds=N_SEEDS, seed_offset=0)


def test_criterion_04_expected_cost_bound(bound_run, acceptance_log):
    res, secs = bound_run
    ok = res.passed and secs < 600.0
    acceptance_log(4, ok, f"{' | '.join(res.lines)}, {secs:.0f}s (limit 600s)")
    assert ok


def test_criterion_05_ei_above_cost_before_stop(bound_run, acceptance_log):
    res, _ = bound_run
    trials = [tr for rep in res.details["reports"] for tr in rep.trials]
    checked = [ei_cost_check(tr) for tr in trials]
    ok = len(trials) == 2 * N_SEEDS and all(c is True for c in checked)
    acceptance_log(5, ok, f"EI >= cost holds on {sum(c is True for c in checked)}/{len(trials)} trials")
    assert ok


def test_criterion_06_cost_scale_stop_ordering(acceptance_log):
    # one trajectory per seed at c = 1e-4; the second rule sees the same
    # state with costs multiplied by 1000, i.e. c = 0.1
    rules = [
        RuleConfig("pbgi", name="c=1e-4", stabilization=0),
        RuleConfig("pbgi", name="c=0.1", stabilization=0, cost_scale=1000.0),
    ]
    t0 = time.perf_counter()
    low, high = [], []
    for s in range(N_SEEDS):
        p = make_synthetic(1, 10_001, KERNEL, "uniform", 1e-4, seed=s)
        tr = run_trial(p, "pbgi", rules, 100, s, kernel=KERNEL, run_to_cap=False)
        low.append(tr.stop_times["c=1e-4"])
        high.append(tr.stop_times["c=0.1"])
    secs = time.perf_counter() - t0
    low, high = np.array(low), np.array(high)
    never_later = bool(np.all(high <= low))
    frac = float(np.mean(high < low))
    ok = never_later and frac >= 0.8 and secs < 600.0
    acceptance_log(
        6, ok,
        f"stop(c=0.1) <= stop(c=1e-4) on {int(np.sum(high <= low))}/{N_SEEDS} seeds, strictly earlier on "
        f"{frac:.0%}; mean stop {high.mean():.1f} vs {low.mean():.1f}, {secs:.0f}s (limit 600s)",
    )
    assert ok


def test_criterion_07_fig2_shape(acceptance_log):
    trials = []
    for s in range(N_SEEDS):
        p = make_synthetic(1, 10_001, KERNEL, "linear", 0.1, seed=s)
        trials.append(run_trial(p, "pbgi", [RuleConfig("pbgi")], 100, s, kernel=KERNEL))
    rep = aggregate(trials)
    rule, cap, hind = (rep.row("pbgi", r) for r in ("pbgi", "cap", "hindsight"))

    def se(row):
        return row["se2_cost_adjusted_regret"] / 2.0

    m_rule, m_cap, m_hind = (r["mean_cost_adjusted_regret"] for r in (rule, cap, hind))
    se_cap = math.hypot(se(rule), se(cap))
    se_hind = math.hypot(se(rule), se(hind))
    beats_cap = m_rule <= m_cap - 2.0 * se_cap
    near_hind = m_rule - m_hind <= 2.0 * se_hind
    ok = beats_cap and near_hind
    acceptance_log(
        7, ok,
        f"stop {m_rule:.4f} vs cap {m_cap:.4f} (need <= {m_cap - 2 * se_cap:.4f}: {beats_cap}); "
        f"gap to hindsight {m_rule - m_hind:.4f} vs 2 combined SE {2 * se_hind:.4f} ({near_hind})",
    )
    assert ok


def test_criterion_08_unknown_cost_estimators(acceptance_log):
    res = unknown_cost_suite(1000, seed=0)
    acceptance_log(8, res.passed, "; ".join(res.lines))
    assert res.passed


def test_criterion_09_gp_correctness(acceptance_log):
    rng = np.random.default_rng(0)
    x = ((np.arange(12) + rng.uniform(0.2, 0.8, 12)) / 12).reshape(-1, 1)
    y = np.sin(9 * x[:, 0]) + 0.3 * rng.normal(size=12)
    cands = np.vstack([x, np.linspace(0, 1, 80).reshape(-1, 1)])
    data = Dataset(x, y)
    state = posterior(data, KERNEL, cands)
    interp_err = float(np.max(np.abs(state.mean[:12] - y)))
    interp_std = float(np.max(state.std[:12]))
    interp = interp_err <= 1e-4 and interp_std <= 1e-2

    paths = sample_posterior_paths(data, KERNEL, cands, 10_000, seed=1)
    free = slice(12, None)
    z = np.abs(paths[:, free].mean(axis=0) - state.mean[free]) / (state.std[free] / math.sqrt(10_000))
    marginal = bool(np.all(z <= 4.0))

    draws = np.random.default_rng(2).standard_normal(10_000_000)
    gains = np.maximum(0.0 - draws, 0.0)
    ei_z = abs(gains.mean() - ei(0.0, 1.0, 0.0)) / (gains.std() / math.sqrt(len(gains)))
    ok = interp and marginal and ei_z <= 4.0
    acceptance_log(
        9, ok,
        f"interpolation max|dmean|={interp_err:.1e} max std={interp_std:.1e}; "
        f"path-mean max z={z.max():.2f}; EI vs 1e7 MC z={ei_z:.2f}",
    )
    assert ok


def test_criterion_10_tabular_regret(fixtures_dir, acceptance_log):
    expected = json.loads((fixtures_dir / "toy3.expected.json").read_text())
    p = load_tabular(fixtures_dir / "toy3.csv", "proxy_cost", "runtime", lam=1e-3)
    ids = p.meta["ids"]
    by_set = all(
        abs(p.simple_regret([ids.index(i) for i in key.split(",")]) - val) <= 1e-12
        for key, val in expected["regret_by_evaluated_ids"].items()
    )
    tr = run_trial(p, "pbgi", [RuleConfig("pbgi", stabilization=0)], 3, seed=0, n_init=1)
    t = tr.stop_times["pbgi"]
    key = ",".join(sorted(ids[i] for i in tr.indices[:t]))
    want = expected["regret_by_evaluated_ids"][key] + 1e-3 * sum(expected["runtime"][ids[i]] for i in tr.indices[:t])
    got = cost_adjusted_regret(tr, "pbgi")
    full = ",".join(sorted(ids))
    ok = by_set and abs(got - want) <= 1e-12 and expected["regret_by_evaluated_ids"][full] > 0
    acceptance_log(10, ok, f"all evaluated-set regrets match the sidecar: {by_set}; stop at t={t} "
                          f"cost-adjusted regret {got:.6f} vs hand value {want:.6f}")
    assert ok
