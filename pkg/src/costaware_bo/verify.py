"""Pinned-seed verification suites behind ``costaware-bo verify``.

Each suite returns a :class:`SuiteResult` whose ``lines`` summarize the
measured quantities and whose ``passed`` flag is the verdict.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .acquisition import ei, pbgi_index
from .costs import LogCostPosterior, unknown_cost_estimate
from .gp import PosteriorState
from .harness import ei_cost_check, cost_bound_check
from .pandora import (
    make_pandora,
    pandora_dp_value,
    pandora_gittins_policy_value,
    random_pandora,
)
from .stopping import pbgi_logeipc_stop, stopping_forms

PANDORA_TWO_BOX = [
    ((0.5,), (1.0,), 0.1),
    ((0.0, 1.0), (0.5, 0.5), 0.1),
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: List[str] = field(default_factory=list)
    seconds: float = 0.0
    details: Dict[str, object] = field(default_factory=dict)


def random_state(rng, n: int = 8, sigma_range=(1e-3, 2.0)) -> PosteriorState:
    """Random posterior marginals with a few candidates marked evaluated."""
    mean = rng.normal(0.0, 1.0, n)
    std = rng.uniform(*sigma_range, n)
    evaluated = np.zeros(n, dtype=bool)
    evaluated[rng.choice(n, size=int(rng.integers(0, n)), replace=False)] = True
    std[evaluated] = 0.0
    observed = np.where(evaluated, mean, np.nan)
    incumbent = float(mean[evaluated].min()) if evaluated.any() else float(rng.normal())
    return PosteriorState(np.zeros((n, 1)), mean, std, incumbent, int(evaluated.sum()), evaluated, observed)


def equivalence_suite(n_states: int = 1000, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    disagree = 0
    stops = 0
    for _ in range(n_states):
        state = random_state(rng)
        costs = 10.0 ** rng.uniform(-4.0, 0.0, len(state.mean))
        forms = stopping_forms(state, costs)
        disagree += len(set(forms)) != 1
        stops += forms[2]
    lines = [f"{n_states - disagree}/{n_states} agreements ({stops} stop verdicts)"]
    return SuiteResult("equivalence", disagree == 0, lines, details={"disagreements": disagree})


def root_accuracy_suite(n: int = 1000, seed: int = 0, iters: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, 3.0, n)
    sigma = 10.0 ** rng.uniform(-3.0, 1.0, n)
    cost = 10.0 ** rng.uniform(-4.0, 1.0, n)
    g = pbgi_index(mu, sigma, cost, iters=iters)
    err = np.abs(ei(mu, sigma, g) - cost) / np.maximum(1.0, cost)
    worst = float(err.max())
    return SuiteResult("roots", worst <= 1e-9, [f"max |EI(g) - c| / max(1, c) = {worst:.3e} over {n} triples"],
                       details={"max_error": worst})


def pandora_suite(n_instances: int = 200, seed: int = 0, max_boxes: int = 4, max_atoms: int = 4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        inst = random_pandora(rng, max_boxes, max_atoms)
        worst = max(worst, abs(pandora_gittins_policy_value(inst) - pandora_dp_value(inst)))
    two = make_pandora(PANDORA_TWO_BOX)
    g, dp, wrong = (
        pandora_gittins_policy_value(two),
        pandora_dp_value(two),
        pandora_gittins_policy_value(two, order=[0, 1]),
    )
    pinned = abs(g - 0.4) <= 1e-12 and abs(dp - 0.4) <= 1e-12 and abs(wrong - 0.45) <= 1e-12
    lines = [
        f"max |Gittins - DP| = {worst:.3e} over {n_instances} instances",
        f"two-box: Gittins {g:.12g}, DP {dp:.12g}, wrong order {wrong:.12g}",
    ]
    return SuiteResult("pandora", worst <= 1e-9 and pinned, lines,
                       details={"max_gap": worst, "two_box": (g, dp, wrong)})


def unknown_cost_suite(n_states: int = 1000, seed: int = 0) -> SuiteResult:
    """Estimator closed forms, their ordering, and which estimator matches PBGI stopping."""
    one = LogCostPosterior(np.array([0.0]), np.array([1.0]))
    inv, exp = unknown_cost_estimate(one, "inv")[0], unknown_cost_estimate(one, "exp")[0]
    closed = abs(inv - math.exp(-0.5)) <= 1e-12 and abs(exp - math.exp(0.5)) <= 1e-12
    rng = np.random.default_rng(seed)
    ordered = True
    exp_agree = 0
    for _ in range(n_states):
        post = LogCostPosterior(rng.normal(-3.0, 1.5, 8), rng.uniform(0.01, 2.0, 8))
        c_inv, c_exp = unknown_cost_estimate(post, "inv"), unknown_cost_estimate(post, "exp")
        ordered &= bool(np.all(c_inv < np.exp(post.mu_ln_c)) and np.all(np.exp(post.mu_ln_c) < c_exp))
        state = random_state(rng)
        by_index = stopping_forms(state, c_exp)[0]
        exp_agree += by_index == pbgi_logeipc_stop(state, c_exp).stop_raw
    # counterexample: EI between the two plug-in costs at one candidate
    state = PosteriorState(np.zeros((1, 1)), [0.0], [1.0], 0.0, 1)
    post = LogCostPosterior([math.log(0.3989)], [0.2])
    pbgi_verdict = stopping_forms(state, unknown_cost_estimate(post, "exp"))[0]
    inv_verdict = pbgi_logeipc_stop(state, unknown_cost_estimate(post, "inv")).stop_raw
    counter = pbgi_verdict != inv_verdict
    passed = closed and ordered and exp_agree == n_states and counter
    lines = [
        f"inv {inv:.15f} exp {exp:.15f} closed-form {'ok' if closed else 'FAIL'}",
        f"ordering inv < exp(mu) < exp on {n_states} states: {'ok' if ordered else 'FAIL'}",
        f"PBGI-stop == LogEIPC-exp-stop on {exp_agree}/{n_states} states",
        f"counterexample: PBGI stop={pbgi_verdict}, LogEIPC-inv stop={inv_verdict}",
    ]
    return SuiteResult("unknown-cost", passed, lines)


def bound_suite(lams=(0.1, 0.01), n_seeds: int = 50, seed_offset: int = 0, **kw) -> SuiteResult:
    lines, passed, reports = [], True, []
    for lam in lams:
        rep = cost_bound_check(lam=lam, n_seeds=n_seeds, seed_offset=seed_offset, **kw)
        reports.append(rep)
        passed &= rep.holds
        lines.append(
            f"lambda={lam:g}: mean cost {rep.mean_cost:.4f} (SE {rep.se_cost:.4f}) vs C+U "
            f"{rep.C:.4f}+{rep.U:.4f} (SE {rep.se_U:.4f}) -> {'holds' if rep.holds else 'VIOLATED'}"
        )
    return SuiteResult("bound", passed, lines, details={"reports": reports})


def ei_cost_suite(lams=(0.1, 0.01), n_seeds: int = 50, seed_offset: int = 0, reports=None, **kw) -> SuiteResult:
    if reports is None:
        reports = [cost_bound_check(lam=lam, n_seeds=n_seeds, seed_offset=seed_offset, **kw) for lam in lams]
    ok = total = 0
    for rep in reports:
        for tr in rep.trials:
            total += 1
            ok += bool(ei_cost_check(tr))
    return SuiteResult("ei-cost", ok == total, [f"EI >= cost holds on {ok}/{total} trials"])


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "equivalence": equivalence_suite,
    "roots": root_accuracy_suite,
    "pandora": pandora_suite,
    "unknown-cost": unknown_cost_suite,
    "bound": bound_suite,
    "ei-cost": ei_cost_suite,
}


def run_suite(name: str, **kw) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    t0 = time.perf_counter()
    res = SUITES[name](**kw)
    res.seconds = time.perf_counter() - t0
    return res
