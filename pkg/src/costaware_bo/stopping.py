"""Stopping rules.

Every rule reduces to ``statistic <= threshold`` (stop on equality), which
lets moving-average smoothing, debounce and the stabilization period be
applied uniformly afterwards by :func:`apply_smoothing`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .acquisition import ei, log_eipc, pbgi
from .gp import Dataset, KernelSpec, PosteriorState, posterior, sample_posterior_paths

PRB_CHUNK = 500
RULES = ("pbgi", "ucb-lcb", "logeipc-med", "srgap-med", "prb", "gss", "convergence")


@dataclass
class StoppingDecision:
    rule_id: str
    statistic: float
    threshold: float
    stop_raw: bool
    stop_effective: bool = False


@dataclass
class RuleConfig:
    """One stopping rule and its parameters.

    ``name`` defaults to ``rule``; give distinct names to run the same rule
    twice.  ``cost_scale`` multiplies the problem's scaled costs for the
    PBGI/LogEIPC rule, so several cost scales can be read off one trajectory.
    """

    rule: str
    name: Optional[str] = None
    theta: float = 0.01
    eta: float = 0.01
    chi: float = 0.01
    warmup: int = 20
    epsilon: float = 0.05
    delta: float = 0.05
    w: int = 5
    phi: float = 0.01
    lcb_delta: float = 0.1
    scale_down: float = 5.0
    srgap_paths: int = 512
    prb_max_paths: int = 2000
    cost_scale: float = 1.0
    debounce: int = 1
    stabilization: Optional[int] = None
    ma_window: int = 1
    update_timing: str = "after"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown stopping rule {self.rule!r}; choose from {RULES}")
        self.name = self.name or self.rule
        for attr in ("theta", "eta", "chi", "epsilon", "delta", "phi", "cost_scale"):
            if not getattr(self, attr) > 0:
                raise ValueError(f"{attr} must be positive")
        if self.ma_window < 1 or self.debounce < 1:
            raise ValueError("ma_window and debounce must be at least 1")
        if self.update_timing not in ("before", "after"):
            raise ValueError("update_timing must be 'before' or 'after'")


# --- the PBGI/LogEIPC rule in its three forms --------------------------------


def pbgi_logeipc_stop(state: PosteriorState, costs) -> StoppingDecision:
    """Stop when max LogEIPC over unevaluated candidates is <= 0."""
    score = log_eipc(state, costs)
    if score.best_index is None:
        return StoppingDecision("pbgi", -math.inf, 0.0, True)
    return StoppingDecision("pbgi", score.best_value, 0.0, score.best_value <= 0.0)


def stopping_forms(state: PosteriorState, costs) -> tuple:
    """Verdicts of (min PBGI >= y*, EI <= c everywhere, max LogEIPC <= 0)."""
    costs = np.broadcast_to(np.asarray(costs, float), state.mean.shape)
    todo = state.unevaluated
    if len(todo) == 0:
        return True, True, True
    g = pbgi(state, costs)
    by_index = bool(g.best_value >= state.incumbent)
    gains = ei(state.mean[todo], state.std[todo], state.incumbent)
    by_ei = bool(np.all(gains <= costs[todo]))
    by_log = pbgi_logeipc_stop(state, costs).stop_raw
    return by_index, by_ei, by_log


def equivalence_check(state: PosteriorState, costs) -> bool:
    return len(set(stopping_forms(state, costs))) == 1


# --- baselines ----------------------------------------------------------------


def ucb_lcb_stop(
    state: PosteriorState, beta: float, theta: float = 0.01, scale_down: float = 5.0
) -> StoppingDecision:
    """Gap between the best UCB among evaluated points and the global min LCB."""
    if not np.any(state.evaluated):
        raise ValueError("UCB-LCB needs at least one evaluated candidate")
    width = math.sqrt(beta) / scale_down
    ucb = state.mean + width * state.std
    lcb = state.mean - width * state.std
    gap = float(np.min(ucb[state.evaluated]) - np.min(lcb))
    return StoppingDecision("ucb-lcb", gap, theta, gap <= theta)


def _warm_threshold(history: Sequence[float], warmup: int):
    if len(history) <= warmup:
        return None
    return float(np.median(np.asarray(history[:warmup], dtype=float)))


def logeipc_med_stop(history: Sequence[float], eta: float = 0.01, warmup: int = 20):
    """Stop once max LogEIPC drops to log(eta) + median of the first ``warmup`` values.

    ``history`` ends with the current statistic.
    """
    stat = float(history[-1])
    med = _warm_threshold(history, warmup)
    if med is None:
        return StoppingDecision("logeipc-med", stat, math.nan, False)
    threshold = math.log(eta) + med
    return StoppingDecision("logeipc-med", stat, threshold, stat <= threshold)


def expected_min_regret(
    data: Dataset, kernel: KernelSpec, candidates, n_paths: int = 512, seed=None
):
    """Posterior estimate of incumbent - E[min_x f(x)]; returns (estimate, SE)."""
    paths = sample_posterior_paths(data, kernel, candidates, n_paths, seed)
    mins = paths.min(axis=1)
    incumbent = float(np.min(data.values))
    return incumbent - float(mins.mean()), float(mins.std(ddof=1) / math.sqrt(n_paths))


def srgap_gaps(regrets: Sequence[float]) -> np.ndarray:
    r = np.asarray(regrets, dtype=float)
    return np.maximum(r[:-1] - r[1:], 0.0)


def srgap_med_stop(regrets: Sequence[float], chi: float = 0.01, warmup: int = 20):
    """Stop once the latest regret gap is <= chi * median of the first gaps.

    ``regrets`` is the sequence of expected-minimum-regret estimates so far.
    """
    gaps = srgap_gaps(regrets)
    if len(gaps) == 0:
        return StoppingDecision("srgap-med", math.nan, math.nan, False)
    stat = float(gaps[-1])
    med = _warm_threshold(gaps, warmup)
    if med is None:
        return StoppingDecision("srgap-med", stat, math.nan, False)
    threshold = chi * med
    return StoppingDecision("srgap-med", stat, threshold, stat <= threshold)


def prb_num_samples(t: int) -> int:
    return max(math.ceil(64 * 1.5 ** (t - 1)), 1000)


def prb_stop(
    data: Dataset,
    kernel: KernelSpec,
    candidates,
    t: int,
    epsilon: float = 0.05,
    delta: float = 0.05,
    seed=None,
    max_paths: Optional[int] = None,
    mean: Optional[np.ndarray] = None,
) -> StoppingDecision:
    """Probabilistic regret bound at the best-posterior-mean candidate.

    The statistic is the estimated probability that the recommendation's
    regret exceeds ``epsilon``; stop when it is <= ``delta``.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    n = prb_num_samples(t)
    if max_paths is not None:
        n = min(n, max_paths)
    rng = np.random.default_rng(seed)
    if mean is None:
        mean = posterior(data, kernel, candidates).mean
    rec = int(np.argmin(mean))
    failures = 0
    for start in range(0, n, PRB_CHUNK):
        m = min(PRB_CHUNK, n - start)
        paths = sample_posterior_paths(data, kernel, candidates, m, rng.integers(2**63))
        failures += int(np.sum(paths[:, rec] - paths.min(axis=1) > epsilon))
    fail = failures / n
    return StoppingDecision("prb", fail, delta, fail <= delta)


def _running_min(values: Sequence[float]) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(values, dtype=float))


def gss_stop(values: Sequence[float], w: int = 5, phi: float = 0.01) -> StoppingDecision:
    """Recent improvement of the incumbent versus phi times the IQR of all observations."""
    y = np.asarray(values, dtype=float)
    if len(y) < w + 1:
        return StoppingDecision("gss", math.nan, math.nan, False)
    best = _running_min(y)
    improvement = float(best[-1 - w] - best[-1])
    q75, q25 = np.percentile(y, [75, 25])
    threshold = phi * float(q75 - q25)
    return StoppingDecision("gss", improvement, threshold, improvement <= threshold)


def convergence_stop(values: Sequence[float], w: int = 5) -> StoppingDecision:
    """Stop when the incumbent has not moved over the last ``w`` evaluations."""
    y = np.asarray(values, dtype=float)
    if len(y) < w + 1:
        return StoppingDecision("convergence", math.nan, math.nan, False)
    best = _running_min(y)
    improvement = float(best[-1 - w] - best[-1])
    return StoppingDecision("convergence", improvement, 0.0, improvement <= 0.0)


# --- post-processing ----------------------------------------------------------


def hindsight_stop(simple_regret: Sequence[float], cumulative_cost: Sequence[float], start: int = 1) -> int:
    """1-based t minimizing regret_t + cumcost_t over t >= ``start``; earliest on ties."""
    obj = np.asarray(simple_regret, float) + np.asarray(cumulative_cost, float)
    return int(start - 1 + np.argmin(obj[start - 1 :]) + 1)


def apply_smoothing(
    statistics: Sequence[float],
    thresholds: Sequence[float],
    ma_window: int = 1,
    debounce: int = 1,
    stabilization: int = 0,
    t_values: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Effective stop flags from raw statistic/threshold histories.

    The statistic is replaced by its trailing mean over the last
    ``ma_window`` finite entries, compared with the current threshold, and a
    stop becomes effective once that verdict has held for ``debounce``
    consecutive entries and t > ``stabilization``.  ``t_values`` are the
    evaluation counts of the entries (default 1, 2, ...).
    """
    stats = np.asarray(statistics, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    n = len(stats)
    t_values = np.arange(1, n + 1) if t_values is None else np.asarray(t_values)
    out = np.zeros(n, dtype=bool)
    run = 0
    window: list = []
    for i in range(n):
        s = stats[i]
        if np.isnan(s):
            window = []
            run = 0
            continue
        window.append(s)
        if len(window) > ma_window:
            window.pop(0)
        smoothed = float(np.mean(window)) if ma_window > 1 else s
        verdict = smoothed <= thr[i]
        run = run + 1 if verdict else 0
        out[i] = run >= debounce and t_values[i] > stabilization
    return out


def first_stop(effective: Sequence[bool], t_values: Sequence[int], cap: int) -> tuple:
    """(stop time, triggered) from effective flags; the cap when never triggered."""
    hits = np.flatnonzero(np.asarray(effective, bool))
    if len(hits) == 0:
        return int(cap), False
    return int(np.asarray(t_values)[hits[0]]), True


def shift_before_update(statistics, thresholds):
    """Before-update variant: the verdict at t uses the after-update statistic at t-1."""
    stats = np.asarray(statistics, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    return np.concatenate([[np.nan], stats[:-1]]), np.concatenate([[np.nan], thr[:-1]])
