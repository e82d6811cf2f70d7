"""Seeded BO trials, cost-adjusted regret metrics and aggregation.

A trial always follows one trajectory (chosen by the acquisition function)
and evaluates every stopping rule on it, so rule comparisons within a seed
are paired.  By default trials run to the iteration cap; stop times are
read off the recorded rule statistics afterwards.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import acquisition as acq
from .costs import fit_log_cost_posterior, unknown_cost_estimate
from .gp import Dataset, GPError, KernelSpec, estimate_U, fit_hyperparameters, posterior
from .problems import Problem, initial_design, make_synthetic
from .stopping import (
    RuleConfig,
    apply_smoothing,
    convergence_stop,
    expected_min_regret,
    first_stop,
    gss_stop,
    hindsight_stop,
    logeipc_med_stop,
    pbgi_logeipc_stop,
    prb_stop,
    shift_before_update,
    srgap_med_stop,
    ucb_lcb_stop,
)

ACQUISITIONS = ("pbgi", "logeipc", "pbgi-d", "lcb", "ts")
EI_COST_SLACK = 1e-9
REFIT_EVERY_BEYOND = 100
# used before there are enough observations to fit
DEFAULT_KERNEL = KernelSpec(0.1, 1.0, 0.0)


@dataclass
class AcquisitionConfig:
    name: str = "pbgi"
    lcb_delta: float = 0.1
    scale_down: float = 5.0
    bisection_iters: int = 100
    cost_estimator: Optional[str] = None

    def __post_init__(self):
        if self.name not in ACQUISITIONS:
            raise ValueError(f"unknown acquisition {self.name!r}; choose from {ACQUISITIONS}")
        if self.cost_estimator is None:
            self.cost_estimator = "inv" if self.name == "logeipc" else "exp"


@dataclass
class TrialRecord:
    """Per-evaluation trajectory of one seeded run.

    Lists are indexed by evaluation number minus one.  Rule statistics are
    NaN for evaluations inside the initial design.  ``sel_ei`` and
    ``sel_cost`` describe the decision that produced each evaluation: the
    posterior EI at the incumbent and the scaled policy cost of the chosen
    point.
    """

    seed: int
    problem: dict
    acquisition: str
    lam: float
    n_init: int
    cap: int
    indices: List[int] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    unit_costs: List[float] = field(default_factory=list)
    unit_report_costs: List[float] = field(default_factory=list)
    incumbent: List[float] = field(default_factory=list)
    simple_regret: List[float] = field(default_factory=list)
    sel_ei: List[float] = field(default_factory=list)
    sel_cost: List[float] = field(default_factory=list)
    policy_stat: List[float] = field(default_factory=list)
    wall_clock: List[float] = field(default_factory=list)
    rule_stats: Dict[str, dict] = field(default_factory=dict)
    stop_times: Dict[str, int] = field(default_factory=dict)
    triggered: Dict[str, bool] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def T(self) -> int:
        return len(self.indices)

    @property
    def cumulative_cost(self) -> np.ndarray:
        return self.lam * np.cumsum(self.unit_report_costs)

    def append(self, index, value, unit_cost, report_cost, regret, sel_ei=math.nan, sel_cost=math.nan):
        self.indices.append(int(index))
        self.values.append(float(value))
        self.unit_costs.append(float(unit_cost))
        self.unit_report_costs.append(float(report_cost))
        best = min(self.incumbent[-1], value) if self.incumbent else value
        self.incumbent.append(float(best))
        self.simple_regret.append(float(regret))
        self.sel_ei.append(float(sel_ei))
        self.sel_cost.append(float(sel_cost))


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([abs(int(p)) for p in parts]).generate_state(1)[0])


def _policy_costs(problem, trial, data_points, estimator, seed):
    if problem.cost_known:
        return problem.costs
    post = fit_log_cost_posterior(data_points, trial.unit_costs, problem.candidates, seed=seed)
    return problem.lam * unknown_cost_estimate(post, estimator)


def run_trial(
    problem: Problem,
    acquisition,
    rules: Sequence[RuleConfig] = (),
    cap: int = 100,
    seed: int = 0,
    n_init: Optional[int] = None,
    kernel: Optional[KernelSpec] = None,
    run_to_cap: bool = True,
    init_mode: Optional[str] = None,
) -> TrialRecord:
    """Run one BO trial and evaluate every stopping rule on its trajectory.

    With ``kernel`` given the GP hyperparameters stay fixed (the model-match
    setting); otherwise they are refit by maximum likelihood every
    iteration up to 100 observations and every 5 iterations beyond (a
    single observation uses ``DEFAULT_KERNEL``).  With
    ``run_to_cap=False`` the loop ends as soon as every rule has stopped.
    Problems with ``cost_known=False`` have their costs modeled by a GP on
    log observed costs.
    """
    if isinstance(acquisition, str):
        acquisition = AcquisitionConfig(acquisition)
    cands = problem.candidates
    n_cand, dim = cands.shape
    n_init = min(2 * (dim + 1), n_cand) if n_init is None else n_init
    if cap < n_init:
        raise ValueError(f"cap {cap} is smaller than the initial design {n_init}")
    cap = min(cap, n_cand)
    names = [r.name for r in rules]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate rule names in {names}")

    trial = TrialRecord(seed, problem.descriptor(), acquisition.name, problem.lam, n_init, cap)
    trial.rule_stats = {r.name: {"statistic": [], "threshold": [], "stop_raw": []} for r in rules}
    mode = init_mode or ("random-ids" if problem.test_objective is not None else "sobol")
    evaluated: List[int] = []
    t0 = time.perf_counter()
    for i in initial_design(cands, n_init, mode, seed):
        evaluated.append(int(i))
        trial.append(i, problem.evaluate(i), problem.unit_costs[i], problem.unit_report_costs[i],
                     problem.simple_regret(evaluated))
        trial.policy_stat.append(math.nan)
        for r in rules:
            for key, v in (("statistic", math.nan), ("threshold", math.nan), ("stop_raw", False)):
                trial.rule_stats[r.name][key].append(v)
        trial.wall_clock.append(time.perf_counter() - t0)

    fitted = kernel
    histories = {r.name: [] for r in rules}
    d_state = acq.PBGIDState(1.0)
    eval_mask = np.zeros(n_cand, dtype=bool)
    eval_mask[evaluated] = True

    while True:
        t = len(evaluated)
        tick = time.perf_counter()
        data = Dataset(cands[evaluated], trial.values, standardize=problem.standardize)
        try:
            if kernel is None and t < 2:
                fitted = DEFAULT_KERNEL
            elif kernel is None and (t <= REFIT_EVERY_BEYOND or (t - n_init) % 5 == 0 or fitted is None):
                fitted = fit_hyperparameters(data, seed=_seed(seed, 1, t))
            state = posterior(data, fitted, cands, evaluated_idx=evaluated)
        except GPError as exc:
            trial.error = f"t={t}: {exc}"
            trial.policy_stat.append(math.nan)
            break
        policy_costs = _policy_costs(problem, trial, cands[evaluated], acquisition.cost_estimator, _seed(seed, 2, t))
        if acquisition.name == "pbgi-d":
            policy_costs = policy_costs * d_state.lambda_current
        stat_policy = pbgi_logeipc_stop(state, policy_costs)
        if t > n_init:
            trial.policy_stat.append(stat_policy.statistic)
        else:
            trial.policy_stat[-1] = stat_policy.statistic

        for r in rules:
            dec = _evaluate_rule(r, problem, trial, state, data, fitted, histories[r.name], t, seed)
            stats = trial.rule_stats[r.name]
            if t > n_init:
                stats["statistic"].append(dec.statistic)
                stats["threshold"].append(dec.threshold)
                stats["stop_raw"].append(bool(dec.stop_raw))
            else:
                stats["statistic"][-1] = dec.statistic
                stats["threshold"][-1] = dec.threshold
                stats["stop_raw"][-1] = bool(dec.stop_raw)

        if t >= cap or not np.any(~eval_mask):
            trial.wall_clock[-1] += time.perf_counter() - tick
            break
        if not run_to_cap and rules and all(_stopped(trial, r) for r in rules):
            break

        if acquisition.name == "pbgi-d":
            d_state = acq.pbgi_d_step(d_state, stat_policy.stop_raw)
            policy_costs = policy_costs / (2.0 if stat_policy.stop_raw else 1.0)
        score = _acquire(acquisition, state, data, fitted, policy_costs, t, dim, seed)
        i = score.best_index
        sel_ei = acq.ei(state.mean[i], state.std[i], state.incumbent)
        evaluated.append(i)
        eval_mask[i] = True
        trial.append(i, problem.evaluate(i), problem.unit_costs[i], problem.unit_report_costs[i],
                     problem.simple_regret(evaluated), sel_ei, float(np.asarray(policy_costs)[i]))
        trial.wall_clock.append(time.perf_counter() - tick)

    _finalize(trial, rules)
    return trial


def _acquire(config: AcquisitionConfig, state, data, kernel, costs, t, dim, seed):
    if config.name in ("pbgi", "pbgi-d"):
        return acq.pbgi(state, costs, config.bisection_iters)
    if config.name == "logeipc":
        return acq.log_eipc(state, costs)
    if config.name == "lcb":
        return acq.lcb(state, t, dim, config.lcb_delta, config.scale_down)
    return acq.thompson(data, kernel, state.candidates, _seed(seed, 3, t), state.evaluated)


def _evaluate_rule(r: RuleConfig, problem, trial, state, data, kernel, history, t, seed):
    if r.rule == "pbgi":
        costs = _policy_costs(problem, trial, data.points, "exp", _seed(seed, 2, t)) * r.cost_scale
        return pbgi_logeipc_stop(state, costs)
    if r.rule == "ucb-lcb":
        beta = acq.beta_t(t, problem.dim, r.lcb_delta)
        return ucb_lcb_stop(state, beta, r.theta, r.scale_down)
    if r.rule == "logeipc-med":
        costs = _policy_costs(problem, trial, data.points, "inv", _seed(seed, 2, t))
        history.append(pbgi_logeipc_stop(state, costs).statistic)
        return logeipc_med_stop(history, r.eta, r.warmup)
    if r.rule == "srgap-med":
        est, _ = expected_min_regret(data, kernel, state.candidates, r.srgap_paths, _seed(seed, 4, t))
        history.append(est)
        return srgap_med_stop(history, r.chi, r.warmup)
    if r.rule == "prb":
        return prb_stop(data, kernel, state.candidates, t - trial.n_init + 1, r.epsilon, r.delta,
                        _seed(seed, 5, t), r.prb_max_paths, mean=state.mean)
    if r.rule == "gss":
        return gss_stop(trial.values, r.w, r.phi)
    return convergence_stop(trial.values, r.w)


def _effective(trial: TrialRecord, r: RuleConfig):
    stats = trial.rule_stats[r.name]
    s, thr = np.asarray(stats["statistic"], float), np.asarray(stats["threshold"], float)
    if r.update_timing == "before":
        s, thr = shift_before_update(s, thr)
        s[: trial.n_init] = np.nan
    stab = trial.n_init if r.stabilization is None else r.stabilization
    t_values = np.arange(1, len(s) + 1)
    return apply_smoothing(s, thr, r.ma_window, r.debounce, stab, t_values), t_values


def _stopped(trial: TrialRecord, r: RuleConfig) -> bool:
    eff, _ = _effective(trial, r)
    return bool(np.any(eff))


def _finalize(trial: TrialRecord, rules: Sequence[RuleConfig]):
    for r in rules:
        eff, t_values = _effective(trial, r)
        trial.rule_stats[r.name]["stop_effective"] = [bool(v) for v in eff]
        # a trial cut short by a GP failure reports its last evaluation
        cap = trial.cap if trial.error is None and trial.T >= trial.cap else trial.T
        trial.stop_times[r.name], trial.triggered[r.name] = first_stop(eff, t_values, cap)


# --- metrics ------------------------------------------------------------------


def cost_adjusted_regret(trial: TrialRecord, stop_time, lam: Optional[float] = None) -> float:
    """Simple regret at ``stop_time`` plus cumulative scaled reported cost through it.

    ``stop_time`` is an evaluation count or a rule name in ``trial.stop_times``.
    """
    if isinstance(stop_time, str):
        stop_time = trial.stop_times[stop_time]
    lam = trial.lam if lam is None else lam
    t = min(int(stop_time), trial.T)
    return float(trial.simple_regret[t - 1] + lam * np.sum(trial.unit_report_costs[:t]))


def hindsight_time(trial: TrialRecord, lam: Optional[float] = None) -> int:
    lam = trial.lam if lam is None else lam
    cum = lam * np.cumsum(trial.unit_report_costs)
    return hindsight_stop(trial.simple_regret, cum, start=trial.n_init)


def fixed_iteration_curve(trial: TrialRecord, lam: Optional[float] = None) -> np.ndarray:
    lam = trial.lam if lam is None else lam
    return np.asarray(trial.simple_regret) + lam * np.cumsum(trial.unit_report_costs)


def ei_cost_check(trial: TrialRecord, slack: float = EI_COST_SLACK) -> Optional[bool]:
    """EI of each selected point >= its scaled cost at every iteration before the raw stop.

    Returns None (not applicable) unless the trajectory came from PBGI or
    LogEIPC.
    """
    if trial.acquisition not in ("pbgi", "logeipc"):
        return None
    stats = np.asarray(trial.policy_stat, float)
    raw = np.flatnonzero(stats <= 0.0)
    raw = raw[raw >= trial.n_init - 1]
    tau = int(raw[0]) + 1 if len(raw) else trial.T
    # evaluation s was chosen from the state after s - 1 evaluations
    for s in range(trial.n_init + 1, min(tau, trial.T) + 1):
        if not trial.sel_ei[s - 1] >= trial.sel_cost[s - 1] - slack:
            return False
    return True


@dataclass
class AggregateReport:
    rows: List[dict]
    curves: Dict[str, dict] = field(default_factory=dict)
    header: Dict[str, object] = field(default_factory=dict)

    def row(self, acquisition: str, rule: str, lam: Optional[float] = None) -> dict:
        for r in self.rows:
            if r["acquisition"] == acquisition and r["rule"] == rule and (lam is None or r["lambda"] == lam):
                return r
        raise KeyError((acquisition, rule, lam))


def _mean_se(x) -> tuple:
    x = np.asarray(x, float)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se


def aggregate(trials: Sequence[TrialRecord], rules: Optional[Sequence[str]] = None) -> AggregateReport:
    """Mean +/- 2 SE of cost-adjusted regret per (lambda, acquisition, rule) cell.

    Besides the configured rules, every cell group gets ``hindsight`` (per-
    trial best stop time) and ``cap`` (run to the iteration cap).
    """
    if len(trials) < 2:
        raise ValueError("aggregate needs at least two trials")
    groups: Dict[tuple, List[TrialRecord]] = {}
    for tr in sorted(trials, key=lambda tr: (tr.lam, tr.acquisition, tr.seed)):
        groups.setdefault((tr.lam, tr.acquisition), []).append(tr)
    rows, curves = [], {}
    for (lam, name), group in groups.items():
        rule_names = list(rules) if rules is not None else list(group[0].stop_times)
        for rule in rule_names + ["hindsight", "cap"]:
            times, triggered = [], []
            for tr in group:
                if rule == "hindsight":
                    times.append(hindsight_time(tr))
                    triggered.append(True)
                elif rule == "cap":
                    times.append(tr.cap)
                    triggered.append(True)
                else:
                    times.append(tr.stop_times[rule])
                    triggered.append(tr.triggered[rule])
            car = [cost_adjusted_regret(tr, t) for tr, t in zip(group, times)]
            cum = [float(tr.cumulative_cost[min(t, tr.T) - 1]) for tr, t in zip(group, times)]
            reg = [tr.simple_regret[min(t, tr.T) - 1] for tr, t in zip(group, times)]
            m, se = _mean_se(car)
            rows.append({
                "lambda": lam,
                "acquisition": name,
                "rule": rule,
                "n_trials": len(group),
                "mean_cost_adjusted_regret": m,
                "se2_cost_adjusted_regret": 2.0 * se,
                "mean_stop_time": float(np.mean(times)),
                "non_stops": int(sum(not x for x in triggered)),
                "mean_cumulative_cost": float(np.mean(cum)),
                "mean_terminal_regret": float(np.mean(reg)),
            })
        T = min(tr.T for tr in group)
        mat = np.array([fixed_iteration_curve(tr)[:T] for tr in group])
        se = mat.std(axis=0, ddof=1) / math.sqrt(len(group)) if len(group) > 1 else np.zeros(T)
        curves[f"{lam:g}:{name}"] = {
            "lambda": lam,
            "acquisition": name,
            "iteration": np.arange(1, T + 1),
            "mean": mat.mean(axis=0),
            "se2": 2.0 * se,
        }
    return AggregateReport(rows, curves)


# --- theory checks ----------------------------------------------------------


@dataclass
class BoundReport:
    lam: float
    n_seeds: int
    mean_cost: float
    se_cost: float
    C: float
    U: float
    se_U: float
    trials: list

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se_cost, self.se_U)

    @property
    def bound(self) -> float:
        return self.C + self.U

    @property
    def holds(self) -> bool:
        return self.mean_cost <= self.bound + 3.0 * self.combined_se


def cost_bound_check(
    kernel: Optional[KernelSpec] = None,
    lam: float = 0.1,
    n_seeds: int = 50,
    cost_kind: str = "uniform",
    grid_size: int = 10_001,
    cap: int = 100,
    acquisition: str = "pbgi",
    n_u_draws: int = 2000,
    seed_offset: int = 0,
) -> BoundReport:
    """Expected cumulative scaled cost up to the PBGI/LogEIPC stop versus C + U.

    Trials start from a single point, use the generating kernel, and apply
    the raw rule with no smoothing, debounce or stabilization.
    """
    kernel = kernel or KernelSpec(0.1, 1.0, 0.0)
    rule = RuleConfig("pbgi", stabilization=0)
    costs, first, trials = [], [], []
    for s in range(seed_offset, seed_offset + n_seeds):
        problem = make_synthetic(1, grid_size, kernel, cost_kind, lam, seed=s)
        tr = run_trial(problem, acquisition, [rule], cap, s, n_init=1, kernel=kernel, run_to_cap=False)
        tau = tr.stop_times["pbgi"]
        costs.append(float(tr.cumulative_cost[tau - 1]))
        first.append(float(tr.cumulative_cost[0]))
        trials.append(tr)
    grid = make_synthetic(1, grid_size, kernel, cost_kind, lam, seed=seed_offset).candidates
    U, se_U = estimate_U(kernel, grid, n_u_draws, seed=_seed(seed_offset, 99))
    m, se = _mean_se(costs)
    return BoundReport(lam, n_seeds, m, se, float(np.mean(first)), U, se_U, trials)
