"""Command-line front end: ``costaware-bo run|verify|plot``.

Run configs are INI files; see ``demos/synth1d.cfg`` for a commented
example.  Command-line flags override the matching ``[run]`` keys.

Exit codes: 0 success, 2 config or input error, 3 verification failure,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from .costs import lambda_for_budget
from .gp import KernelSpec, estimate_U
from .harness import ACQUISITIONS, AcquisitionConfig, aggregate, run_trial
from .problems import TabularFormatError, load_tabular, make_synthetic
from .reporting import (
    ReportFormatError,
    bar_chart_svg,
    curve_filename,
    line_chart_svg,
    read_aggregate_csv,
    read_curve_csv,
    write_aggregate_csv,
    write_curves,
    write_trial_jsonl,
)
from .stopping import RuleConfig
from .verify import SUITES, run_suite

log = logging.getLogger("costaware_bo")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_RUNTIME = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    name: str
    problem: dict
    cost: dict
    acquisitions: List[str]
    acquisition_options: dict
    rules: List[RuleConfig]
    seeds: int
    seed_offset: int
    cap: int
    out: Path
    jobs: int = 1
    n_init: Optional[int] = None
    hyperparameters: str = "mle"
    lambdas: List[float] = dataclasses.field(default_factory=list)
    budget: Optional[float] = None


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _rule_from_section(name: str, sec) -> RuleConfig:
    kwargs = {"rule": sec.get("rule", name), "name": name}
    for f in dataclasses.fields(RuleConfig):
        if f.name in ("rule", "name") or f.name not in sec:
            continue
        default = f.default
        if f.name == "stabilization":
            default = 0
        kwargs[f.name] = _coerce(sec[f.name], default)
    unknown = set(sec) - {f.name for f in dataclasses.fields(RuleConfig)}
    if unknown:
        raise ConfigError(f"[rule {name}]: unknown keys {sorted(unknown)}")
    return RuleConfig(**kwargs)


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config {path}")
    try:
        run = cp["run"] if cp.has_section("run") else {}
        problem = dict(cp["problem"]) if cp.has_section("problem") else {"kind": "synthetic"}
        cost = dict(cp["cost"]) if cp.has_section("cost") else {}
        opts = {k: v for k, v in (cp["acquisition"].items() if cp.has_section("acquisition") else [])}
        rules = [
            _rule_from_section(sec.split(None, 1)[1].strip(), cp[sec])
            for sec in cp.sections()
            if sec.startswith("rule ")
        ]
        if not rules:
            rules = [RuleConfig("pbgi")]
        vals = {
            "name": run.get("name", path.stem),
            "seeds": int(run.get("seeds", "10")),
            "seed_offset": int(run.get("seed_offset", "0")),
            "cap": int(run.get("cap", "100")),
            "out": run.get("out", "results"),
            "jobs": int(run.get("jobs", "1")),
            "n_init": int(run["n_init"]) if "n_init" in run else None,
            "hyperparameters": run.get("hyperparameters", "mle"),
            "acquisitions": [a.strip() for a in run.get("acquisitions", "pbgi").split(",") if a.strip()],
        }
        vals.update({k: v for k, v in (overrides or {}).items() if v is not None})
        lambdas = _floats(cost["lambda"]) if "lambda" in cost else []
        budget = float(cost["budget"]) if "budget" in cost else None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    kind = problem.get("kind", "synthetic")
    if kind not in ("synthetic", "table"):
        raise ConfigError(f"{path}: problem kind must be synthetic or table, got {kind!r}")
    if kind == "table":
        csv_path = problem.get("csv")
        if not csv_path:
            raise ConfigError(f"{path}: table problems need a csv path")
        csv_path = (path.parent / csv_path) if not Path(csv_path).is_absolute() else Path(csv_path)
        if not csv_path.exists():
            raise ConfigError(f"{path}: csv {csv_path} does not exist")
        problem["csv"] = str(csv_path)
    if bool(lambdas) == (budget is not None):
        raise ConfigError(f"{path}: give exactly one of cost.lambda or cost.budget")
    if budget is not None and kind != "synthetic":
        raise ConfigError(f"{path}: cost.budget needs a synthetic problem to estimate U")
    if vals["seeds"] < 1:
        raise ConfigError(f"{path}: seeds must be at least 1")
    for a in vals["acquisitions"]:
        if a not in ACQUISITIONS:
            raise ConfigError(f"{path}: unknown acquisition {a!r}; choose from {ACQUISITIONS}")
    if vals["hyperparameters"] not in ("mle", "fixed"):
        raise ConfigError(f"{path}: hyperparameters must be mle or fixed")
    dim = int(problem.get("dim", "1")) if kind == "synthetic" else None
    if dim is not None and vals["cap"] < (vals["n_init"] or 2 * (dim + 1)):
        raise ConfigError(f"{path}: cap {vals['cap']} is below the initial design size")
    try:
        AcquisitionConfig("pbgi", **{k: _coerce(v, getattr(AcquisitionConfig(), k)) for k, v in opts.items()
                                     if k != "cost_estimator"})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: [acquisition]: {exc}") from exc
    return RunConfig(
        problem=problem,
        cost=cost,
        acquisition_options=opts,
        rules=rules,
        lambdas=lambdas,
        budget=budget,
        out=Path(vals.pop("out")),
        **vals,
    )


def _kernel(problem: dict) -> KernelSpec:
    return KernelSpec(
        float(problem.get("lengthscale", 0.1)),
        float(problem.get("output_scale", 1.0)),
        float(problem.get("mean", 0.0)),
    )


def build_problem(cfg: RunConfig, lam: float, seed: int):
    p = cfg.problem
    if p.get("kind", "synthetic") == "table":
        return load_tabular(p["csv"], p.get("cost_column", "proxy_cost"), p.get("report_cost_column"), lam,
                            name=cfg.name)
    known = cfg.cost.get("known", "true").lower() in ("1", "true", "yes", "on")
    return make_synthetic(
        int(p.get("dim", 1)),
        int(p["grid_size"]) if "grid_size" in p else None,
        _kernel(p),
        cfg.cost.get("kind", "uniform"),
        lam,
        seed=seed,
        candidate_seed=int(p.get("candidate_seed", 0)),
        cost_known=known,
    )


def resolve_lambdas(cfg: RunConfig) -> tuple:
    """Configured lambdas, or U / (B - C) when a budget is given.

    Returns (lambdas, header) where header records how lambda was chosen.
    """
    if cfg.budget is None:
        return list(cfg.lambdas), {"lambda_source": "config"}
    probe = build_problem(cfg, 1.0, cfg.seed_offset)
    n_init = cfg.n_init or 2 * (probe.dim + 1)
    C = n_init * float(np.mean(probe.unit_costs))
    U, se = estimate_U(_kernel(cfg.problem), probe.candidates, 2000, seed=cfg.seed_offset)
    lam = lambda_for_budget(U, cfg.budget, C)
    return [lam], {"lambda_source": "budget", "budget": cfg.budget, "C": C, "U": U, "U_se": se, "lambda": lam}


def _job(args):
    cfg, lam, acq_name, seed = args
    problem = build_problem(cfg, lam, seed)
    opts = {k: _coerce(v, getattr(AcquisitionConfig(), k)) if k != "cost_estimator" else v
            for k, v in cfg.acquisition_options.items()}
    kernel = problem.kernel if cfg.hyperparameters == "fixed" else None
    if cfg.hyperparameters == "fixed" and kernel is None:
        kernel = _kernel(cfg.problem)
    try:
        trial = run_trial(problem, AcquisitionConfig(acq_name, **opts), cfg.rules, cfg.cap, seed,
                          n_init=cfg.n_init, kernel=kernel)
        return trial, None
    except Exception as exc:  # recorded per trial, the grid keeps going
        return None, f"{type(exc).__name__}: {exc}"


def cmd_run(cfg: RunConfig) -> int:
    lambdas, header = resolve_lambdas(cfg)
    for k, v in header.items():
        print(f"{k} = {v}")
    out = cfg.out / cfg.name
    jobs = [
        (cfg, lam, acq, seed)
        for lam in lambdas
        for acq in cfg.acquisitions
        for seed in range(cfg.seed_offset, cfg.seed_offset + cfg.seeds)
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    trials, failures = [], []
    for (_, lam, acq, seed), (trial, err) in zip(jobs, results):
        if err is not None:
            failures.append({"lambda": lam, "acquisition": acq, "seed": seed, "error": err})
            log.error("trial lambda=%g %s seed=%d failed: %s", lam, acq, seed, err)
            continue
        trials.append(trial)
        write_trial_jsonl(trial, out / "trials" / f"lambda{lam:g}_{acq}_seed{seed}.jsonl")
    if failures:
        (out / "failures.jsonl").parent.mkdir(parents=True, exist_ok=True)
        with (out / "failures.jsonl").open("w", encoding="utf-8") as fh:
            for f in failures:
                fh.write(json.dumps(f, sort_keys=True) + "\n")
    if len(trials) >= 2:
        report = aggregate(trials, [r.name for r in cfg.rules])
        report.header.update(header)
        report.header["lambdas"] = " ".join(f"{lam:g}" for lam in lambdas)
        write_aggregate_csv(report, out / "aggregate.csv")
        write_curves(report, out / "curves")
        print(f"wrote {out / 'aggregate.csv'} ({len(report.rows)} cells, {len(trials)} trials)")
    else:
        print(f"only {len(trials)} trial(s) completed; aggregate needs at least two", file=sys.stderr)
    return EXIT_RUNTIME if failures or len(trials) < 2 else EXIT_OK


def cmd_verify(which: str, seed_offset: int = 0, n_seeds: Optional[int] = None) -> int:
    names = [n for n in SUITES] if which == "all" else [which]
    failed = False
    reports = None
    for name in names:
        kw = {}
        if name in ("bound", "ei-cost"):
            kw["seed_offset"] = seed_offset
            if n_seeds is not None:
                kw["n_seeds"] = n_seeds
            if name == "ei-cost" and reports is not None:
                kw["reports"] = reports
        else:
            kw["seed"] = seed_offset
        res = run_suite(name, **kw)
        if name == "bound":
            reports = res.details["reports"]
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {name} ({res.seconds:.2f}s)")
        for line in res.lines:
            print(f"    {line}")
        failed |= not res.passed
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_plot(results: Path) -> int:
    results = Path(results)
    agg = results / "aggregate.csv"
    if not agg.exists():
        print(f"no aggregate.csv in {results}", file=sys.stderr)
        return EXIT_CONFIG
    rows = read_aggregate_csv(agg)
    if not rows:
        print(f"{agg}: no rows", file=sys.stderr)
        return EXIT_CONFIG
    plots = results / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    for lam in sorted({r["lambda"] for r in rows}):
        sub = [r for r in rows if r["lambda"] == lam]
        (plots / f"bars_lambda{lam:g}.svg").write_text(
            bar_chart_svg(sub, f"cost-adjusted regret, lambda = {lam:g}"), encoding="utf-8")
        curves, markers = {}, {}
        for acq in sorted({r["acquisition"] for r in sub}):
            p = results / "curves" / curve_filename(lam, acq)
            if p.exists():
                curves[acq] = read_curve_csv(p)
            hs = [r for r in sub if r["acquisition"] == acq and r["rule"] == "hindsight"]
            if hs:
                markers[f"hindsight ({acq})"] = hs[0]["mean_stop_time"]
        if curves:
            (plots / f"curve_lambda{lam:g}.svg").write_text(
                line_chart_svg(curves, f"fixed-iteration cost-adjusted regret, lambda = {lam:g}", markers),
                encoding="utf-8")
    print(f"wrote plots to {plots}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="costaware-bo", description="Cost-aware BO with adaptive stopping.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an acquisition x rule x seed grid from a config file")
    r.add_argument("config_path", nargs="?", help="config file (same as --config)")
    r.add_argument("--config", dest="config")
    r.add_argument("--jobs", type=int)
    r.add_argument("--seed-offset", type=int)
    r.add_argument("--out")

    v = sub.add_parser("verify", help="run a pinned-seed verification suite")
    v.add_argument("which", choices=sorted(SUITES) + ["all"])
    v.add_argument("--config", help="optional config with a [verify] section (seed_offset, seeds)")
    v.add_argument("--seed-offset", type=int)
    v.add_argument("--seeds", type=int, help="seeds for the bound and ei-cost suites")

    p = sub.add_parser("plot", help="render SVG charts from a results directory")
    p.add_argument("results", nargs="?")
    p.add_argument("--out", help="results directory (same as the positional argument)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            path = args.config or args.config_path
            if not path:
                raise ConfigError("run needs a config file")
            cfg = load_config(path, {"jobs": args.jobs, "seed_offset": args.seed_offset, "out": args.out})
            return cmd_run(cfg)
        if args.command == "verify":
            seed_offset, seeds = 0, None
            if args.config:
                cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
                if not cp.read(args.config, encoding="utf-8"):
                    raise ConfigError(f"cannot read config {args.config}")
                sec = cp["verify"] if cp.has_section("verify") else {}
                seed_offset = int(sec.get("seed_offset", 0))
                seeds = int(sec["seeds"]) if "seeds" in sec else None
            seed_offset = args.seed_offset if args.seed_offset is not None else seed_offset
            seeds = args.seeds if args.seeds is not None else seeds
            return cmd_verify(args.which, seed_offset, seeds)
        target = args.out or args.results
        if not target:
            raise ConfigError("plot needs a results directory")
        return cmd_plot(Path(target))
    except (ConfigError, TabularFormatError, ReportFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
