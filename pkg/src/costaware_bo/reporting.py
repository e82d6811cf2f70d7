"""On-disk formats: trial JSONL, aggregate CSV, plot-data CSV and SVG charts.

All writers are deterministic: keys are sorted, floats are written with
``repr`` precision and NaN/inf become ``null`` in JSON.  Wall-clock fields
are the only values that differ between identical runs.
"""

from __future__ import annotations

import csv
import json
import math
from html import escape
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .harness import AggregateReport, TrialRecord, hindsight_time

AGGREGATE_FIELDS = (
    "lambda",
    "acquisition",
    "rule",
    "n_trials",
    "mean_cost_adjusted_regret",
    "se2_cost_adjusted_regret",
    "mean_stop_time",
    "non_stops",
    "mean_cumulative_cost",
    "mean_terminal_regret",
)
CURVE_FIELDS = ("iteration", "mean", "se2")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#17becf")


class ReportFormatError(ValueError):
    pass


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def trial_lines(trial: TrialRecord) -> List[dict]:
    """One dict per evaluation plus a trailer with stop times."""
    cum = trial.cumulative_cost
    out = []
    for k in range(trial.T):
        rules = {}
        for name, st in trial.rule_stats.items():
            rules[name] = {
                "statistic": st["statistic"][k],
                "threshold": st["threshold"][k],
                "stop_raw": st["stop_raw"][k],
                "stop_effective": st.get("stop_effective", [False] * trial.T)[k],
            }
        out.append({
            "t": k + 1,
            "index": trial.indices[k],
            "value": trial.values[k],
            "cost": trial.lam * trial.unit_report_costs[k],
            "policy_cost": trial.lam * trial.unit_costs[k],
            "cumulative_cost": cum[k],
            "incumbent": trial.incumbent[k],
            "simple_regret": trial.simple_regret[k],
            "selected_ei": trial.sel_ei[k],
            "selected_cost": trial.sel_cost[k],
            "rules": rules,
            "wall_clock": trial.wall_clock[k] if k < len(trial.wall_clock) else None,
        })
    out.append({
        "trailer": True,
        "seed": trial.seed,
        "problem": trial.problem,
        "acquisition": trial.acquisition,
        "lambda": trial.lam,
        "n_init": trial.n_init,
        "cap": trial.cap,
        "T": trial.T,
        "stop_times": trial.stop_times,
        "triggered": trial.triggered,
        "hindsight": hindsight_time(trial),
        "error": trial.error,
    })
    return out


def write_trial_jsonl(trial: TrialRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for line in trial_lines(trial):
            fh.write(json.dumps(_clean(line), sort_keys=True, allow_nan=False) + "\n")
    return path


def read_trial_jsonl(path) -> List[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_aggregate_csv(report: AggregateReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for key, value in sorted(report.header.items()):
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_FIELDS)
        for row in report.rows:
            w.writerow([_fmt(row[f]) for f in AGGREGATE_FIELDS])
    return path


def curve_filename(lam: float, acquisition: str) -> str:
    return f"curve_lambda{lam:g}_{acquisition}.csv"


def write_curves(report: AggregateReport, directory) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for curve in report.curves.values():
        p = directory / curve_filename(curve["lambda"], curve["acquisition"])
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_FIELDS)
            for row in zip(curve["iteration"], curve["mean"], curve["se2"]):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2]))])
        paths.append(p)
    return paths


def _read_csv(path, required) -> List[dict]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise ReportFormatError(f"{path}: {exc}") from exc
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or any(f not in reader.fieldnames for f in required):
        raise ReportFormatError(f"{path}: expected columns {list(required)}, got {reader.fieldnames}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if None in row or any(row[f] in (None, "") for f in required):
            raise ReportFormatError(f"{path}: malformed row {lineno}")
        rows.append(row)
    return rows


def read_aggregate_csv(path) -> List[dict]:
    rows = _read_csv(path, AGGREGATE_FIELDS)
    out = []
    for i, row in enumerate(rows, start=2):
        try:
            out.append({
                "lambda": float(row["lambda"]),
                "acquisition": row["acquisition"],
                "rule": row["rule"],
                "n_trials": int(row["n_trials"]),
                **{f: float(row[f]) for f in AGGREGATE_FIELDS[4:]},
            })
        except ValueError as exc:
            raise ReportFormatError(f"{path}: row {i}: {exc}") from exc
    return out


def read_curve_csv(path) -> Dict[str, np.ndarray]:
    rows = _read_csv(path, CURVE_FIELDS)
    try:
        return {f: np.array([float(r[f]) for r in rows]) for f in CURVE_FIELDS}
    except ValueError as exc:
        raise ReportFormatError(f"{path}: {exc}") from exc


# --- SVG ---------------------------------------------------------------------

W, H = 720, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 110


def _svg(body: List[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([
        head,
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        *body,
        "</svg>",
        "",
    ])


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    return np.arange(math.floor(lo / step) * step, hi + 0.5 * step, step)


def _yaxis(lo, hi):
    ticks = _ticks(lo, hi)
    lo, hi = float(ticks[0]), float(ticks[-1])
    span = (hi - lo) or 1.0

    def y(v):
        return TOP + (H - TOP - BOTTOM) * (1.0 - (v - lo) / span)

    parts = [f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>']
    for tk in ticks:
        parts.append(f'<line x1="{LEFT - 4}" y1="{y(tk):.1f}" x2="{W - RIGHT}" y2="{y(tk):.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{LEFT - 6}" y="{y(tk) + 4:.1f}" text-anchor="end">{tk:.3g}</text>')
    return y, parts


def bar_chart_svg(rows: Sequence[dict], title: str) -> str:
    """Mean cost-adjusted regret with 2 SE error bars, one bar per (acquisition, rule)."""
    if not rows:
        raise ReportFormatError("no rows to plot")
    means = np.array([r["mean_cost_adjusted_regret"] for r in rows])
    errs = np.array([r["se2_cost_adjusted_regret"] for r in rows])
    y, parts = _yaxis(min(0.0, float((means - errs).min())), float((means + errs).max()))
    acqs = sorted({r["acquisition"] for r in rows})
    slot = (W - LEFT - RIGHT) / len(rows)
    for k, (r, m, e) in enumerate(zip(rows, means, errs)):
        x0 = LEFT + k * slot + 0.15 * slot
        bw = 0.7 * slot
        color = PALETTE[acqs.index(r["acquisition"]) % len(PALETTE)]
        top, base = y(max(m, 0.0)), y(min(m, 0.0))
        parts.append(f'<rect x="{x0:.1f}" y="{top:.1f}" width="{bw:.1f}" height="{base - top:.1f}" fill="{color}"/>')
        cx = x0 + bw / 2
        parts.append(f'<line x1="{cx:.1f}" y1="{y(m - e):.1f}" x2="{cx:.1f}" y2="{y(m + e):.1f}" stroke="black"/>')
        label = escape(f"{r['acquisition']} / {r['rule']}")
        parts.append(
            f'<text x="{cx:.1f}" y="{H - BOTTOM + 12}" transform="rotate(45 {cx:.1f} {H - BOTTOM + 12})">{label}</text>'
        )
    parts.append(f'<text x="16" y="{TOP + (H - TOP - BOTTOM) / 2}" transform="rotate(-90 16 {TOP + (H - TOP - BOTTOM) / 2})" '
                 'text-anchor="middle">cost-adjusted regret</text>')
    return _svg(parts, title)


def line_chart_svg(curves: Dict[str, Dict[str, np.ndarray]], title: str, markers: Dict[str, float] = None) -> str:
    """Mean +/- 2 SE cost-adjusted regret against a fixed stopping iteration.

    ``markers`` maps a label (e.g. ``hindsight``) to a mean stop iteration,
    drawn as a dashed vertical line.
    """
    if not curves:
        raise ReportFormatError("no curves to plot")
    lo = min(float(np.min(c["mean"] - c["se2"])) for c in curves.values())
    hi = max(float(np.max(c["mean"] + c["se2"])) for c in curves.values())
    y, parts = _yaxis(min(lo, 0.0), hi)
    t_max = max(float(c["iteration"].max()) for c in curves.values())
    t_min = min(float(c["iteration"].min()) for c in curves.values())
    span = (t_max - t_min) or 1.0

    def x(t):
        return LEFT + (W - LEFT - RIGHT) * (t - t_min) / span

    parts.append(f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>')
    for tk in _ticks(t_min, t_max):
        if t_min <= tk <= t_max:
            parts.append(f'<text x="{x(tk):.1f}" y="{H - BOTTOM + 14}" text-anchor="middle">{tk:g}</text>')
    parts.append(f'<text x="{(LEFT + W - RIGHT) / 2}" y="{H - BOTTOM + 32}" text-anchor="middle">iteration</text>')
    for k, (label, c) in enumerate(sorted(curves.items())):
        color = PALETTE[k % len(PALETTE)]
        band = [(x(t), y(m + e)) for t, m, e in zip(c["iteration"], c["mean"], c["se2"])]
        band += [(x(t), y(m - e)) for t, m, e in reversed(list(zip(c["iteration"], c["mean"], c["se2"])))]
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in band)
        parts.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        line = " ".join(f"{x(t):.1f},{y(m):.1f}" for t, m in zip(c["iteration"], c["mean"]))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{LEFT + 10}" y="{H - 40 + 14 * (k % 3)}" fill="{color}">{escape(label)}</text>')
    for label, t in sorted((markers or {}).items()):
        parts.append(
            f'<line class="marker" x1="{x(t):.1f}" y1="{TOP}" x2="{x(t):.1f}" y2="{H - BOTTOM}" '
            'stroke="black" stroke-dasharray="4,3"/>'
        )
        parts.append(f'<text x="{x(t) + 3:.1f}" y="{TOP + 12}">{escape(label)}</text>')
    return _svg(parts, title)
