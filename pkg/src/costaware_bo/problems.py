"""Benchmark problems: GP-prior draws on candidate sets and tabular benchmarks."""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .costs import CostModel
from .gp import KernelSpec, sample_prior_function

DEFAULT_1D_GRID = 10_001
DEFAULT_ND_CANDIDATES = 4096
REQUIRED_COLUMNS = ("id", "val_error", "test_error", "runtime")
FEATURE_RE = re.compile(r"^f(\d+)$")


class TabularFormatError(ValueError):
    pass


@dataclass
class Problem:
    """A finite optimization problem with hidden ground truth.

    ``unit_costs`` feed acquisition and stopping; ``unit_report_costs`` feed
    the reported cumulative cost.  Both are unscaled; ``lam`` scales them.
    In tabular mode ``test_objective`` is set and regret is measured on test
    error at the best-validation configuration.  With ``cost_known=False``
    the policy only sees costs of evaluated points and models the rest.
    """

    name: str
    candidates: np.ndarray
    objective: np.ndarray
    lam: float
    unit_costs: np.ndarray
    unit_report_costs: np.ndarray = None
    test_objective: Optional[np.ndarray] = None
    kernel: Optional[KernelSpec] = None
    standardize: bool = False
    cost_kind: str = "uniform"
    feature_min: Optional[np.ndarray] = None
    feature_range: Optional[np.ndarray] = None
    cost_known: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.unit_costs = np.asarray(self.unit_costs, dtype=float)
        if self.unit_report_costs is None:
            self.unit_report_costs = self.unit_costs
        self.unit_report_costs = np.asarray(self.unit_report_costs, dtype=float)
        if len(self.candidates) != len(self.objective):
            raise ValueError("candidates and objective differ in length")
        if np.any(self.unit_costs <= 0) or np.any(self.unit_report_costs <= 0):
            raise ValueError("costs must be positive")

    @property
    def dim(self) -> int:
        return self.candidates.shape[1]

    @property
    def true_min(self) -> float:
        if self.test_objective is not None:
            return float(np.min(self.test_objective))
        return float(np.min(self.objective))

    @property
    def costs(self) -> np.ndarray:
        """Scaled costs seen by the policy."""
        return self.lam * self.unit_costs

    def evaluate(self, index: int) -> float:
        return float(self.objective[index])

    def simple_regret(self, evaluated) -> float:
        """Regret of the recommendation after evaluating ``evaluated`` indices."""
        evaluated = np.asarray(evaluated, dtype=int)
        best = evaluated[np.argmin(self.objective[evaluated])]
        if self.test_objective is not None:
            return float(self.test_objective[best] - self.true_min)
        return float(self.objective[best] - self.true_min)

    def unscale_features(self, pts) -> np.ndarray:
        if self.feature_min is None:
            return np.asarray(pts, dtype=float)
        return self.feature_min + np.asarray(pts, dtype=float) * self.feature_range

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "n_candidates": len(self.candidates),
            "lambda": self.lam,
            "cost_kind": self.cost_kind,
            "cost_known": self.cost_known,
            **{k: v for k, v in self.meta.items() if k != "ids"},
        }


def synthetic_candidates(dim: int, size: Optional[int] = None, seed: int = 0) -> np.ndarray:
    if dim == 1:
        return np.linspace(0.0, 1.0, size or DEFAULT_1D_GRID).reshape(-1, 1)
    sampler = qmc.Sobol(dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(size or DEFAULT_ND_CANDIDATES)


def make_synthetic(
    dim: int = 1,
    grid_size: Optional[int] = None,
    kernel: Optional[KernelSpec] = None,
    cost_kind: str = "uniform",
    lam: float = 1.0,
    seed: int = 0,
    candidate_seed: int = 0,
    cost_known: bool = True,
) -> Problem:
    """Objective drawn from the GP prior on a grid (1-d) or Sobol set (>= 2-d).

    The candidate set does not depend on ``seed``, so trials with different
    seeds share it.
    """
    kernel = kernel or KernelSpec(0.1, 1.0, 0.0)
    cands = synthetic_candidates(dim, grid_size, candidate_seed)
    f = sample_prior_function(kernel, cands, seed)
    x_star = cands[int(np.argmin(f))]
    model = CostModel(cost_kind, lam, x_star=x_star)
    return Problem(
        name=f"synthetic{dim}d",
        candidates=cands,
        objective=f,
        lam=lam,
        unit_costs=model.unscaled(cands),
        kernel=kernel,
        cost_kind=cost_kind,
        cost_known=cost_known,
        meta={"seed": seed, "lengthscale": kernel.lengthscale},
    )


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        value = float(text.strip())
    except (ValueError, AttributeError):
        raise TabularFormatError(f"row {row}: column {column!r} is not numeric: {text!r}")
    if not math.isfinite(value):
        raise TabularFormatError(f"row {row}: column {column!r} is not finite: {text!r}")
    return value


def load_tabular(
    path,
    cost_column: str = "proxy_cost",
    report_cost_column: Optional[str] = None,
    lam: float = 1.0,
    name: Optional[str] = None,
) -> Problem:
    """Read a benchmark CSV with header ``id, f1..fd, val_error, test_error, runtime[, proxy_cost]``.

    Features are min-max scaled to [0, 1].  ``cost_column`` feeds the policy
    and ``report_cost_column`` (default: same) feeds reported costs, so a
    proxy cost can drive decisions while true runtime is reported.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TabularFormatError(f"{path}: file is empty")
        rows = list(reader)

    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise TabularFormatError(f"{path}: missing required column {col!r}")
    features = sorted(
        (int(m.group(1)), h) for h in header if (m := FEATURE_RE.match(h))
    )
    if not features:
        raise TabularFormatError(f"{path}: no feature columns f1..fd")
    report_cost_column = report_cost_column or cost_column
    for col in (cost_column, report_cost_column):
        if col not in header:
            raise TabularFormatError(f"{path}: missing cost column {col!r}")
    pos = {h: i for i, h in enumerate(header)}

    ids, feats, val, test, cost, report = [], [], [], [], [], []
    seen = {}
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TabularFormatError(
                f"row {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        rid = row[pos["id"]].strip()
        if rid in seen:
            raise TabularFormatError(f"row {lineno}: duplicate id {rid!r} (first at row {seen[rid]})")
        seen[rid] = lineno
        ids.append(rid)
        feats.append([_parse_float(row[pos[h]], h, lineno) for _, h in features])
        val.append(_parse_float(row[pos["val_error"]], "val_error", lineno))
        test.append(_parse_float(row[pos["test_error"]], "test_error", lineno))
        cost.append(_parse_float(row[pos[cost_column]], cost_column, lineno))
        report.append(_parse_float(row[pos[report_cost_column]], report_cost_column, lineno))
    if not ids:
        raise TabularFormatError(f"{path}: no data rows")

    raw = np.array(feats, dtype=float)
    fmin = raw.min(axis=0)
    frange = raw.max(axis=0) - fmin
    frange[frange == 0] = 1.0
    cands = (raw - fmin) / frange
    for lineno, (c, r) in enumerate(zip(cost, report), start=2):
        if c <= 0 or r <= 0:
            raise TabularFormatError(f"row {lineno}: costs must be positive")
    return Problem(
        name=name or path.stem,
        candidates=cands,
        objective=np.array(val),
        lam=lam,
        unit_costs=np.array(cost),
        unit_report_costs=np.array(report),
        test_objective=np.array(test),
        standardize=True,
        cost_kind="table",
        feature_min=fmin,
        feature_range=frange,
        meta={"ids": ids, "cost_column": cost_column, "report_cost_column": report_cost_column},
    )


def initial_design(
    candidates: np.ndarray, n: Optional[int] = None, mode: str = "sobol", seed: int = 0
) -> np.ndarray:
    """Indices of the initial design; ``n`` defaults to 2(d+1).

    ``sobol`` snaps scrambled Sobol points to their nearest candidates,
    dropping duplicates and topping up with further Sobol points;
    ``random-ids`` samples candidate indices without replacement.
    """
    candidates = np.asarray(candidates, dtype=float)
    n_cand, dim = candidates.shape
    n = 2 * (dim + 1) if n is None else int(n)
    if n > n_cand:
        raise ValueError(f"initial design of {n} exceeds {n_cand} candidates")
    if mode == "random-ids":
        return np.random.default_rng(seed).choice(n_cand, size=n, replace=False)
    if mode != "sobol":
        raise ValueError(f"unknown initial design mode {mode!r}")
    tree = cKDTree(candidates)
    sampler = qmc.Sobol(dim, scramble=True, seed=seed)
    chosen: list = []
    taken = set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for _ in range(64):
            pts = sampler.random(max(n, 8))
            _, idx = tree.query(pts)
            for i in np.atleast_1d(idx):
                if int(i) not in taken:
                    taken.add(int(i))
                    chosen.append(int(i))
                    if len(chosen) == n:
                        return np.array(chosen)
    rest = [i for i in range(n_cand) if i not in taken]
    rng = np.random.default_rng(seed)
    chosen += list(rng.choice(rest, size=n - len(chosen), replace=False))
    return np.array(chosen)
