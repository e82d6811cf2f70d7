"""Evaluation-cost models and cost-scaling helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gp import Dataset, KernelSpec, as_points, fit_hyperparameters, posterior

NATS_PROXY = {
    "cifar10-valid": (1.0, 400.0),
    "cifar100": (2.0, 550.0),
    "ImageNet16-120": (1.0, 1000.0),
}
LCBENCH_PROXY_SLOPE = 1e-3


def bessel_i0(x):
    """Modified Bessel function I_0.

    Power series for |x| <= 15, large-argument asymptotic series beyond.
    """
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x <= 15.0
    if np.any(small):
        q = (x[small] / 2.0) ** 2
        term = np.ones_like(q)
        total = np.ones_like(q)
        for k in range(1, 80):
            term = term * q / (k * k)
            total = total + term
        out[small] = total
    if np.any(~small):
        xl = x[~small]
        term = np.ones_like(xl)
        total = np.ones_like(xl)
        for k in range(1, 30):
            term = term * (2 * k - 1) ** 2 / (8.0 * k * xl)
            total = total + term
        out[~small] = np.exp(xl) / np.sqrt(2.0 * math.pi * xl) * total
    return out if out.ndim else float(out)


def uniform_cost(x) -> np.ndarray:
    pts = as_points(x)
    return np.ones(len(pts))


def linear_cost(x) -> np.ndarray:
    pts = as_points(x)
    return (1.0 + 20.0 * pts.mean(axis=1)) / 11.0


def periodic_cost(x, x_star, alpha: float = 2.0, beta: float = 2.0) -> np.ndarray:
    pts = as_points(x)
    d = pts.shape[1]
    x_star = np.asarray(x_star, dtype=float).reshape(1, d)
    num = np.exp(alpha / d * np.cos(2.0 * math.pi * beta * (pts - x_star)).sum(axis=1))
    return num / bessel_i0(alpha / d) ** d


@dataclass
class CostModel:
    """Known cost function scaled by ``lam``.

    ``kind`` is one of uniform, linear, periodic or table.  For table costs,
    ``table`` holds the per-candidate unscaled costs.
    """

    kind: str = "uniform"
    lam: float = 1.0
    alpha: float = 2.0
    beta: float = 2.0
    x_star: Optional[np.ndarray] = None
    table: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.kind not in ("uniform", "linear", "periodic", "table"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "periodic" and self.x_star is None:
            raise ValueError("periodic cost needs x_star")
        if self.kind == "table" and self.table is None:
            raise ValueError("table cost needs a table")

    def unscaled(self, x) -> np.ndarray:
        if self.kind == "uniform":
            return uniform_cost(x)
        if self.kind == "linear":
            return linear_cost(x)
        if self.kind == "periodic":
            return periodic_cost(x, self.x_star, self.alpha, self.beta)
        idx = np.asarray(x, dtype=int)
        return np.asarray(self.table, dtype=float)[idx]

    def __call__(self, x) -> np.ndarray:
        """Scaled cost.  Table models take candidate indices instead of points."""
        c = self.lam * self.unscaled(x)
        if np.any(c <= 0):
            raise ValueError("cost model produced a nonpositive cost")
        return c


@dataclass
class LogCostPosterior:
    mu_ln_c: np.ndarray
    sigma_ln_c: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mu_ln_c = np.asarray(self.mu_ln_c, dtype=float)
        if self.sigma_ln_c is None:
            self.sigma_ln_c = np.zeros_like(self.mu_ln_c)
        self.sigma_ln_c = np.asarray(self.sigma_ln_c, dtype=float)
        if np.any(self.sigma_ln_c < 0):
            raise ValueError("sigma_ln_c must be nonnegative")


def unknown_cost_estimate(post: LogCostPosterior, estimator: str = "exp") -> np.ndarray:
    """Plug-in cost from a log-normal cost belief.

    ``inv`` gives E[1/c]^{-1} = exp(mu - s^2/2); ``exp`` gives
    E[c] = exp(mu + s^2/2).
    """
    half_var = 0.5 * post.sigma_ln_c**2
    if estimator == "inv":
        return np.exp(post.mu_ln_c - half_var)
    if estimator == "exp":
        return np.exp(post.mu_ln_c + half_var)
    raise ValueError(f"estimator must be 'inv' or 'exp', got {estimator!r}")


def fit_log_cost_posterior(
    points, costs, candidates, kernel: Optional[KernelSpec] = None, seed: int = 0
) -> LogCostPosterior:
    """GP on log observed costs, evaluated at ``candidates``."""
    data = Dataset(points, np.log(np.asarray(costs, dtype=float)), standardize=True)
    if kernel is None:
        if len(data) >= 2 and np.ptp(data.values) > 0:
            kernel = fit_hyperparameters(data, seed=seed)
        else:
            kernel = KernelSpec(0.2, 1.0, 0.0)
    state = posterior(data, kernel, candidates)
    return LogCostPosterior(state.mean, state.std)


def proxy_cost_fit(features, runtimes):
    """Least-squares line runtime ~ slope * feature + intercept.

    Returns (slope, intercept, r_squared).
    """
    f = np.asarray(features, dtype=float)
    r = np.asarray(runtimes, dtype=float)
    if len(f) < 2 or len(f) != len(r):
        raise ValueError("need at least two (feature, runtime) pairs")
    if np.ptp(f) == 0:
        raise ValueError("feature has zero variance; slope is not identifiable")
    A = np.column_stack([f, np.ones_like(f)])
    (slope, intercept), *_ = np.linalg.lstsq(A, r, rcond=None)
    resid = r - (slope * f + intercept)
    ss_tot = float(np.sum((r - r.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def mlp_param_count(layer_sizes) -> int:
    """Weights plus biases of a dense feed-forward net with the given widths."""
    sizes = [int(s) for s in layer_sizes]
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def lcbench_proxy_cost(n_params):
    return LCBENCH_PROXY_SLOPE * np.asarray(n_params, dtype=float)


def nats_proxy_cost(flops, dataset: str = "cifar10-valid"):
    a, b = NATS_PROXY[dataset]
    return a * np.asarray(flops, dtype=float) + b


def lambda_for_budget(U: float, B: float, C: float) -> float:
    """Cost scale that keeps expected spend within budget B (also PBGI-D's lambda_0)."""
    if not U > 0:
        raise ValueError(f"U must be positive, got {U}")
    if not B > C:
        raise ValueError(f"budget {B} does not exceed the initial cost {C}")
    return U / (B - C)
