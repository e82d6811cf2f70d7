"""Acquisition functions over a finite candidate set (minimization).

PBGI values and LCB values are minimized; LogEIPC is maximized; Thompson
sampling minimizes a sampled path.  Selection always ranges over
unevaluated candidates and breaks ties by the lowest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfcx, ndtr

from .gp import Dataset, KernelSpec, PosteriorState, sample_posterior_paths

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# below this standardized improvement, log EI switches to a tail formula
TAIL_Z = -6.0
ASYMPTOTIC_Z = -12.0


@dataclass
class AcquisitionScore:
    kind: str
    values: np.ndarray
    best_index: Optional[int]
    best_value: float


@dataclass(frozen=True)
class PBGIDState:
    lambda0: float
    halvings: int = 0

    @property
    def lambda_current(self) -> float:
        return self.lambda0 * 2.0 ** (-self.halvings)


def _select(kind, values, evaluated, maximize=False) -> AcquisitionScore:
    idx = np.flatnonzero(~evaluated)
    if len(idx) == 0:
        return AcquisitionScore(kind, values, None, math.nan)
    sub = values[idx]
    j = int(np.argmax(sub) if maximize else np.argmin(sub))
    return AcquisitionScore(kind, values, int(idx[j]), float(sub[j]))


def _pdf(z):
    return np.exp(-0.5 * z * z - LOG_SQRT_2PI)


def ei(mu, sigma, y):
    """Expected improvement E[max(y - f, 0)] for f ~ N(mu, sigma^2)."""
    mu, sigma, y = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(sigma, float), np.asarray(y, float)
    )
    scalar = mu.ndim == 0
    mu, sigma, y = np.atleast_1d(mu, sigma, y)
    diff = y - mu
    out = np.maximum(diff, 0.0)
    pos = sigma > 0
    if np.any(pos):
        s = sigma[pos]
        z = diff[pos] / s
        out[pos] = _ei_pos(diff[pos], s)
    return float(out[0]) if scalar else out


def _ei_pos(diff, s):
    # EI for sigma > 0 given diff = y - mu; no input handling, used in loops
    z = diff / s
    return np.maximum(diff * ndtr(z) + s * np.exp(-0.5 * z * z - LOG_SQRT_2PI), 0.0)


def _log_h_tail(z):
    """log(phi(z) + z Phi(z)) for z < -6."""
    z = np.asarray(z, float)
    out = np.empty_like(z)
    mid = z >= ASYMPTOTIC_Z
    if np.any(mid):
        zm = z[mid]
        # Mills ratio Phi(z)/phi(z) through erfcx avoids underflow
        mills = math.sqrt(math.pi / 2.0) * erfcx(-zm / math.sqrt(2.0))
        out[mid] = -0.5 * zm * zm - LOG_SQRT_2PI + np.log1p(zm * mills)
    far = ~mid
    if np.any(far):
        zf = z[far]
        w = 1.0 / (zf * zf)
        # 1 + z R(z) = sum_k (-1)^(k+1) (2k-1)!! w^k
        series = np.zeros_like(zf)
        term = np.ones_like(zf)
        for k in range(1, 13):
            term = term * w * (2 * k - 1) if k > 1 else w
            series += term if k % 2 else -term
        out[far] = -0.5 * zf * zf - LOG_SQRT_2PI + np.log(series)
    return out


def log_ei(mu, sigma, y):
    """log EI, accurate far into the tail; -inf where EI is exactly zero."""
    mu, sigma, y = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(sigma, float), np.asarray(y, float)
    )
    scalar = mu.ndim == 0
    mu, sigma, y = np.atleast_1d(mu, sigma, y)
    out = np.empty(mu.shape)
    pos = sigma > 0
    z = np.where(pos, (y - mu) / np.where(pos, sigma, 1.0), 0.0)
    tail = pos & (z < TAIL_Z)
    body = ~tail
    with np.errstate(divide="ignore"):
        out[body] = np.log(ei(mu[body], sigma[body], y[body]))
        if np.any(tail):
            out[tail] = np.log(sigma[tail]) + _log_h_tail(z[tail])
    return float(out[0]) if scalar else out


def log_eipc(state: PosteriorState, costs) -> AcquisitionScore:
    """log(EI(x; incumbent) / cost(x)); best index maximizes over unevaluated points."""
    costs = np.broadcast_to(np.asarray(costs, float), state.mean.shape)
    if np.any(costs <= 0):
        raise ValueError("costs must be positive")
    values = log_ei(state.mean, state.std, state.incumbent) - np.log(costs)
    return _select("LogEIPC", values, state.evaluated, maximize=True)


def _largest_within(mu, cost):
    """Largest float g with fl(g - mu) <= cost: the sigma = 0 index, tie-exact."""
    pad = 4.0 * (np.spacing(np.abs(mu)) + np.spacing(cost))
    lo, hi = mu + cost - pad, mu + cost + pad
    for _ in range(1100):
        mid = lo + 0.5 * (hi - lo)
        moving = (mid != lo) & (mid != hi)
        if not np.any(moving):
            break
        ok = mid - mu <= cost
        lo = np.where(moving & ok, mid, lo)
        hi = np.where(moving & ~ok, mid, hi)
    return np.where(hi - mu <= cost, hi, lo)


def pbgi_index(mu, sigma, cost, iters: int = 100, max_doublings: int = 60):
    """Solve EI(mu, sigma; g) = cost for g by bracketed bisection.

    The bracket starts at mu +/- 10 sigma and grows geometrically until it
    contains the root.  Bisection keeps EI(lo) <= cost < EI(hi) and returns
    ``lo``, the largest g with EI(g) <= cost up to the iteration budget.
    That makes g >= y agree exactly with EI(y) <= cost, ties included.
    For sigma = 0 the root is mu + cost.
    """
    mu, sigma, cost = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(sigma, float), np.asarray(cost, float)
    )
    scalar = mu.ndim == 0
    mu, sigma, cost = np.atleast_1d(mu, sigma, cost)
    if np.any(cost <= 0):
        raise ValueError("costs must be positive")
    g = _largest_within(mu, cost)
    pos = sigma > 0
    if np.any(pos):
        m, s, c = mu[pos], sigma[pos], cost[pos]
        width_hi = np.full(m.shape, 10.0)
        width_lo = np.full(m.shape, 10.0)
        for _ in range(max_doublings):
            short = _ei_pos(width_hi * s, s) <= c
            if not np.any(short):
                break
            width_hi = np.where(short, 2.0 * width_hi, width_hi)
        else:
            if np.any(_ei_pos(width_hi * s, s) <= c):
                raise FloatingPointError("PBGI bracket did not grow to contain the root")
        for _ in range(max_doublings):
            over = _ei_pos(-width_lo * s, s) > c
            if not np.any(over):
                break
            width_lo = np.where(over, 2.0 * width_lo, width_lo)
        else:
            if np.any(_ei_pos(-width_lo * s, s) > c):
                raise FloatingPointError("PBGI bracket did not grow to contain the root")
        lo = m - width_lo * s
        hi = m + width_hi * s
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            above = _ei_pos(mid - m, s) > c
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        g[pos] = lo
    return float(g[0]) if scalar else g


def pbgi(state: PosteriorState, costs, bisection_iters: int = 100) -> AcquisitionScore:
    """Pandora's Box Gittins index; observed values stand in at evaluated points."""
    costs = np.broadcast_to(np.asarray(costs, float), state.mean.shape)
    values = np.array(state.observed, dtype=float)
    todo = ~state.evaluated
    if np.any(todo):
        values[todo] = pbgi_index(state.mean[todo], state.std[todo], costs[todo], bisection_iters)
    return _select("PBGI", values, state.evaluated)


def pbgi_d_step(d_state: PBGIDState, stop_triggered: bool) -> PBGIDState:
    """Halve lambda each time the stopping condition fires."""
    if stop_triggered:
        return PBGIDState(d_state.lambda0, d_state.halvings + 1)
    return d_state


def beta_t(t: int, d: int, delta: float = 0.1) -> float:
    if t < 1 or d < 1:
        raise ValueError("t and d must be at least 1")
    return 2.0 * math.log(d * t * t * math.pi**2 / (6.0 * delta))


def lcb(state: PosteriorState, t: int, d: int, delta: float = 0.1, scale_down: float = 5.0):
    width = math.sqrt(beta_t(t, d, delta)) / scale_down
    values = state.mean - width * state.std
    return _select("LCB", values, state.evaluated)


def thompson(
    data: Dataset,
    kernel: KernelSpec,
    candidates,
    seed=None,
    evaluated: Optional[np.ndarray] = None,
) -> AcquisitionScore:
    path = sample_posterior_paths(data, kernel, candidates, 1, seed)[0]
    if evaluated is None:
        evaluated = np.zeros(len(path), dtype=bool)
    return _select("TS", path, np.asarray(evaluated, bool))
