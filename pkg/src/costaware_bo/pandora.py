"""Discrete Pandora's Box: Gittins-index policy and an exact DP optimum.

Minimization convention: each box hides a value drawn from a finite
distribution and costs ``cost`` to open.  The searcher must open at least
one box, may stop at any time afterwards, and pays the smallest value seen
plus all opening costs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

MAX_BOXES = 5
MAX_ATOMS = 6
MAX_STATES = 10**7


@dataclass(frozen=True)
class Box:
    support: tuple
    probs: tuple
    cost: float


@dataclass(frozen=True)
class PandoraInstance:
    boxes: tuple

    def __len__(self):
        return len(self.boxes)


def make_pandora(spec) -> PandoraInstance:
    """Validate ``spec``: an iterable of (support, probs, cost) triples or Box objects."""
    boxes = []
    for k, item in enumerate(spec):
        if isinstance(item, Box):
            support, probs, cost = item.support, item.probs, item.cost
        elif isinstance(item, dict):
            support, probs, cost = item["support"], item["probs"], item["cost"]
        else:
            support, probs, cost = item
        support = tuple(float(v) for v in support)
        probs = tuple(float(p) for p in probs)
        if len(support) != len(probs) or not support:
            raise ValueError(f"box {k}: support and probs must be nonempty and equal length")
        if len(support) > MAX_ATOMS:
            raise ValueError(f"box {k}: {len(support)} atoms exceeds {MAX_ATOMS}")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"box {k}: probabilities must be nonnegative and sum to 1, got {math.fsum(probs)!r}")
        if not all(math.isfinite(v) for v in support):
            raise ValueError(f"box {k}: support must be finite")
        if not cost > 0:
            raise ValueError(f"box {k}: cost must be positive")
        boxes.append(Box(support, probs, float(cost)))
    if not boxes or len(boxes) > MAX_BOXES:
        raise ValueError(f"need between 1 and {MAX_BOXES} boxes, got {len(boxes)}")
    return PandoraInstance(tuple(boxes))


def gittins_index(box: Box) -> float:
    """g solving E[max(g - V, 0)] = cost, by inverting the piecewise-linear EI."""
    atoms = sorted((v, p) for v, p in zip(box.support, box.probs) if p > 0)
    mass = 0.0
    weighted = 0.0
    for j, (v, p) in enumerate(atoms):
        mass += p
        weighted += p * v
        upper = atoms[j + 1][0] if j + 1 < len(atoms) else math.inf
        # on [v, upper): EI(g) = mass * g - weighted
        if mass * upper - weighted >= box.cost:
            return (box.cost + weighted) / mass
    raise AssertionError("unreachable: EI grows without bound")


def gittins_indices(instance: PandoraInstance) -> list:
    return [gittins_index(b) for b in instance.boxes]


def _simulate(instance, outcome, indices, order) -> float:
    """Final value plus costs for one joint outcome under an index policy."""
    unopened = list(order)
    best = math.inf
    spent = 0.0
    while unopened:
        nxt = unopened[0]
        if best < math.inf and min(indices[i] for i in unopened) >= best:
            break
        unopened.pop(0)
        spent += instance.boxes[nxt].cost
        best = min(best, outcome[nxt])
    return best + spent


def pandora_gittins_policy_value(
    instance: PandoraInstance, order: Optional[Sequence[int]] = None
) -> float:
    """Expected value-plus-cost of the index policy, by full enumeration.

    The policy opens boxes by increasing index (lowest box number on ties)
    and stops as soon as the smallest unopened index is >= the best value
    seen.  Passing ``order`` fixes the opening order instead while keeping
    the same stopping condition, which gives suboptimal comparison policies.
    """
    idx = gittins_indices(instance)
    if order is None:
        order = sorted(range(len(instance)), key=lambda i: (idx[i], i))
    atoms = [
        [(v, p) for v, p in zip(b.support, b.probs) if p > 0] for b in instance.boxes
    ]
    total = 0.0
    for combo in itertools.product(*atoms):
        prob = math.prod(p for _, p in combo)
        outcome = [v for v, _ in combo]
        total += prob * _simulate(instance, outcome, idx, order)
    return total


def pandora_dp_value(instance: PandoraInstance) -> float:
    """Optimal expected value-plus-cost by backward induction over
    (opened subset, best value so far)."""
    n = len(instance)
    n_values = sum(len(b.support) for b in instance.boxes) + 1
    if (2**n) * n_values > MAX_STATES:
        raise ValueError(f"DP state space {(2**n) * n_values} exceeds {MAX_STATES}")
    boxes = instance.boxes
    full = (1 << n) - 1

    @lru_cache(maxsize=None)
    def value(opened: int, best: float) -> float:
        options = [] if best == math.inf else [best]
        if opened != full:
            for i in range(n):
                if opened & (1 << i):
                    continue
                b = boxes[i]
                cont = b.cost + sum(
                    p * value(opened | (1 << i), min(best, v))
                    for v, p in zip(b.support, b.probs)
                    if p > 0
                )
                options.append(cont)
        return min(options)

    return value(0, math.inf)


def random_pandora(rng, max_boxes: int = 4, max_atoms: int = 4) -> PandoraInstance:
    """Random instance with uniform supports, Dirichlet probabilities and costs in [0.01, 0.5]."""
    n = int(rng.integers(1, max_boxes + 1))
    spec = []
    for _ in range(n):
        k = int(rng.integers(1, max_atoms + 1))
        support = rng.uniform(0.0, 1.0, size=k)
        probs = rng.dirichlet(np.ones(k))
        probs = probs / math.fsum(probs)
        probs[-1] = 1.0 - math.fsum(probs[:-1])
        spec.append((support, probs, rng.uniform(0.01, 0.5)))
    return make_pandora(spec)
