"""Exact minimization of total pause cost over rate vectors.

The benchmark program minimizes a sum of concave per-user costs subject to a
capacity constraint, so its optimum sits at an extreme point where at most one
user receives a rate strictly inside (0, p_i).  The search enumerates, for
each candidate fractional user k, the two extreme subset-sum configurations of
the remaining users and keeps the cheapest feasible one.  All subset sums run
on the integer grid, so feasibility decisions are exact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import (
    GridProb,
    RateVector,
    UserProfile,
    common_grid_denominator,
    eval_cost,
)

__all__ = [
    "SubsetSumResult",
    "ConcMinSolution",
    "OpCounter",
    "subset_sum",
    "conc_min",
    "benchmark_cost",
    "brute_force_alpha",
    "reduce_quality_degradation",
]


@dataclass
class OpCounter:
    """Instrumentation: DP cell updates performed by subset_sum."""

    cells: int = 0


@dataclass(frozen=True)
class SubsetSumResult:
    chosen: frozenset[int]
    total: Fraction


def subset_sum(
    pool: Sequence[int],
    weights: Mapping[int, GridProb],
    capacity: Fraction,
    counter: Optional[OpCounter] = None,
) -> SubsetSumResult:
    """Maximize sum of grid weights over subsets of ``pool`` subject to
    the sum not exceeding ``capacity``.

    Ties between optimal subsets are broken deterministically: backtracking
    prefers excluding the later-indexed item.
    """
    items = sorted(pool)
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    if not items:
        return SubsetSumResult(frozenset(), Fraction(0))

    Z = common_grid_denominator([weights[i] for i in items])
    zs = [weights[i].z for i in items]
    total_z = sum(zs)
    cap_z = min(math.floor(capacity * Z), total_z)
    if cap_z >= total_z:
        return SubsetSumResult(frozenset(items), Fraction(total_z, Z))

    k = len(items)
    reach = np.zeros((k + 1, cap_z + 1), dtype=bool)
    reach[0, 0] = True
    for i, z in enumerate(zs, start=1):
        row = reach[i - 1]
        out = row.copy()
        if z <= cap_z:
            out[z:] |= row[: cap_z + 1 - z]
        reach[i] = out
        if counter is not None:
            counter.cells += cap_z + 1

    best = int(np.nonzero(reach[k])[0][-1])

    chosen: set[int] = set()
    s = best
    for i in range(k, 0, -1):
        if reach[i - 1][s]:
            continue  # prefer excluding the current item
        chosen.add(items[i - 1])
        s -= zs[i - 1]
    assert s == 0
    return SubsetSumResult(frozenset(chosen), Fraction(best, Z))


@dataclass(frozen=True)
class ConcMinSolution:
    rates: RateVector
    cost: float
    fractional_user: Optional[int]


def _total_cost(users: Sequence[UserProfile], rates: Sequence[Fraction]) -> float:
    return sum(
        eval_cost(u.cost, u.p.as_fraction, u.p.as_fraction - a)
        for u, a in zip(users, rates)
    )


def _solution(users: Sequence[UserProfile], rates: list[Fraction], c: Fraction) -> ConcMinSolution:
    vec = RateVector(tuple(rates))
    vec.check_feasible(users, c)
    frac = [i for i, (u, a) in enumerate(zip(users, rates)) if 0 < a < u.p.as_fraction]
    assert len(frac) <= 1
    return ConcMinSolution(vec, _total_cost(users, rates), frac[0] if frac else None)


def _check_common_anchor_slope(users: Sequence[UserProfile]) -> None:
    slopes = [
        eval_cost(u.cost, u.p.as_fraction, u.p.as_fraction) / float(u.p)
        for u in users
        if u.p.z > 0
    ]
    if slopes and max(slopes) - min(slopes) > 1e-9:
        warnings.warn(
            "cost anchors V_i(p_i)/p_i differ across users; the extreme-point "
            "search assumes a common anchor slope and may be suboptimal",
            stacklevel=3,
        )


def conc_min(
    users: Sequence[UserProfile],
    c: Fraction,
    counter: Optional[OpCounter] = None,
) -> ConcMinSolution:
    """Solve the benchmark program exactly.

    Underloaded instances get alpha_i = p_i.  Otherwise, for every candidate
    fractional user k, two subset-sum extremes over the remaining users are
    evaluated (serve-fully set vs. starve set) and the cheapest feasible
    candidate over all k wins; ties prefer the serve-fully branch and then the
    lowest k.
    """
    c = Fraction(c)
    if c <= 0:
        raise ValueError(f"capacity must be positive, got {c}")
    n = len(users)
    if n == 0:
        raise ValueError("need at least one user")
    common_grid_denominator([u.p for u in users])
    _check_common_anchor_slope(users)

    ps = [u.p.as_fraction for u in users]
    P = sum(ps, Fraction(0))
    if P <= c:
        return _solution(users, list(ps), c)

    if n == 1:
        # single user: the capacity binds directly
        return _solution(users, [min(ps[0], c)], c)

    weights = {i: u.p for i, u in enumerate(users)}
    best: Optional[tuple[float, list[Fraction]]] = None

    for k in range(n):
        pool = [i for i in range(n) if i != k]
        candidates: list[tuple[float, list[Fraction]]] = []

        # serve-fully branch: L_k maximizes the mass served at full rate
        lk = subset_sum(pool, weights, c, counter)
        alpha_k = c - lk.total
        if 0 <= alpha_k <= ps[k]:
            rates = [Fraction(0)] * n
            for i in lk.chosen:
                rates[i] = ps[i]
            rates[k] = alpha_k
            candidates.append((_total_cost(users, rates), rates))

        # starve branch: R_k maximizes the mass shed to zero rate
        rk = subset_sum(pool, weights, P - c, counter)
        alpha_k = c - (P - ps[k] - rk.total)
        if 0 <= alpha_k <= ps[k]:
            rates = [ps[i] for i in range(n)]
            for i in rk.chosen:
                rates[i] = Fraction(0)
            rates[k] = alpha_k
            candidates.append((_total_cost(users, rates), rates))

        if not candidates:
            continue
        # within k: first candidate (serve-fully) wins ties
        cost_k, rates_k = min(candidates, key=lambda t: t[0])
        if best is None or cost_k < best[0]:
            best = (cost_k, rates_k)

    assert best is not None, "no feasible extreme point found"
    return _solution(users, best[1], c)


def benchmark_cost(users: Sequence[UserProfile], c: Fraction) -> float:
    """The universal lower bound on total asymptotic cost for this instance."""
    return conc_min(users, c).cost


def brute_force_alpha(users: Sequence[UserProfile], c: Fraction) -> ConcMinSolution:
    """Oracle: enumerate all extreme points directly.  Exponential; n <= 12."""
    c = Fraction(c)
    n = len(users)
    if n > 12:
        raise ValueError(f"brute force limited to 12 users, got {n}")
    if c <= 0:
        raise ValueError(f"capacity must be positive, got {c}")

    ps = [u.p.as_fraction for u in users]
    P = sum(ps, Fraction(0))
    if P <= c:
        return _solution(users, list(ps), c)

    best: Optional[tuple[float, list[Fraction]]] = None
    for k in range(n):
        others = [i for i in range(n) if i != k]
        for mask in range(1 << (n - 1)):
            rates = [Fraction(0)] * n
            served = Fraction(0)
            for bit, i in enumerate(others):
                if mask >> bit & 1:
                    rates[i] = ps[i]
                    served += ps[i]
            alpha_k = c - served
            if alpha_k < 0 or alpha_k > ps[k]:
                continue
            rates[k] = alpha_k
            cost = _total_cost(users, rates)
            if best is None or cost < best[0]:
                best = (cost, rates)
    assert best is not None
    return _solution(users, best[1], c)


def reduce_quality_degradation(
    users: Sequence[UserProfile],
    quality_costs: Sequence,
    m: int,
    b: int,
) -> RateVector:
    """Allocate leftover capacity to quality upgrades in an underloaded system.

    After reserving each user's base rate p_i (which zeroes pauses), the
    remaining capacity is split by solving a surrogate instance whose rates
    are the quality headrooms q_i - p_i.  Returns the full per-user service
    rates p_i + beta_i in frames per epoch.
    """
    n = len(users)
    if len(quality_costs) != n:
        raise ValueError("need one quality cost per user")
    Z = common_grid_denominator([u.p for u in users])
    c = Fraction(m, b)
    base = sum((u.p.as_fraction for u in users), Fraction(0))
    if base > c:
        raise ValueError("system overloaded: base rates exceed capacity")

    surrogate = []
    for u, w in zip(users, quality_costs):
        if u.q_full is None:
            raise ValueError(f"user {u.id} has no full-quality rate")
        headroom = GridProb(u.q_full.z - u.p.z, Z)
        surrogate.append(UserProfile(id=u.id, p=headroom, cost=w))

    spare = c - base
    if spare == 0:
        beta = [Fraction(0)] * n
    else:
        beta = list(conc_min(surrogate, spare).rates)
    return RateVector(tuple(u.p.as_fraction + b_i for u, b_i in zip(users, beta)))
