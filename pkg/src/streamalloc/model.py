"""Domain types shared by the solvers and the simulator.

Probabilities and service rates that enter feasibility decisions are exact
rationals on a common grid {z/Z}; floating point is confined to cost
evaluation and statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

__all__ = [
    "GridProb",
    "PowerLawCost",
    "LinearCost",
    "TableCost",
    "CostFunction",
    "UserProfile",
    "SystemConfig",
    "RateVector",
    "CostCheckReport",
    "eval_cost",
    "validate_cost",
    "common_grid_denominator",
]

Rational = Union[Fraction, int]
Real = Union[Fraction, int, float]

#: absolute slack for the midpoint-concavity check (double precision noise)
CONCAVITY_EPS = 1e-9
#: absolute slack for the monotonicity check
MONOTONE_EPS = 1e-12


@dataclass(frozen=True)
class GridProb:
    """A probability z/Z on the shared consumption grid.

    All grid values used together in one system instance must share the same
    denominator Z; arithmetic on them is exact.
    """

    z: int
    Z: int

    def __post_init__(self) -> None:
        if self.Z < 1:
            raise ValueError(f"grid denominator must be positive, got {self.Z}")
        if not 0 <= self.z <= self.Z:
            raise ValueError(f"grid numerator {self.z} outside [0, {self.Z}]")

    @property
    def as_fraction(self) -> Fraction:
        return Fraction(self.z, self.Z)

    def __float__(self) -> float:
        return self.z / self.Z

    def __str__(self) -> str:
        return f"{self.z}/{self.Z}"


def common_grid_denominator(probs: Iterable[GridProb]) -> int:
    """Return the shared Z of a collection of grid values, or raise."""
    zs = {p.Z for p in probs}
    if not zs:
        raise ValueError("empty collection has no grid")
    if len(zs) > 1:
        raise ValueError(f"grid denominators differ: {sorted(zs)}")
    return zs.pop()


def _as_fraction(x: Real) -> Fraction:
    if isinstance(x, GridProb):
        return x.as_fraction
    return Fraction(x)


@dataclass(frozen=True)
class PowerLawCost:
    """V(x) = p^theta * x^(1-theta) on [0, p]; concave, V(p) = p."""

    theta: float
    anchor: Fraction

    def __post_init__(self) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    def value(self, x: float) -> float:
        p = float(self.anchor)
        if x == p:
            return p  # unit anchor slope, exact
        return p ** self.theta * x ** (1.0 - self.theta)


@dataclass(frozen=True)
class LinearCost:
    """V(x) = slope * x."""

    slope: float
    anchor: Fraction

    def __post_init__(self) -> None:
        if self.slope <= 0:
            raise ValueError(f"slope must be positive, got {self.slope}")

    def value(self, x: float) -> float:
        return self.slope * x


@dataclass(frozen=True)
class TableCost:
    """Piecewise-linear interpolation through (x, y) breakpoints.

    The table must start at (0, 0); concavity and monotonicity are the
    caller's responsibility and are checkable via validate_cost.
    """

    points: tuple[tuple[float, float], ...]
    anchor: Fraction

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("table needs at least two breakpoints")
        xs = [x for x, _ in self.points]
        if xs != sorted(xs) or len(set(xs)) != len(xs):
            raise ValueError("breakpoint abscissae must be strictly increasing")
        if self.points[0][0] != 0 or self.points[0][1] != 0:
            raise ValueError("table must start at (0, 0)")

    def value(self, x: float) -> float:
        pts = self.points
        if x <= pts[0][0]:
            return pts[0][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x <= x1:
                t = (x - x0) / (x1 - x0)
                return y0 + t * (y1 - y0)
        return pts[-1][1]


CostFunction = Union[PowerLawCost, LinearCost, TableCost]


def eval_cost(cost: CostFunction, p: Real, x: Real) -> float:
    """Evaluate the dissatisfaction cost at pause frequency x, 0 <= x <= p."""
    pf = _as_fraction(p) if not isinstance(p, float) else p
    if x < 0 or x > pf:
        raise ValueError(f"argument {x} outside cost domain [0, {p}]")
    if x == 0:
        return 0.0
    return cost.value(float(x))


@dataclass(frozen=True)
class CostCheckReport:
    """Outcome of validate_cost; carries the first violation found per check."""

    passed: bool
    failures: tuple[str, ...]


def validate_cost(cost: CostFunction, p: Real, grid_points: int) -> CostCheckReport:
    """Check V(0)=0, monotonicity, and midpoint concavity on a uniform grid."""
    if grid_points < 3:
        raise ValueError("need at least 3 sample points")
    pf = float(_as_fraction(p)) if not isinstance(p, float) else p
    xs = [pf * i / (grid_points - 1) for i in range(grid_points)]
    vals = [eval_cost(cost, pf, x) for x in xs]
    failures: list[str] = []

    if vals[0] != 0.0:
        failures.append(f"V(0) = {vals[0]!r}, expected exact 0")

    for a, b, va, vb in zip(xs, xs[1:], vals, vals[1:]):
        if va > vb + MONOTONE_EPS:
            failures.append(f"not non-decreasing: V({a}) = {va} > V({b}) = {vb}")
            break

    # midpoint concavity over all sample pairs
    done = False
    for i in range(len(xs)):
        if done:
            break
        for j in range(i + 2, len(xs)):
            mid = 0.5 * (xs[i] + xs[j])
            vmid = eval_cost(cost, pf, mid)
            if vmid < 0.5 * (vals[i] + vals[j]) - CONCAVITY_EPS:
                failures.append(
                    f"not midpoint-concave at x={xs[i]}, y={xs[j]}: "
                    f"V(mid) = {vmid} < {(vals[i] + vals[j]) / 2}"
                )
                done = True
                break

    return CostCheckReport(passed=not failures, failures=tuple(failures))


@dataclass(frozen=True)
class UserProfile:
    """Per-user stream parameters: consumption rate, cost, and optional
    distributional data used by the feedback-free solver."""

    id: int
    p: GridProb
    cost: CostFunction
    weight: Optional[float] = None
    support: Optional[tuple[Fraction, Fraction]] = None
    q_full: Optional[GridProb] = None

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError("user index must be non-negative")
        if self.support is not None:
            a, b = self.support
            if not (0 <= a < b <= 1):
                raise ValueError(f"support [{a}, {b}] must satisfy 0 <= a < b <= 1")
        if self.weight is not None and self.weight <= 0:
            raise ValueError("weight must be positive")
        if self.q_full is not None and self.q_full.as_fraction < self.p.as_fraction:
            raise ValueError("full-quality rate must be at least the base rate")


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters: users, channels, fading, epoch layout."""

    n: int
    m: int
    b: int = 1
    epoch_slots: int = 1
    h_on: Union[float, tuple] = 1.0
    seed: int = 0
    horizon: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one user and one channel")
        if self.b < 1:
            raise ValueError("frame-size multiplier must be a positive integer")
        hs = self.h_on if isinstance(self.h_on, tuple) else (self.h_on,)
        flat: list[float] = []
        for row in hs:
            flat.extend(row if isinstance(row, tuple) else (row,))
        for h in flat:
            if not 0.0 < h <= 1.0:
                raise ValueError(f"ON probability {h} outside (0, 1]")

    @property
    def capacity(self) -> Fraction:
        """Service capacity c = m/b in frames per epoch, exact."""
        return Fraction(self.m, self.b)


@dataclass(frozen=True)
class RateVector:
    """Per-user service rates; the decision variable of the benchmark program."""

    alpha: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        for a in self.alpha:
            if a < 0:
                raise ValueError(f"negative rate {a}")

    def check_feasible(self, users: Sequence[UserProfile], capacity: Rational) -> None:
        """Raise unless 0 <= alpha_i <= p_i and the capacity constraint holds."""
        if len(self.alpha) != len(users):
            raise ValueError("rate vector length mismatch")
        for a, u in zip(self.alpha, users):
            if a > u.p.as_fraction:
                raise ValueError(f"rate {a} exceeds consumption rate of user {u.id}")
        if sum(self.alpha, Fraction(0)) > capacity:
            raise ValueError("rates exceed capacity")

    def total(self) -> Fraction:
        return sum(self.alpha, Fraction(0))

    def __iter__(self):
        return iter(self.alpha)

    def __len__(self) -> int:
        return len(self.alpha)

    def __getitem__(self, i: int) -> Fraction:
        return self.alpha[i]

    def as_floats(self) -> list[float]:
        return [float(a) for a in self.alpha]
