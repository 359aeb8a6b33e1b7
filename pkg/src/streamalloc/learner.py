"""Learning the consumption rates from one-bit buffer feedback.

Time is split into fixed-length phases; phases whose index is an exact power
of r are exploration phases.  During exploration every user is served a full
frame per scheduled epoch in a work-conserving round-robin, and reports one
bit per scheduled epoch: whether its buffer grew.  Since service is exactly
one frame, the bit is 0 precisely when a frame was consumed, so the zero-rate
of the bits estimates the consumption rate.  Estimates snap to the known
rate grid, after which the allocator is re-planned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .allocator import SlotPlan, allocate_channels
from .model import GridProb, UserProfile
from .optimizer import conc_min

__all__ = [
    "PhasePlan",
    "EstimatorState",
    "PhaseRecord",
    "is_exploration_phase",
    "round_to_grid",
    "update_estimates",
    "explore_allocate",
    "ifestival_step",
    "IFestival",
    "powerlaw_cost_builder",
]


def is_exploration_phase(tau: int, r: int) -> bool:
    """True iff tau is an exact power of r (tau = 1 counts: r^0)."""
    if tau < 1:
        raise ValueError("phase index starts at 1")
    while tau % r == 0:
        tau //= r
    return tau == 1


@dataclass(frozen=True)
class PhasePlan:
    """Epoch layout of the learning schedule."""

    n: int
    m: int
    b: int
    w: int
    r: int

    def __post_init__(self) -> None:
        if self.w < 2 or self.r < 2:
            raise ValueError("w and r must be integers >= 2")

    @property
    def rounds_len(self) -> int:
        """Epochs needed to give every user one full-frame epoch."""
        return math.ceil(self.n * self.b / self.m)

    @property
    def explore_len(self) -> int:
        return self.w * self.rounds_len

    @property
    def phase_len(self) -> int:
        return (self.w + 1) * self.rounds_len

    def phase_of(self, t: int) -> int:
        return (t - 1) // self.phase_len + 1

    def epoch_in_phase(self, t: int) -> int:
        return (t - 1) % self.phase_len + 1

    def min_gap_condition(self, ps: Sequence[Fraction]) -> bool:
        """Check w against the known true rates (test-harness helper)."""
        gaps = [
            abs(float(a) - float(b)) for i, a in enumerate(ps) for b in ps[i + 1 :]
        ]
        if not gaps or min(gaps) == 0:
            return False
        return self.w > 2.0 * math.log(self.r) / min(gaps)


def round_to_grid(zeros: int, bits: int, Z: int) -> GridProb:
    """Nearest grid point to zeros/bits; exact ties round up."""
    if bits <= 0:
        raise ValueError("no bits collected")
    z = math.floor(Fraction(zeros, bits) * Z + Fraction(1, 2))
    return GridProb(min(z, Z), Z)


@dataclass(frozen=True)
class EstimatorState:
    """Running feedback tallies and the current grid estimates."""

    zero_counts: tuple[int, ...]
    bit_counts: tuple[int, ...]
    completed: int  # exploration phases fully processed
    p_hat: tuple[GridProb, ...]

    @classmethod
    def initial(cls, n: int, Z: int) -> "EstimatorState":
        # conservative prior: assume every user consumes every epoch
        return cls((0,) * n, (0,) * n, 0, tuple(GridProb(Z, Z) for _ in range(n)))


def update_estimates(
    state: EstimatorState,
    feedback_bits: Sequence[Sequence[int]],
    Z: int,
) -> EstimatorState:
    """Fold one exploration phase of per-user bits into the estimates.

    A bit of 0 means the buffer did not grow, i.e. a frame was consumed.
    Users whose scheduled epochs were lost to fading contribute fewer bits;
    those epochs are excluded from numerator and denominator alike.
    """
    n = len(state.p_hat)
    if len(feedback_bits) != n:
        raise ValueError("need one bit sequence per user")
    zeros = list(state.zero_counts)
    bits = list(state.bit_counts)
    for i, seq in enumerate(feedback_bits):
        for bit in seq:
            if bit not in (0, 1):
                raise ValueError(f"feedback bit {bit!r} is not binary")
            zeros[i] += 1 - bit
            bits[i] += 1
    p_hat = [
        round_to_grid(z, k, Z) if k > 0 else old
        for z, k, old in zip(zeros, bits, state.p_hat)
    ]
    return EstimatorState(tuple(zeros), tuple(bits), state.completed + 1, tuple(p_hat))


@dataclass
class _Roster:
    """Work-conserving round-robin over users with remaining exploration quota."""

    n: int
    m: int
    b: int
    w: int
    pointer: int = 0
    quotas: list[int] = field(default_factory=list)
    deferrals: int = 0

    def __post_init__(self) -> None:
        if not self.quotas:
            self.quotas = [self.w] * self.n

    def pick(self, H: np.ndarray) -> list[tuple[int, tuple[int, ...]]]:
        """Serve up to m//b users this epoch, b ON channels each.

        Users whose channels cannot support b ON channels right now are
        deferred: the scan moves on and retries them next epoch.
        """
        served: list[tuple[int, tuple[int, ...]]] = []
        used = np.zeros(self.m, dtype=bool)
        last_served = None
        for step in range(self.n):
            if len(served) >= self.m // self.b:
                break
            u = (self.pointer + step) % self.n
            if self.quotas[u] <= 0:
                continue
            on = [j for j in range(self.m) if H[u, j] and not used[j]]
            if len(on) < self.b:
                self.deferrals += 1
                continue
            chans = tuple(on[: self.b])
            for j in chans:
                used[j] = True
            served.append((u, chans))
            self.quotas[u] -= 1
            last_served = u
        if last_served is not None:
            self.pointer = (last_served + 1) % self.n
        return served

    @property
    def finished(self) -> bool:
        return all(q <= 0 for q in self.quotas)


def explore_allocate(
    roster: _Roster, H: np.ndarray
) -> tuple[np.ndarray, list[tuple[int, tuple[int, ...]]]]:
    """One exploration epoch: returns served frame counts and the grants."""
    grants = roster.pick(H)
    served = np.zeros(roster.n, dtype=np.int64)
    for u, chans in grants:
        served[u] += len(chans) // roster.b
    return served, grants


@dataclass(frozen=True)
class PhaseRecord:
    tau: int
    exploring: bool
    p_hat: tuple[GridProb, ...]
    alpha_hat: tuple[Fraction, ...]
    bits_total: int


def powerlaw_cost_builder(theta: float) -> Callable[[Sequence[GridProb]], list[UserProfile]]:
    """Profiles with the power-family cost anchored at the estimated rates."""
    from .model import PowerLawCost

    def build(p_hat: Sequence[GridProb]) -> list[UserProfile]:
        return [
            UserProfile(id=i, p=p, cost=PowerLawCost(theta, p.as_fraction))
            for i, p in enumerate(p_hat)
        ]

    return build


class IFestival:
    """Policy factory for the phased learn-and-allocate scheduler."""

    def __init__(
        self,
        w: int,
        r: int,
        Z: int,
        cost_builder: Callable[[Sequence[GridProb]], list[UserProfile]],
        b: int = 1,
        log_phases: bool = False,
    ):
        self.w = w
        self.r = r
        self.Z = Z
        self.cost_builder = cost_builder
        self.b = b
        self.log_phases = log_phases

    def start(self, n: int, m: int) -> "_IFestivalState":
        return _IFestivalState(self, n, m)


class _IFestivalState:
    def __init__(self, policy: IFestival, n: int, m: int):
        self.policy = policy
        self.n = n
        self.m = m
        self.plan = PhasePlan(n, m, policy.b, policy.w, policy.r)
        self.estimator = EstimatorState.initial(n, policy.Z)
        self.capacity = Fraction(m, policy.b)
        self.bits_total = 0
        self.phase_log: list[PhaseRecord] = []
        self.roster: Optional[_Roster] = None
        self._pending: list[list[int]] = [[] for _ in range(n)]
        self._roster_grants: list[tuple[int, tuple[int, ...]]] = []
        self._resolve()

    def _resolve(self) -> None:
        profiles = self.policy.cost_builder(self.estimator.p_hat)
        self.alpha_hat = conc_min(profiles, self.capacity).rates
        self.slot_plan = SlotPlan(tuple(self.alpha_hat), self.m)

    def _log(self, tau: int, exploring: bool) -> None:
        if self.policy.log_phases:
            self.phase_log.append(
                PhaseRecord(
                    tau,
                    exploring,
                    self.estimator.p_hat,
                    tuple(self.alpha_hat),
                    self.bits_total,
                )
            )

    def allocate(self, t: int, H: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        plan = self.plan
        tau = plan.phase_of(t)
        e = plan.epoch_in_phase(t)
        self._roster_grants = []
        if e == 1:
            self._log(tau, is_exploration_phase(tau, self.policy.r))
        if is_exploration_phase(tau, self.policy.r) and e <= plan.explore_len:
            if e == 1:
                self.roster = _Roster(self.n, self.m, self.policy.b, self.policy.w)
            assert self.roster is not None
            served, grants = explore_allocate(self.roster, H)
            self._roster_grants = grants
            return served
        # phase tail or exploitation: allocate with the latest estimate
        return allocate_channels(self.slot_plan, H, rng, n=self.n)

    def observe(self, t: int, F: np.ndarray) -> None:
        plan = self.plan
        tau = plan.phase_of(t)
        e = plan.epoch_in_phase(t)
        for u, _ in self._roster_grants:
            # served exactly one frame: buffer grows iff no frame was consumed
            self._pending[u].append(0 if F[u] else 1)
            self.bits_total += 1
        if is_exploration_phase(tau, self.policy.r) and e == plan.phase_len:
            self.estimator = update_estimates(
                self.estimator, self._pending, self.policy.Z
            )
            self._pending = [[] for _ in range(self.n)]
            self.roster = None
            self._resolve()


def ifestival_step(
    state: _IFestivalState, t: int, H: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Functional wrapper over the stateful scheduler step."""
    return state.allocate(t, H, rng)
