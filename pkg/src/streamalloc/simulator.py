"""Discrete-epoch system simulation: fading, consumption, buffers, policies.

Buffers are counted in whole frames.  A pause happens in an epoch where a
frame is due but the buffer plus same-epoch arrivals hold less than one
frame; arrivals within the epoch count toward playing that epoch's frame.

Two engines produce traces: a sequential epoch loop (any fading), and a
vectorized engine used when matching is trivial (no fading, or a single
user/channel), which resolves the whole buffer recursion with prefix scans.
The engines consume random draws in different orders, so traces are
reproducible per engine, not across engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .allocator import SlotPlan, build_bipartite, max_matching
from .learner import IFestival, _IFestivalState, is_exploration_phase
from .model import SystemConfig, UserProfile, eval_cost

__all__ = [
    "IIDConsumption",
    "MarkovConsumption",
    "consumption_processes",
    "step_buffer",
    "sample_channels",
    "SimTrace",
    "StaticAllocate",
    "RoundRobin",
    "default_checkpoints",
    "run_sim",
    "regret_v",
]


@dataclass(frozen=True)
class IIDConsumption:
    """Frame demands drawn independently each epoch."""

    p: Union[Fraction, float]

    def sample(self, T: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(T) < float(self.p)).astype(np.int8)


@dataclass(frozen=True)
class MarkovConsumption:
    """Two-state chain: keep the previous demand with the stickiness
    probability, otherwise redraw fresh.  Stationary mean is exactly p and
    the chain starts stationary."""

    p: Union[Fraction, float]
    stickiness: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 <= self.stickiness < 1.0:
            raise ValueError("stickiness must lie in [0, 1)")

    def sample(self, T: int, rng: np.random.Generator) -> np.ndarray:
        fresh = (rng.random(T) < float(self.p)).astype(np.int8)
        stay = rng.random(T) < self.stickiness
        stay[0] = False
        idx = np.arange(T)
        idx[stay] = 0
        np.maximum.accumulate(idx, out=idx)  # index of last fresh draw
        return fresh[idx]


Consumption = Union[IIDConsumption, MarkovConsumption]


def consumption_processes(
    users: Sequence[UserProfile], kind: str = "iid", stickiness: float = 0.9
) -> list[Consumption]:
    if kind == "iid":
        return [IIDConsumption(u.p.as_fraction) for u in users]
    if kind == "markov":
        return [MarkovConsumption(u.p.as_fraction, stickiness) for u in users]
    raise ValueError(f"unknown consumption kind {kind!r}")


def step_buffer(x: int, served_frames: int, f: int) -> tuple[int, bool]:
    """One buffer transition; returns the new level and the pause indicator."""
    if served_frames < 0:
        raise ValueError("service cannot be negative")
    if f not in (0, 1):
        raise ValueError("frame demand must be 0 or 1")
    paused = f == 1 and x + served_frames < 1
    return max(x + served_frames - f, 0), paused


def sample_channels(n, m=None, h=None, rng=None) -> np.ndarray:
    """One epoch of ON/OFF channel states, independent per (user, channel).

    Accepts either (config, rng) or (n, m, h, rng).
    """
    if isinstance(n, SystemConfig):
        config, rng = n, m if rng is None else rng
        n, m, h = config.n, config.m, config.h_on
    hmat = np.broadcast_to(np.asarray(h, dtype=float), (n, m))
    return rng.random((n, m)) < hmat


@dataclass
class SimTrace:
    """Per-run metrics sampled at log-spaced checkpoints."""

    checkpoints: np.ndarray  # (K,)
    pauses_at: np.ndarray  # (n, K) cumulative pause counts
    kappa_at: np.ndarray  # (n, K) empirical pause frequency
    cost_at: np.ndarray  # (K,) total cost at each checkpoint
    pauses: np.ndarray  # (n,) final pause counts
    served_total: np.ndarray  # (n,) frames delivered
    feedback_bits_at: np.ndarray  # (K,) cumulative one-bit feedback uses


class StaticAllocate:
    """Fixed-rate channel allocation, re-drawn every epoch."""

    def __init__(self, alpha: Sequence[Union[Fraction, float]]):
        self.alpha = tuple(alpha)

    def start(self, n: int, m: int) -> "_StaticState":
        return _StaticState(self, n, m)


class _StaticState:
    def __init__(self, policy: StaticAllocate, n: int, m: int):
        self.n = n
        self.m = m
        self.plan = SlotPlan(policy.alpha, m)
        self.bits_total = 0

    def allocate(self, t: int, H: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        slots = self.plan.draw(rng)
        adj = build_bipartite(slots, H)
        served = np.zeros(self.n, dtype=np.int64)
        for i, _ in max_matching(adj, self.m):
            served[int(slots[i])] += 1
        return served

    def observe(self, t: int, F: np.ndarray) -> None:
        pass


class RoundRobin:
    """Serve the next m users one channel each, cycling through user order."""

    def start(self, n: int, m: int) -> "_RRState":
        return _RRState(n, m)


class _RRState:
    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m
        self.cursor = 0
        self.bits_total = 0

    def allocate(self, t: int, H: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        served = np.zeros(self.n, dtype=np.int64)
        used = np.zeros(self.m, dtype=bool)
        for k in range(min(self.m, self.n)):
            u = (self.cursor + k) % self.n
            for j in range(self.m):
                if H[u, j] and not used[j]:
                    used[j] = True
                    served[u] += 1
                    break
        self.cursor = (self.cursor + min(self.m, self.n)) % self.n
        return served

    def observe(self, t: int, F: np.ndarray) -> None:
        pass


def default_checkpoints(T: int) -> np.ndarray:
    """Half-decade grid {100, 316, 1000, ...} capped at and including T."""
    pts = []
    j = 4
    while True:
        v = int(round(10 ** (j / 2)))
        if v >= T:
            break
        if v >= 100:
            pts.append(v)
        j += 1
    pts.append(T)
    return np.array(sorted(set(pts)), dtype=np.int64)


def _lindley_pauses(served: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Vector resolution of the reflected buffer recursion.

    served, F: (n, T) integer arrays.  Returns the (n, T) pause mask.
    """
    a = served.astype(np.int32) - F.astype(np.int32)
    A = np.cumsum(a, axis=1, dtype=np.int64)
    floor = np.minimum(np.minimum.accumulate(A, axis=1), 0)
    X = A - floor
    Xprev = np.empty_like(X)
    Xprev[:, 0] = 0
    Xprev[:, 1:] = X[:, :-1]
    return (F == 1) & (Xprev + served < 1)


def _trace_from_matrices(
    users: Sequence[UserProfile],
    served: np.ndarray,
    F: np.ndarray,
    checkpoints: np.ndarray,
    bits_cum: Optional[np.ndarray] = None,
) -> SimTrace:
    n, T = F.shape
    paused = _lindley_pauses(served, F)
    pause_cum = np.cumsum(paused, axis=1, dtype=np.int64)
    idx = checkpoints - 1
    pauses_at = pause_cum[:, idx]
    kappa_at = pauses_at / checkpoints[None, :]
    cost_at = np.zeros(len(checkpoints))
    for k in range(len(checkpoints)):
        cost_at[k] = sum(
            eval_cost(u.cost, u.p.as_fraction, min(kappa_at[i, k], u.p.as_fraction))
            for i, u in enumerate(users)
        )
    bits_at = (
        bits_cum[idx] if bits_cum is not None else np.zeros(len(checkpoints), np.int64)
    )
    return SimTrace(
        checkpoints=checkpoints,
        pauses_at=pauses_at,
        kappa_at=kappa_at,
        cost_at=cost_at,
        pauses=pause_cum[:, -1],
        served_total=served.sum(axis=1),
        feedback_bits_at=bits_at,
    )


def _run_sequential(
    state,
    users: Sequence[UserProfile],
    config: SystemConfig,
    T: int,
    procs: Sequence[Consumption],
    checkpoints: np.ndarray,
    rng: np.random.Generator,
) -> SimTrace:
    n, m = config.n, config.m
    F = np.stack([proc.sample(T, rng) for proc in procs])
    hmat = np.broadcast_to(np.asarray(config.h_on, dtype=float), (n, m))
    all_on = bool(np.all(hmat == 1.0))
    ones = np.ones((n, m), dtype=bool)

    X = np.zeros(n, dtype=np.int64)
    pauses = np.zeros(n, dtype=np.int64)
    served_total = np.zeros(n, dtype=np.int64)
    K = len(checkpoints)
    pauses_at = np.zeros((n, K), dtype=np.int64)
    bits_at = np.zeros(K, dtype=np.int64)
    next_ck = 0

    for t in range(1, T + 1):
        H = ones if all_on else rng.random((n, m)) < hmat
        served = state.allocate(t, H, rng)
        f = F[:, t - 1]
        pauses += (f == 1) & (X + served < 1)
        X = np.maximum(X + served - f, 0)
        served_total += served
        state.observe(t, f)
        if t == checkpoints[next_ck]:
            pauses_at[:, next_ck] = pauses
            bits_at[next_ck] = state.bits_total
            next_ck += 1

    kappa_at = pauses_at / checkpoints[None, :]
    cost_at = np.zeros(K)
    for k in range(K):
        cost_at[k] = sum(
            eval_cost(u.cost, u.p.as_fraction, min(kappa_at[i, k], u.p.as_fraction))
            for i, u in enumerate(users)
        )
    return SimTrace(
        checkpoints=checkpoints,
        pauses_at=pauses_at,
        kappa_at=kappa_at,
        cost_at=cost_at,
        pauses=pauses,
        served_total=served_total,
        feedback_bits_at=bits_at,
    )


def _static_served_batch(
    plan: SlotPlan, n: int, m: int, hmat: np.ndarray, T: int, rng: np.random.Generator
) -> np.ndarray:
    """Service matrix when matching is trivial (all-ON, or 1x1 system)."""
    served = plan.served_counts_batch(rng, T).T  # (n, T)
    if not np.all(hmat == 1.0):
        # only reachable for n == m == 1
        on = rng.random(T) < float(hmat[0, 0])
        served = served * on[None, :]
    return served


def _run_ifestival_fast(
    state: _IFestivalState,
    users: Sequence[UserProfile],
    config: SystemConfig,
    T: int,
    procs: Sequence[Consumption],
    checkpoints: np.ndarray,
    rng: np.random.Generator,
) -> SimTrace:
    """No-fading engine: exploration phases run epoch-by-epoch (they are
    deterministic), exploitation stretches are batch-drawn."""
    n, m = config.n, config.m
    F = np.stack([proc.sample(T, rng) for proc in procs])
    served = np.zeros((n, T), dtype=np.int16)
    bits_cum = np.zeros(T, dtype=np.int64)
    ones = np.ones((n, m), dtype=bool)
    plan = state.plan

    t = 1
    while t <= T:
        tau = plan.phase_of(t)
        if is_exploration_phase(tau, state.policy.r):
            end = min(tau * plan.phase_len, T)
            while t <= end:
                served[:, t - 1] = state.allocate(t, ones, rng)
                state.observe(t, F[:, t - 1])
                bits_cum[t - 1] = state.bits_total
                t += 1
        else:
            # run through the last phase before the next exploration phase
            next_exp = 1
            while next_exp <= tau:
                next_exp *= state.policy.r
            end = min((next_exp - 1) * plan.phase_len, T)
            block = end - t + 1
            served[:, t - 1 : end] = state.slot_plan.served_counts_batch(rng, block).T
            bits_cum[t - 1 : end] = state.bits_total
            t = end + 1

    return _trace_from_matrices(users, served, F, checkpoints, bits_cum)


def run_sim(
    policy,
    users: Sequence[UserProfile],
    config: SystemConfig,
    T: int,
    consumption: Union[str, Sequence[Consumption]] = "iid",
    stickiness: float = 0.9,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    checkpoints: Optional[Sequence[int]] = None,
    engine: str = "auto",
) -> SimTrace:
    """Simulate T epochs of a policy on one system instance.

    The trace is a deterministic function of (policy, config, T, consumption,
    seed, engine).
    """
    if config.b != 1:
        raise ValueError("the simulator is restricted to unit frame multiplier")
    if T < 1:
        raise ValueError("horizon must be at least one epoch")
    n, m = config.n, config.m
    if len(users) != n:
        raise ValueError("user count mismatch")
    if rng is None:
        rng = np.random.default_rng(config.seed if seed is None else seed)
    procs = (
        consumption_processes(users, consumption, stickiness)
        if isinstance(consumption, str)
        else list(consumption)
    )
    cks = (
        default_checkpoints(T)
        if checkpoints is None
        else np.array(sorted(set(int(c) for c in checkpoints)), dtype=np.int64)
    )
    if cks[-1] != T or cks[0] < 1:
        raise ValueError("checkpoints must end at T and start at >= 1")

    hmat = np.broadcast_to(np.asarray(config.h_on, dtype=float), (n, m))
    trivial_matching = bool(np.all(hmat == 1.0)) or (n == 1 and m == 1)
    use_fast = engine == "fast" or (engine == "auto" and trivial_matching)
    if engine == "fast" and not trivial_matching:
        raise ValueError("fast engine requires trivial matching")

    state = policy.start(n, m)
    if use_fast and isinstance(policy, StaticAllocate):
        F = np.stack([proc.sample(T, rng) for proc in procs])
        served = _static_served_batch(state.plan, n, m, hmat, T, rng)
        return _trace_from_matrices(users, served, F, cks)
    if use_fast and isinstance(policy, IFestival) and np.all(hmat == 1.0):
        return _run_ifestival_fast(state, users, config, T, procs, cks, rng)
    if use_fast and isinstance(policy, RoundRobin) and np.all(hmat == 1.0):
        F = np.stack([proc.sample(T, rng) for proc in procs])
        served = np.zeros((n, T), dtype=np.int16)
        k = min(m, n)
        cursor = (np.arange(T, dtype=np.int64) * k) % n
        for j in range(k):
            rows = (cursor + j) % n
            served[rows, np.arange(T)] += 1
        return _trace_from_matrices(users, served, F, cks)
    return _run_sequential(state, users, config, T, procs, cks, rng)


def regret_v(trace: SimTrace, benchmark: float) -> np.ndarray:
    """Per-checkpoint total cost minus the lower bound."""
    return trace.cost_at - benchmark
