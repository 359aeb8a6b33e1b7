"""Per-epoch channel allocation: weighted user selection plus maximum matching.

Service rates are packed into m unit-length slot intervals in user order,
spilling overflow into the next slot, so no user can occupy more than two
slots.  Each epoch one user is drawn per slot with probability equal to its
mass in that slot, giving E[count of user i] equal to its rate exactly; the
drawn slot-users are then matched to ON channels by Hopcroft-Karp.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "VACANT",
    "SlotPlan",
    "select_users",
    "build_bipartite",
    "max_matching",
    "matching_size",
    "allocate_channels",
]

#: sentinel for a slot left empty in an underloaded system
VACANT = -1

_INF = -1  # unreached marker inside Hopcroft-Karp


class SlotPlan:
    """Deterministic partition of service rates into m unit slots.

    Construction is exact (Fractions); the per-epoch draw compares uniforms
    against float-rounded segment boundaries, which perturbs selection
    probabilities by at most one ulp.
    """

    def __init__(self, alpha: Sequence[Union[Fraction, float]], m: int):
        fracs = [Fraction(a) for a in alpha]
        for i, a in enumerate(fracs):
            if a < 0 or a > 1:
                raise ValueError(f"rate of user {i} is {a}, outside [0, 1]")
        total = sum(fracs, Fraction(0))
        if total > m:
            raise ValueError(f"total rate {total} exceeds slot count {m}")

        self.n = len(fracs)
        self.m = m
        self.alpha = tuple(fracs)

        # slot -> list of (user, mass) segments, in fill order
        segments: list[list[tuple[int, Fraction]]] = [[] for _ in range(m)]
        slot = 0
        level = Fraction(0)  # filled mass of current slot
        for user, mass in enumerate(fracs):
            remaining = mass
            while remaining > 0:
                room = 1 - level
                take = min(remaining, room)
                if take > 0:
                    segments[slot].append((user, take))
                remaining -= take
                level += take
                if level == 1 and slot + 1 < m:
                    slot += 1
                    level = Fraction(0)
                elif level == 1:
                    if remaining > 0:
                        raise ValueError("rates overflow the final slot")
                    break
        self.segments = [tuple(seg) for seg in segments]

        counts = np.zeros(self.n, dtype=np.int64)
        for seg in self.segments:
            for user, _ in seg:
                counts[user] += 1
        if self.n and counts.max(initial=0) > 2:
            raise AssertionError("a user may occupy at most two slots")

        self._users = [
            np.array([u for u, _ in seg], dtype=np.int64) for seg in self.segments
        ]
        self._cum = [
            np.cumsum([float(w) for _, w in seg]) for seg in self.segments
        ]

    def slot_masses(self, j: int) -> tuple[tuple[int, Fraction], ...]:
        return self.segments[j]

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One slot-user list; entries are user indices or VACANT."""
        out = np.full(self.m, VACANT, dtype=np.int64)
        u = rng.random(self.m)
        for j in range(self.m):
            cum = self._cum[j]
            if cum.size == 0:
                continue
            k = int(np.searchsorted(cum, u[j], side="right"))
            if k < cum.size:
                out[j] = self._users[j][k]
        return out

    def draw_batch(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """(count, m) slot-user draws in one shot."""
        out = np.full((count, self.m), VACANT, dtype=np.int64)
        u = rng.random((count, self.m))
        for j in range(self.m):
            cum = self._cum[j]
            if cum.size == 0:
                continue
            k = np.searchsorted(cum, u[:, j], side="right")
            hit = k < cum.size
            out[hit, j] = self._users[j][np.minimum(k[hit], cum.size - 1)]
        return out

    def served_counts_batch(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """(count, n) number of slots drawn per user, all slots assumed matched."""
        picks = self.draw_batch(rng, count)
        served = np.zeros((count, self.n), dtype=np.int64)
        rows = np.arange(count)
        for j in range(self.m):
            col = picks[:, j]
            hit = col >= 0
            np.add.at(served, (rows[hit], col[hit]), 1)
        return served


def select_users(
    alpha: Sequence[Union[Fraction, float]], m: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw one slot-user list for the given rates (convenience wrapper)."""
    return SlotPlan(alpha, m).draw(rng)


def build_bipartite(slots: np.ndarray, H: np.ndarray) -> list[Optional[list[int]]]:
    """Adjacency of the slot/channel graph: slot u may use channel j iff the
    channel is ON for the slot's user.  Vacant slots get None."""
    m = H.shape[1]
    adj: list[Optional[list[int]]] = []
    for user in slots:
        if user == VACANT:
            adj.append(None)
        else:
            row = H[int(user)]
            adj.append([j for j in range(m) if row[j]])
    return adj


def max_matching(adj: Sequence[Optional[Sequence[int]]], num_right: int) -> list[tuple[int, int]]:
    """Hopcroft-Karp maximum matching.

    ``adj[i]`` lists the right-vertices reachable from left-vertex i (None
    entries are skipped).  Returns matched (left, right) pairs.
    """
    nl = len(adj)
    pair_l = [-1] * nl
    pair_r = [-1] * num_right
    dist = [0] * nl
    left = [i for i in range(nl) if adj[i]]

    def bfs() -> bool:
        q: deque[int] = deque()
        for i in left:
            if pair_l[i] == -1:
                dist[i] = 0
                q.append(i)
            else:
                dist[i] = _INF
        found = False
        while q:
            i = q.popleft()
            for j in adj[i]:  # type: ignore[union-attr]
                k = pair_r[j]
                if k == -1:
                    found = True
                elif dist[k] == _INF:
                    dist[k] = dist[i] + 1
                    q.append(k)
        return found

    def dfs(i: int) -> bool:
        for j in adj[i]:  # type: ignore[union-attr]
            k = pair_r[j]
            if k == -1 or (dist[k] == dist[i] + 1 and dfs(k)):
                pair_l[i] = j
                pair_r[j] = i
                return True
        dist[i] = _INF
        return False

    while bfs():
        for i in left:
            if pair_l[i] == -1:
                dfs(i)

    return [(i, pair_l[i]) for i in left if pair_l[i] != -1]


def matching_size(adj: Sequence[Optional[Sequence[int]]], num_right: int) -> int:
    return len(max_matching(adj, num_right))


def allocate_channels(
    plan: Union[SlotPlan, Sequence],
    H: np.ndarray,
    rng: np.random.Generator,
    n: Optional[int] = None,
) -> np.ndarray:
    """Run one epoch of selection + matching; unmatched slots stay idle.

    Returns the number of channels (frames, at unit frame multiplier) granted
    to each user this epoch.
    """
    if not isinstance(plan, SlotPlan):
        plan = SlotPlan(plan, H.shape[1])
    slots = plan.draw(rng)
    adj = build_bipartite(slots, H)
    pairs = max_matching(adj, H.shape[1])
    served = np.zeros(n if n is not None else plan.n, dtype=np.int64)
    for i, _ in pairs:
        served[int(slots[i])] += 1
    return served
