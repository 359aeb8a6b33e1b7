"""Feedback-free rate allocation under distributional rate knowledge.

With linear dissatisfaction and a known CDF per user, the expected-cost
program is convex and its KKT multiplier acts as a water-filling threshold:
users whose weight falls below it get nothing, users above it are served at
the quantile matching the threshold, and at most one boundary user absorbs
the leftover.  Uniform CDFs admit a closed-form threshold; any strictly
increasing CDF works through bisection.

Inputs given as Fractions are solved in exact arithmetic on the closed-form
path; float inputs stay float.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "UniformCdf",
    "GenericCdf",
    "NobackUser",
    "NobackInstance",
    "NobackSolution",
    "noback_solve",
    "lambda_uniform",
    "lambda_bisect",
    "expected_cost",
    "expected_user_cost",
    "projected_subgradient",
    "kkt_residuals",
]

Number = Union[Fraction, float, int]

BISECT_TOL = 1e-9
BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class UniformCdf:
    """Uniform distribution on [a, b]: G(x) = (x-a)/(b-a)."""

    a: Number
    b: Number

    def cdf(self, x: Number) -> Number:
        if x <= self.a:
            return 0 * x
        if x >= self.b:
            return 1
        return (x - self.a) / (self.b - self.a)

    def inverse(self, y: Number) -> Number:
        return self.a + y * (self.b - self.a)

    def mean(self) -> Number:
        return (self.a + self.b) / 2


@dataclass(frozen=True)
class GenericCdf:
    """Strictly increasing CDF on [a, b] given by callables."""

    a: float
    b: float
    cdf_fn: Callable[[float], float]
    inverse_fn: Callable[[float], float]

    def cdf(self, x: float) -> float:
        if x <= self.a:
            return 0.0
        if x >= self.b:
            return 1.0
        return self.cdf_fn(float(x))

    def inverse(self, y: float) -> float:
        return self.inverse_fn(float(y))


Cdf = Union[UniformCdf, GenericCdf]


@dataclass(frozen=True)
class NobackUser:
    weight: Number
    cdf: Cdf

    @property
    def a(self) -> Number:
        return self.cdf.a

    @property
    def b(self) -> Number:
        return self.cdf.b


@dataclass(frozen=True)
class NobackInstance:
    users: tuple[NobackUser, ...]
    capacity: Number

    def __post_init__(self) -> None:
        if not self.users:
            raise ValueError("need at least one user")
        for u in self.users:
            if u.weight <= 0:
                raise ValueError("weights must be positive")
            if not 0 <= u.a < u.b <= 1:
                raise ValueError(f"support [{u.a}, {u.b}] invalid")


@dataclass(frozen=True)
class NobackSolution:
    """Rates in the original user order plus the threshold that produced them."""

    alpha: tuple[Number, ...]
    lam: Number
    threshold_index: int  # position of l in the weight-sorted order, 0-based


def _sorted_order(instance: NobackInstance) -> list[int]:
    """Indices sorted by ascending weight; exact ties are perturbed."""
    order = sorted(range(len(instance.users)), key=lambda i: instance.users[i].weight)
    return order


def _deduplicate_weights(instance: NobackInstance) -> NobackInstance:
    weights = [u.weight for u in instance.users]
    if len(set(weights)) == len(weights):
        return instance
    warnings.warn(
        "duplicate weights perturbed by index-scaled 1e-12 to restore a "
        "strict threshold order",
        stacklevel=3,
    )
    seen: dict = {}
    users = list(instance.users)
    for rank, i in enumerate(sorted(range(len(users)), key=lambda i: users[i].weight)):
        w = users[i].weight
        if w in seen:
            bump = Fraction(rank, 10**12) if isinstance(w, Fraction) else rank * 1e-12
            users[i] = replace(users[i], weight=w + bump)
        seen[w] = i
    return replace(instance, users=tuple(users))


def lambda_uniform(instance: NobackInstance, l: int) -> Number:
    """Closed-form threshold when all CDFs are uniform.

    ``l`` indexes the weight-sorted order (0-based): users from l upward are
    candidates for positive rate.
    """
    order = _sorted_order(instance)
    tail = [instance.users[i] for i in order[l:]]
    if not all(isinstance(u.cdf, UniformCdf) for u in tail):
        raise ValueError("closed form requires uniform CDFs")
    num = sum(u.b for u in tail) - instance.capacity
    den = sum((u.b - u.a) / u.weight for u in tail)
    return num / den


def lambda_bisect(instance: NobackInstance, l: int, tol: float = BISECT_TOL) -> float:
    """Solve sum of tail quantiles == capacity for the threshold by bisection.

    The tail sum is decreasing in the threshold, so plain bisection on
    (0, w_l] converges; failure to bracket raises.
    """
    order = _sorted_order(instance)
    tail = [instance.users[i] for i in order[l:]]
    w_l = float(tail[0].weight)
    cap = float(instance.capacity)

    def tail_sum(lam: float) -> float:
        return sum(float(u.cdf.inverse(1.0 - lam / float(u.weight))) for u in tail)

    hi = w_l
    s_hi = tail_sum(hi)
    if s_hi > cap + tol:
        raise ValueError("no root: tail sum at w_l exceeds capacity")
    if abs(s_hi - cap) <= tol:
        return hi
    lo = 0.0
    s_lo = sum(float(u.b) for u in tail)  # limit as lam -> 0+
    if s_lo < cap - tol:
        raise ValueError("no root: total support mass below capacity")
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        s = tail_sum(mid)
        if abs(s - cap) <= tol:
            return mid
        if s > cap:
            lo = mid
        else:
            hi = mid
    raise ArithmeticError(f"bisection failed to reach tolerance {tol}")


def noback_solve(
    instance: NobackInstance,
    tol: float = BISECT_TOL,
    counter: Optional[list] = None,
) -> NobackSolution:
    """Optimal rates for the expected linear pause cost.

    Follows the threshold search: find the first l (by ascending weight) whose
    tail can be served within capacity at threshold w_l, solve for the exact
    threshold, and fall back to the boundary user when the threshold dips to
    or below the next weight down.  ``counter``, when given, accumulates the
    number of quantile evaluations (one list cell).
    """
    instance = _deduplicate_weights(instance)

    def count(k: int) -> None:
        if counter is not None:
            counter[0] += k

    n = len(instance.users)
    order = _sorted_order(instance)
    users = [instance.users[i] for i in order]
    cap = instance.capacity

    total_b = sum(u.b for u in users)
    if total_b <= cap:
        alpha_sorted: list[Number] = [u.b for u in users]
        lam: Number = 0
        l = 0
    else:
        all_uniform = all(isinstance(u.cdf, UniformCdf) for u in users)
        l = None
        for cand in range(n):
            w_l = users[cand].weight
            count(n - cand)
            s = sum(
                u.cdf.inverse(1 - w_l / u.weight if u.weight != w_l else 0 * w_l)
                for u in users[cand:]
            )
            if s <= cap:
                l = cand
                break
        if l is None:
            # capacity below even the top user's support bottom; the boundary
            # branch below hands everything to the top-weight user
            l = n

        tail_b = sum((u.b for u in users[l:]), 0 * cap)
        if tail_b < cap:
            lam = None  # no root: capacity spills past the tail at any positive lam
        elif all_uniform:
            lam = lambda_uniform(instance, l)
            if lam <= 0:
                lam = None
        else:
            try:
                lam = lambda_bisect(instance, l, tol)
            except ValueError:
                lam = None

        w_prev = users[l - 1].weight if l > 0 else 0
        alpha_sorted = [0 * cap] * n
        count(n - l)
        if lam is not None and lam > w_prev:
            for j in range(l, n):
                u = users[j]
                alpha_sorted[j] = u.cdf.inverse(1 - lam / u.weight)
        else:
            # boundary user l-1 absorbs the leftover at threshold w_{l-1}
            lam = w_prev
            for j in range(l, n):
                u = users[j]
                alpha_sorted[j] = u.cdf.inverse(1 - lam / u.weight)
            leftover = cap - sum(alpha_sorted[l:], 0 * cap)
            alpha_sorted[l - 1] = leftover
            l = l - 1

    alpha = [0 * cap] * n
    for pos, i in enumerate(order):
        alpha[i] = alpha_sorted[pos]
    return NobackSolution(tuple(alpha), lam, l)


def _count_inverse_evals(instance: NobackInstance) -> int:
    """Quantile evaluations one solve performs (complexity instrumentation)."""
    counter = [0]
    noback_solve(instance, counter=counter)
    return counter[0]


def expected_user_cost(user: NobackUser, alpha: Number) -> Number:
    """E[w (p - alpha)^+] for one user; closed form for uniform CDFs."""
    if alpha < 0 or alpha > 1:
        raise ValueError(f"rate {alpha} outside [0, 1]")
    w, cdf = user.weight, user.cdf
    if isinstance(cdf, UniformCdf):
        a, b = cdf.a, cdf.b
        if alpha >= b:
            return 0 * w
        if alpha <= a:
            return w * (cdf.mean() - alpha)
        return w * (b - alpha) ** 2 / (2 * (b - a))
    # generic: numerical integration of w * (1 - G(x)) over [alpha, b]
    lo, hi = float(alpha), float(cdf.b)
    if lo >= hi:
        return 0.0
    xs = np.linspace(lo, hi, 2001)
    ys = np.array([1.0 - float(cdf.cdf(x)) for x in xs])
    return float(user.weight) * float(np.trapezoid(ys, xs))


def expected_cost(instance: NobackInstance, alpha: Sequence[Number]) -> Number:
    """Total expected pause cost of a rate vector."""
    if len(alpha) != len(instance.users):
        raise ValueError("rate vector length mismatch")
    return sum(expected_user_cost(u, a) for u, a in zip(instance.users, alpha))


def projected_subgradient(
    instance: NobackInstance,
    iters: int = 4000,
    seed: int = 0,
) -> np.ndarray:
    """Independent numerical check: projected (sub)gradient descent on the
    expected-cost objective with Nesterov momentum.

    The objective is smooth with Lipschitz gradient for uniform CDFs, so this
    converges well past the comparison tolerance used in tests.
    """
    users = instance.users
    n = len(users)
    a = np.array([float(u.a) for u in users])
    b = np.array([float(u.b) for u in users])
    w = np.array([float(u.weight) for u in users])
    cap = float(instance.capacity)
    all_uniform = all(isinstance(u.cdf, UniformCdf) for u in users)

    if all_uniform:

        def grad(x: np.ndarray) -> np.ndarray:
            return -w * (1.0 - np.clip((x - a) / (b - a), 0.0, 1.0))

    else:

        def grad(x: np.ndarray) -> np.ndarray:
            g = np.empty(n)
            for i, u in enumerate(users):
                g[i] = -w[i] * (1.0 - float(u.cdf.cdf(x[i])))
            return g

    def project(x: np.ndarray) -> np.ndarray:
        y = np.clip(x, 0.0, b)
        if y.sum() <= cap + 1e-15:
            return y
        # exact water-level projection onto the capped simplex: the map
        # tau -> sum(clip(x - tau, 0, b)) is piecewise linear decreasing with
        # breakpoints at {x_i} and {x_i - b_i}
        bps = np.unique(np.concatenate([x, x - b]))
        lo, hi = 0, len(bps) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if np.clip(x - bps[mid], 0.0, b).sum() > cap:
                lo = mid
            else:
                hi = mid
        mid_tau = 0.5 * (bps[lo] + bps[hi])
        z = x - mid_tau
        active = (z > 0) & (z < b)
        if not active.any():
            tau = float(bps[hi])
        else:
            saturated = b[z >= b].sum()
            tau = (x[active].sum() - (cap - saturated)) / active.sum()
        return np.clip(x - tau, 0.0, b)

    lip = float(np.max(w / np.maximum(b - a, 1e-12)))
    step = 1.0 / max(lip, 1e-12)
    rng = np.random.default_rng(seed)
    x = project(rng.uniform(0.0, 1.0, n) * b)
    y = x.copy()
    t_prev = 1.0
    for _ in range(iters):
        x_new = project(y - step * grad(y))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev**2))
        y = x_new + ((t_prev - 1.0) / t_new) * (x_new - x)
        x, t_prev = x_new, t_new
    return project(x)


def kkt_residuals(instance: NobackInstance, solution: NobackSolution) -> dict:
    """Certificate quantities for an optimal solution.

    interior: max |lam - w_i (1 - G_i(alpha_i))| over users strictly inside
    their support; zero_slack: max(w_i - lam) over zero-rate users (should be
    <= 0 up to tolerance); monotone: True iff no served user has a smaller
    weight than some starved user.
    """
    lam = float(solution.lam)
    interior = 0.0
    zero_slack = -np.inf
    served_w: list[float] = []
    zero_w: list[float] = []
    for u, alpha in zip(instance.users, solution.alpha):
        af = float(alpha)
        if af == 0.0:
            zero_w.append(float(u.weight))
            zero_slack = max(zero_slack, float(u.weight) - lam)
        else:
            served_w.append(float(u.weight))
        if float(u.a) < af < float(u.b):
            interior = max(
                interior, abs(lam - float(u.weight) * (1.0 - float(u.cdf.cdf(alpha))))
            )
    monotone = not zero_w or not served_w or max(zero_w) <= min(served_w) + 1e-15
    return {"interior": interior, "zero_slack": zero_slack, "monotone": monotone}
