"""Structured-text round trip for instances and solutions.

Line-oriented key/value records; rationals render as ``z/Z`` so files carry
the exact grid values.  Unknown lines are rejected rather than skipped.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

from .model import (
    GridProb,
    LinearCost,
    PowerLawCost,
    TableCost,
    UserProfile,
)
from .optimizer import ConcMinSolution

__all__ = [
    "instance_to_text",
    "instance_from_text",
    "solution_to_text",
    "solution_from_text",
]

_INSTANCE_HEADER = "# streamalloc instance format 1"
_SOLUTION_HEADER = "# streamalloc solution format 1"


def _cost_to_tokens(cost) -> list[str]:
    if isinstance(cost, PowerLawCost):
        return ["powerlaw", repr(cost.theta)]
    if isinstance(cost, LinearCost):
        return ["linear", repr(cost.slope)]
    if isinstance(cost, TableCost):
        pts = ",".join(f"{Fraction(x)}:{Fraction(y)}" for x, y in cost.points)
        return ["table", pts]
    raise TypeError(f"cannot serialize cost {cost!r}")


def _cost_from_tokens(kind: str, arg: str, anchor: Fraction):
    if kind == "powerlaw":
        return PowerLawCost(float(arg), anchor)
    if kind == "linear":
        return LinearCost(float(arg), anchor)
    if kind == "table":
        pts = []
        for pair in arg.split(","):
            x, y = pair.split(":")
            pts.append((float(Fraction(x)), float(Fraction(y))))
        return TableCost(tuple(pts), anchor)
    raise ValueError(f"unknown cost kind {kind!r}")


def instance_to_text(
    users: Sequence[UserProfile], capacity: Optional[Fraction] = None
) -> str:
    Z = users[0].p.Z
    lines = [_INSTANCE_HEADER, f"Z {Z}"]
    if capacity is not None:
        lines.append(f"capacity {Fraction(capacity)}")
    for u in users:
        toks = ["user", str(u.id), "z", str(u.p.z), "cost", *_cost_to_tokens(u.cost)]
        if u.weight is not None:
            toks += ["weight", str(Fraction(u.weight))]
        if u.support is not None:
            toks += ["support", str(Fraction(u.support[0])), str(Fraction(u.support[1]))]
        if u.q_full is not None:
            toks += ["q", str(u.q_full.z)]
        lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def instance_from_text(text: str) -> tuple[list[UserProfile], Optional[Fraction]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _INSTANCE_HEADER:
        raise ValueError("not a streamalloc instance file")
    Z: Optional[int] = None
    capacity: Optional[Fraction] = None
    users: list[UserProfile] = []
    for ln in lines[1:]:
        toks = ln.split()
        if toks[0] == "Z":
            Z = int(toks[1])
        elif toks[0] == "capacity":
            capacity = Fraction(toks[1])
        elif toks[0] == "user":
            if Z is None:
                raise ValueError("Z must precede user records")
            fields = dict()
            uid = int(toks[1])
            i = 2
            while i < len(toks):
                key = toks[i]
                if key == "z":
                    fields["z"] = int(toks[i + 1])
                    i += 2
                elif key == "cost":
                    fields["cost"] = (toks[i + 1], toks[i + 2])
                    i += 3
                elif key == "weight":
                    fields["weight"] = Fraction(toks[i + 1])
                    i += 2
                elif key == "support":
                    fields["support"] = (Fraction(toks[i + 1]), Fraction(toks[i + 2]))
                    i += 3
                elif key == "q":
                    fields["q"] = int(toks[i + 1])
                    i += 2
                else:
                    raise ValueError(f"unknown field {key!r} in user record")
            p = GridProb(fields["z"], Z)
            kind, arg = fields["cost"]
            users.append(
                UserProfile(
                    id=uid,
                    p=p,
                    cost=_cost_from_tokens(kind, arg, p.as_fraction),
                    weight=fields.get("weight"),
                    support=fields.get("support"),
                    q_full=GridProb(fields["q"], Z) if "q" in fields else None,
                )
            )
        else:
            raise ValueError(f"unknown record {toks[0]!r}")
    return users, capacity


def solution_to_text(solution: ConcMinSolution) -> str:
    lines = [_SOLUTION_HEADER, f"cost {solution.cost!r}"]
    if solution.fractional_user is not None:
        lines.append(f"fractional_user {solution.fractional_user}")
    for i, a in enumerate(solution.rates):
        lines.append(f"alpha {i} {a} {float(a)!r}")
    return "\n".join(lines) + "\n"


def solution_from_text(text: str) -> tuple[list[Fraction], float, Optional[int]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _SOLUTION_HEADER:
        raise ValueError("not a streamalloc solution file")
    cost = None
    frac_user = None
    alphas: dict[int, Fraction] = {}
    for ln in lines[1:]:
        toks = ln.split()
        if toks[0] == "cost":
            cost = float(toks[1])
        elif toks[0] == "fractional_user":
            frac_user = int(toks[1])
        elif toks[0] == "alpha":
            alphas[int(toks[1])] = Fraction(toks[2])
        else:
            raise ValueError(f"unknown record {toks[0]!r}")
    if cost is None:
        raise ValueError("solution file lacks a cost record")
    rates = [alphas[i] for i in range(len(alphas))]
    return rates, cost, frac_user
