"""Solving the pause-cost benchmark on a small overloaded system.

Builds a four-user instance on the Z=20 rate grid, solves it exactly, checks
the answer against the exhaustive oracle, and shows the quality-degradation
variant for an underloaded system.
"""

from fractions import Fraction

from streamalloc import (
    GridProb,
    PowerLawCost,
    UserProfile,
    benchmark_cost,
    brute_force_alpha,
    conc_min,
    reduce_quality_degradation,
)
from streamalloc.serialize import instance_to_text, solution_to_text

# Four users consuming 0.6, 0.55, 0.5, 0.45 frames per epoch on average, two
# channels: the system is overloaded by 0.1 frames per epoch.
users = [
    UserProfile(i, GridProb(z, 20), PowerLawCost(0.5, Fraction(z, 20)))
    for i, z in enumerate((12, 11, 10, 9))
]
capacity = Fraction(2)

solution = conc_min(users, capacity)
print("instance:")
print(instance_to_text(users, capacity))
print("optimal rates:", [str(a) for a in solution.rates])
print("fractional user:", solution.fractional_user)
print("benchmark cost:", benchmark_cost(users, capacity))

oracle = brute_force_alpha(users, capacity)
print("oracle cost matches:", abs(oracle.cost - solution.cost) < 1e-12)
print()
print(solution_to_text(solution))

# Quality upgrades: once everyone's base rate fits, spare capacity is split
# between the users' quality headrooms by the same solver.
hd = [
    UserProfile(
        i,
        GridProb(4, 20),
        PowerLawCost(0.5, Fraction(4, 20)),
        q_full=GridProb(q, 20),
    )
    for i, q in enumerate((12, 16))
]
upgrade_costs = [
    PowerLawCost(0.5, Fraction(8, 20)),
    PowerLawCost(0.5, Fraction(12, 20)),
]
rates = reduce_quality_degradation(hd, upgrade_costs, m=1, b=1)
print("full service rates with quality headroom:", [str(r) for r in rates])
