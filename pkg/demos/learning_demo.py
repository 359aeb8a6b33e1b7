"""Learning unknown consumption rates from one-bit buffer feedback.

Runs the phased learn-and-allocate scheduler on a small no-fading system and
prints the per-phase log: estimates sharpen at exploration phases (indices
1, 2, 4, 8, ...) and the planned rates converge to the known-rates optimum.
"""

from fractions import Fraction

import numpy as np

from streamalloc import (
    GridProb,
    IFestival,
    PowerLawCost,
    SystemConfig,
    UserProfile,
    conc_min,
    powerlaw_cost_builder,
    run_sim,
)

users = [
    UserProfile(i, GridProb(z, 20), PowerLawCost(0.5, Fraction(z, 20)))
    for i, z in enumerate((12, 11, 10, 9))
]
target = conc_min(users, Fraction(2))
print("true rates:     ", [str(u.p) for u in users])
print("optimal rates:  ", [str(a) for a in target.rates])
print("benchmark cost: ", round(target.cost, 4))
print()

policy = IFestival(
    w=28, r=2, Z=20, cost_builder=powerlaw_cost_builder(0.5), log_phases=True
)
config = SystemConfig(n=4, m=2, h_on=1.0)

# drive the scheduler directly so the phase log is accessible
state = policy.start(4, 2)
rng = np.random.default_rng(3)
T = state.plan.phase_len * 70
F = np.stack([(rng.random(T) < float(u.p)).astype(np.int8) for u in users])
ones = np.ones((4, 2), dtype=bool)
for t in range(1, T + 1):
    state.allocate(t, ones, rng)
    state.observe(t, F[:, t - 1])

print("phase  exploring  estimates                     planned rates          bits")
for rec in state.phase_log:
    if rec.exploring or rec.tau == state.plan.phase_of(T):
        ps = ",".join(str(p) for p in rec.p_hat)
        als = ",".join(str(a) for a in rec.alpha_hat)
        print(f"{rec.tau:5d}  {str(rec.exploring):9s}  {ps:28s}  {als:20s}  {rec.bits_total}")

trace = run_sim(policy, users, config, 100_000, seed=5)
print()
print("pause counts over 100k epochs:", trace.pauses)
print("feedback bits used:           ", trace.feedback_bits_at[-1])
print("final cost vs benchmark:      ",
      round(trace.cost_at[-1], 4), "vs", round(target.cost, 4))
