"""One epoch of channel allocation, step by step.

Shows the slot intervals built from the service rates, a random slot draw,
the bipartite graph against a fading realization, and the resulting matching;
then estimates the long-run per-user service rates by Monte Carlo.
"""

from fractions import Fraction

import numpy as np

from streamalloc import SlotPlan, allocate_channels, build_bipartite, max_matching

alpha = [Fraction(7, 10), Fraction(7, 10), Fraction(3, 5)]
m = 2
plan = SlotPlan(alpha, m)

print("slot intervals (user, mass):")
for j, seg in enumerate(plan.segments):
    print(f"  slot {j}:", [(u, str(w)) for u, w in seg])

rng = np.random.default_rng(7)
slots = plan.draw(rng)
print("drawn slot users:", slots)

H = rng.random((3, m)) < 0.6
print("channel states:\n", H.astype(int))
adj = build_bipartite(slots, H)
print("slot adjacency:", adj)
print("matching:", max_matching(adj, m))

# served counts over many epochs approach the target rates; the shortfall is
# the chance that an epoch offers no feasible matching (a selected user with
# every channel OFF), which dies off geometrically as channels are added
for m_big, h in ((2, 0.6), (8, 0.6)):
    n_big = 5 * m_big // 2
    plan_big = SlotPlan([Fraction(2, 5)] * n_big, m_big)
    epochs = 20_000
    total = np.zeros(n_big)
    for _ in range(epochs):
        H = rng.random((n_big, m_big)) < h
        total += allocate_channels(plan_big, H, rng)
    print(
        f"m={m_big}: target rate 0.4, empirical mean rate "
        f"{(total / epochs).mean():.4f}, all-OFF floor {(1 - h) ** m_big:.2e}"
    )
