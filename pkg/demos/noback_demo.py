"""Feedback-free allocation from rate distributions only.

Two users with uniform rate uncertainty and linear dissatisfaction: the
threshold solver returns the exact optimum, which the closed form, the
bisection path, and a projected-gradient oracle all confirm.
"""

from fractions import Fraction

from streamalloc import (
    NobackInstance,
    NobackUser,
    UniformCdf,
    expected_cost,
    kkt_residuals,
    lambda_bisect,
    lambda_uniform,
    noback_solve,
    projected_subgradient,
)

instance = NobackInstance(
    (
        NobackUser(Fraction(1), UniformCdf(Fraction(1, 5), Fraction(3, 5))),
        NobackUser(Fraction(2), UniformCdf(Fraction(1, 5), Fraction(3, 5))),
    ),
    capacity=Fraction(1, 2),
)

solution = noback_solve(instance)
print("rates:", [str(a) for a in solution.alpha])
print("threshold:", solution.lam)
print("expected cost:", float(expected_cost(instance, solution.alpha)))
print("KKT certificate:", kkt_residuals(instance, solution))

print("closed-form threshold at l=1:", lambda_uniform(instance, 1))
print("bisection threshold at l=1:  ", lambda_bisect(instance, 1))

oracle = projected_subgradient(instance, iters=5000)
print("gradient-descent rates:", [round(float(x), 6) for x in oracle])
print("gradient-descent cost: ",
      float(expected_cost(instance, [float(x) for x in oracle])))
