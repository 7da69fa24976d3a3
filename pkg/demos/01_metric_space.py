# Tour of the base layer: finite probability spaces, nonnegative random
# variables, and the truncated metric that makes convergence-in-probability
# a plain metric limit.

import numpy as np

from cckit import (
    ProbSpace, RandVar, expectation, inner, norm, metric_d,
    phi, phi_midpoint_gap, epsilon_of_M,
)

space = ProbSpace(["rain", "sun", "snow"], [0.2, 0.7, 0.1])
f = RandVar(space, [3.0, 1.0, 8.0])
g = RandVar(space, [2.5, 1.5, 0.0])

print("space:", space)
print("E[f] =", expectation(f))
print("<f,g> =", inner(f, g), "  ||f|| =", norm(f))

# the metric truncates pointwise differences at 1, so far-apart values on a
# small atom contribute at most that atom's mass
print("d(f,g) =", metric_d(f, g))
big = RandVar(space, [3.0, 1.0, 10_000.0])
print("d(f, f + huge spike on the 0.1 atom) =", metric_d(f, big))

# phi(x) = 1 - exp(-x) is the clamp behind everything downstream: bounded,
# concave, strictly increasing
xs = np.array([0.0, 0.5, 1.0, 2.0, 10.0])
print("\nphi at", xs, "->", np.round(phi(xs), 6))

# strict concavity is quantitative once the two points are genuinely apart
# and not too far out: the midpoint gap has a closed-form positive floor
for M in (1, 2, 5):
    eps = epsilon_of_M(M)
    # the binding pair sits at (M, M + 1/M)
    corner = phi_midpoint_gap(M, M + 1.0 / M)
    print(f"M={M}:  floor {eps:.12f}   gap at the corner {corner:.12f}")

# random admissible pairs never dip under the floor
rng = np.random.default_rng(0)
M = 2.0
lo = rng.uniform(0.0, M, 5000)
hi = lo + 1.0 / M + rng.exponential(1.0, 5000)
gaps = np.array([phi_midpoint_gap(a, b) for a, b in zip(lo, hi)])
print(f"\n5000 admissible pairs at M={M}: min gap {gaps.min():.6f} "
      f">= floor {epsilon_of_M(M):.6f}")
