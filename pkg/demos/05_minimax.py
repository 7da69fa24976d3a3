# Concave-convex payoffs on compact strategy sets: solving for the saddle,
# verifying it, and re-deriving it through the covering-family route.

import numpy as np

from cckit import (
    ProbSpace, RandVar, Polytope, BilinearPayoff, SaddleInstance,
    solve_saddle, verify_saddle, build_G_family,
    direct_sum, oplus, split_oplus, KKMInstance, sperner_solve,
)

U2 = ProbSpace.uniform(2)
e0, e1 = RandVar(U2, [1.0, 0.0]), RandVar(U2, [0.0, 1.0])
simplex = Polytope([e0, e1])

# matching pennies. K is the payoff table; strategies are mixtures of the
# two pure indicators, and Phi(f,g) = E[f * (Kg)]
pennies = SaddleInstance(simplex, simplex,
                         BilinearPayoff(U2, [[1.0, -1.0], [-1.0, 1.0]]))
cert = solve_saddle(pennies, tol=1e-9)
print("matching pennies:")
print("  f0 =", np.round(cert.f0.values, 6), " g0 =", np.round(cert.g0.values, 6))
print("  value =", cert.value, " gap =", cert.gap, " via", cert.method)

res = verify_saddle(pennies, cert.f0, cert.g0, tol=1e-8)
print("  verified:", res.ok)

# verification is adversarial -- hand it a wrong pair and it names the side
# and the profitable deviation
res = verify_saddle(pennies, e0, e1, tol=1e-8)
print("  (e0,e1) verified:", res.ok,
      "| worst violation", round(res.max_violation, 6),
      "on side", res.witness["side"])

# a game with an asymmetric table and a unique mixed saddle. hand answer:
# row mix ((d-c), (a-b))/D, col mix ((d-b), (a-c))/D, value (ad-bc)/D
K = np.array([[3.0, -1.0], [-2.0, 1.0]])
inst = SaddleInstance(simplex, simplex, BilinearPayoff(U2, K))
cert = solve_saddle(inst, tol=1e-9)
D = K[0, 0] - K[0, 1] - K[1, 0] + K[1, 1]
print("\nasymmetric game: f0 =", np.round(cert.f0.values, 6),
      "closed form", np.round([(K[1, 1] - K[1, 0]) / D, (K[0, 0] - K[0, 1]) / D], 6))
# the expectation weights each atom by 1/2, so the table value (ad-bc)/D
# shows up halved
print("  value =", round(cert.value, 9), " closed form",
      0.5 * (K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]) / D)

# ---------------------------------------------------------------------
# second route: each corner pair (f_k, g_k) spawns a set
#   G_k = { (f,g) : Phi(f_k, g) - Phi(f, g_k) <= 0 }
# on the direct sum. The family covers the product simplex, so the walk
# finds a point in every G_k -- which is exactly a saddle point.
pairs = [(a, b) for a in (e0, e1) for b in (e0, e1)]
family = build_G_family(inst, pairs)
sum_space = direct_sum(U2)
verts = [oplus(f, g, sum_space) for f, g in pairs]
point, rep = sperner_solve(KKMInstance(verts, family), tol=2e-5)
f_walk, g_walk = split_oplus(point)
print("\nwalk route at q =", rep["q"], ":")
print("  f =", np.round(f_walk.values, 6), " g =", np.round(g_walk.values, 6))
print("  max coordinate difference vs extragradient:",
      f"{max(np.abs(f_walk.values - cert.f0.values).max(), np.abs(g_walk.values - cert.g0.values).max()):.2e}")
