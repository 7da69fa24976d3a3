# Extracting a convergent convex combination from a bounded sequence, and
# what happens instead when mass runs away.
#
# The extractor works with tail hulls conv{f_n : n >= D} for D = 1, 2, 4, ...
# At each stage it nearly maximizes E[phi(g)] over the tail hull; the
# running bound u_D never increases, and once successive maximizers stop
# moving (in the truncated metric) we have our limit.

import numpy as np

from cckit import (
    ProbSpace, RandVar, SequenceSpec, Polytope,
    extract, metric_d, Unbounded, combo_mass_bound, WeightVector,
)

space = ProbSpace.uniform(2)

# a sequence that alternates between two profiles forever -- no pointwise
# limit, but the tail hulls all contain the midpoint
terms = [RandVar(space, [1.0, 0.0] if n % 2 else [0.0, 1.0]) for n in range(64)]
seq = SequenceSpec(space, terms, horizon=64)

limit, trace = extract(seq, Polytope(terms), tol=1e-8)
print("alternating sequence -> limit", limit.values)
print("stage log (D, u_D, gamma_D, step):")
for st in trace:
    step = "    --" if st.metric_step is None else f"{st.metric_step:.2e}"
    print(f"  D={st.D:3d}  u={st.u:.8f}  gamma={st.gamma:.8f}  step {step}")

# each accepted iterate names its own convex combination; check one by hand
st = trace[-1]
rebuilt = np.zeros(space.n)
for idx, w in zip(st.indices, st.w.weights):
    rebuilt += w * seq.term(int(idx)).values
print("declared combination rebuilds g_D exactly:",
      np.abs(rebuilt - st.g.values).max())

# ---------------------------------------------------------------------
# now a sequence whose values grow along half the space. No subsequence of
# convex combinations settles down; the extractor refuses with a
# certificate instead of looping.
runaway = [RandVar(space, [float(n + 1), 0.0]) for n in range(64)]
rseq = SequenceSpec(space, runaway, horizon=64)
try:
    extract(rseq, Polytope(runaway), tol=1e-8)
    print("unexpectedly converged?!")
except Unbounded as exc:
    cert = exc.certificate
    print("\nescaping sequence refused; certificate:")
    print("  eps =", cert.eps)
    print("  witness indices:", cert.indices[:8], "...")
    for ib in cert.combo_bound:
        print(f"  mass-bound instance at n={ib['n']}: "
              f"P[g >= {ib['threshold']:.2f}] = {ib['mass']:.4f} "
              f">= eps/2 = {ib['eps'] / 2:.4f}  (holds={ib['holds']})")
        # anyone can re-run the bound from the recorded data
        pts = [rseq.term(int(i)) for i in ib["indices"]]
        w = WeightVector([ib["weights"][str(i)] for i in ib["indices"]])
        print("    re-verified:", combo_mass_bound(pts, w, n=ib["n"], eps=ib["eps"]))
