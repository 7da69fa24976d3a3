"""Saddle points of concave-convex payoffs on bounded convex sets.

The payoff shape is Phi(f, g) = E[f * (K g)] + E[a(f)] + E[b(g)] with a
concave and b convex (both optional, given as scalar expressions), so
Phi is concave in f and convex in g. ``solve_saddle`` runs an
extragradient scheme; when both sets are polytopes and the payoff is
purely bilinear it works in generator-weight space where the duality
gap of a candidate pair is computable exactly from the generators, and
a support-equalization polish usually lands on the saddle itself.

``build_G_family`` encodes, for chosen pairs (f, g), the sets

    G_{f+g} = { f'+g' :  Phi(f, g') - Phi(f', g) <= 0 }

as sublevel representations on the direct-sum space. Their intersection
over all generator pairs is exactly the saddle set (for bilinear
payoffs), and any convex combination h = sum_k c_k (f_k + g_k) satisfies
sum_k c_k [Phi(f_k, g-bar) - Phi(f-bar, g_k)] = 0, so some term is <= 0:
the covering property the simplicial walk needs holds for every pair
family, which is what makes the KKM route to saddle points run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex import (
    ConvexSetRep,
    Polytope,
    Sublevel,
    contains,
    project,
    project_simplex,
)
from .coercive import minimize
from .errors import CurvatureError, InputError, NonConvergent
from .expr import Expression
from .functionals import LinearFunctional
from .measure import (
    DirectSumSpace,
    ProbSpace,
    RandVar,
    direct_sum,
    split_oplus,
)

__all__ = [
    "BilinearPayoff",
    "SaddleInstance",
    "SaddleCertificate",
    "VerifyResult",
    "solve_saddle",
    "verify_saddle",
    "build_G_family",
    "payoff_from_json",
]

_SPOT_SEED = 20240904

#: extragradient iterations in the first round; each retry doubles
EG_START_ITERS = 10_000

#: rounds of doubling before giving up
EG_MAX_ROUNDS = 7


def _scan_scalar_curvature(expr: Expression, want: str, hi: float):
    """Sampled midpoint check that expr (in x) is concave ('cap') or convex
    ('cup') on [0, hi]; raises CurvatureError with the witness pair."""
    rng = np.random.default_rng(_SPOT_SEED)
    for _ in range(100):
        a, b = rng.uniform(0.0, hi, size=2)
        fa = expr.eval({"x": float(a)})
        fb = expr.eval({"x": float(b)})
        fm = expr.eval({"x": 0.5 * (float(a) + float(b))})
        slack = 1e-9 * (1.0 + abs(fa) + abs(fb))
        bad_cap = want == "cap" and fm < 0.5 * (fa + fb) - slack
        bad_cup = want == "cup" and fm > 0.5 * (fa + fb) + slack
        if bad_cap or bad_cup:
            shape = "concave" if want == "cap" else "convex"
            raise CurvatureError(
                f"payoff term {expr.src!r} failed the {shape} midpoint "
                f"spot-check at x pair ({a!r}, {b!r})"
            )


class BilinearPayoff:
    """Phi(f, g) = E[f * (K g)] + E[a(f)] + E[b(g)], concave-convex."""

    def __init__(self, space: ProbSpace, K, f_term=None, g_term=None,
                 curvature_scale: float = 16.0):
        K = np.asarray(K, dtype=float)
        if K.shape != (space.n, space.n):
            raise InputError("kernel must be n-by-n for the space")
        if not np.all(np.isfinite(K)):
            raise InputError("kernel must be finite")
        self.space = space
        self.K = K
        self.f_term = Expression(f_term) if isinstance(f_term, str) else f_term
        self.g_term = Expression(g_term) if isinstance(g_term, str) else g_term
        for term, want in ((self.f_term, "cap"), (self.g_term, "cup")):
            if term is not None:
                extra = [v for v in term.variables if v != "x"]
                if extra:
                    raise InputError(
                        f"payoff term must use only x, found {extra}"
                    )
                _scan_scalar_curvature(term, want, curvature_scale)

    @property
    def is_bilinear(self) -> bool:
        return self.f_term is None and self.g_term is None

    def value(self, f: RandVar, g: RandVar) -> float:
        p = self.space.probs
        out = float(np.dot(p * f.values, self.K @ g.values))
        if self.f_term is not None:
            out += float(sum(
                pi * self.f_term.eval({"x": float(v)})
                for pi, v in zip(p, f.values)
            ))
        if self.g_term is not None:
            out += float(sum(
                pi * self.g_term.eval({"x": float(v)})
                for pi, v in zip(p, g.values)
            ))
        return out

    def grad_f(self, f: RandVar, g: RandVar) -> np.ndarray:
        out = self.K @ g.values
        if self.f_term is not None:
            out = out + np.array([
                self.f_term.derivative({"x": float(v)}, "x") for v in f.values
            ])
        return out

    def grad_g(self, f: RandVar, g: RandVar) -> np.ndarray:
        p = self.space.probs
        out = (self.K.T @ (p * f.values)) / p
        if self.g_term is not None:
            out = out + np.array([
                self.g_term.derivative({"x": float(v)}, "x") for v in g.values
            ])
        return out

    def to_json(self) -> dict:
        out = {"kernel": [[float(x) for x in row] for row in self.K]}
        if self.f_term is not None:
            out["f_term"] = self.f_term.src
        if self.g_term is not None:
            out["g_term"] = self.g_term.src
        return out


def payoff_from_json(space: ProbSpace, obj: dict) -> BilinearPayoff:
    if not isinstance(obj, dict) or "kernel" not in obj:
        raise InputError("payoff JSON needs a 'kernel' matrix")
    return BilinearPayoff(
        space, np.asarray(obj["kernel"], dtype=float),
        f_term=obj.get("f_term"), g_term=obj.get("g_term"),
    )


class SaddleInstance:
    def __init__(self, C: ConvexSetRep, D: ConvexSetRep, payoff: BilinearPayoff):
        if not C.space.same(payoff.space) or not D.space.same(payoff.space):
            raise InputError("sets and payoff must share one space")
        self.C = C
        self.D = D
        self.payoff = payoff
        self.space = payoff.space


@dataclass
class SaddleCertificate:
    f0: RandVar
    g0: RandVar
    value: float
    supinf: float
    infsup: float
    gap: float
    iterations: int
    method: str

    def to_json(self) -> dict:
        from .measure import randvar_to_json
        return {
            "f0": randvar_to_json(self.f0),
            "g0": randvar_to_json(self.g0),
            "value": self.value,
            "supinf": self.supinf,
            "infsup": self.infsup,
            "gap": self.gap,
            "iterations": self.iterations,
            "method": self.method,
        }


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def solve_saddle(inst: SaddleInstance, tol: float = 1e-6) -> SaddleCertificate:
    """A pair (f0, g0) whose duality gap infsup - supinf is at most tol.

    The gap is measured by independent optimization over each set (exact
    generator minima for bilinear polytope instances), never by trusting
    the iteration; on budget exhaustion the best pair found rides along
    in the NonConvergent certificate.
    """
    if not (tol > 0.0 and math.isfinite(tol)):
        raise InputError("tol must be positive and finite")
    if (isinstance(inst.C, Polytope) and isinstance(inst.D, Polytope)
            and inst.payoff.is_bilinear):
        return _solve_matrix_game(inst, tol)
    return _solve_direct(inst, tol)


def _solve_matrix_game(inst: SaddleInstance, tol: float) -> SaddleCertificate:
    """Generator-weight extragradient with support polish; all gap
    measurements are exact generator sweeps."""
    p = inst.space.probs
    U = np.column_stack([v.values for v in inst.C.generators])
    W = np.column_stack([v.values for v in inst.D.generators])
    M = U.T @ (p[:, None] * inst.payoff.K) @ W
    a, b = M.shape

    norm_M = _spectral_norm(M)
    step = 0.9 / max(norm_M, 1e-12)
    u = np.full(a, 1.0 / a)
    w = np.full(b, 1.0 / b)
    total_iters = 0
    iters = EG_START_ITERS
    best = None

    for _round in range(EG_MAX_ROUNDS):
        u, w, u_avg, w_avg = _eg_rounds(M, u, w, step, iters)
        total_iters += iters
        candidates = [(u_avg, w_avg), (u, w)]
        polished = _support_polish(M, u_avg, w_avg)
        if polished is not None:
            candidates.insert(0, polished)
        for uc, wc in candidates:
            gap, lo, hi = _game_gap(M, uc, wc)
            if best is None or gap < best[0]:
                best = (gap, lo, hi, uc, wc)
            if gap <= tol:
                return _package_game(inst, U, W, M, uc, wc, total_iters,
                                     "extragradient+polish")
        iters *= 2
    gap, lo, hi, uc, wc = best
    cert = _package_game(inst, U, W, M, uc, wc, total_iters,
                         "extragradient+polish (best effort)")
    raise NonConvergent(
        f"duality gap stalled at {gap:.3e} > tol {tol:g} "
        f"after {total_iters} iterations",
        certificate=cert,
    )


def _eg_rounds(M, u, w, step, iters):
    half = iters // 2
    u_acc = np.zeros_like(u)
    w_acc = np.zeros_like(w)
    kept = 0
    for k in range(iters):
        uh = project_simplex(u + step * (M @ w))
        wh = project_simplex(w - step * (M.T @ u))
        u = project_simplex(u + step * (M @ wh))
        w = project_simplex(w - step * (M.T @ uh))
        if k >= half:
            u_acc += u
            w_acc += w
            kept += 1
    if kept == 0:
        return u, w, u, w
    return u, w, u_acc / kept, w_acc / kept


def _game_gap(M, u, w):
    """Exact duality gap of a weight pair over the generators."""
    hi = float((M @ w).max())        # best pure response of the maximizer
    lo = float((M.T @ u).min())      # best pure response of the minimizer
    return hi - lo, lo, hi


def _support_polish(M, u, w, thresh: float = 1e-6):
    """Equalize payoffs on the apparent supports; exact when the support
    guess is right, harmless otherwise (candidate is gap-checked)."""
    su = np.flatnonzero(u > thresh * max(1.0, u.max()))
    sw = np.flatnonzero(w > thresh * max(1.0, w.max()))
    if su.size == 0 or sw.size == 0:
        return None
    a, b = su.size, sw.size
    # unknowns: u[su], w[sw], v
    n_un = a + b + 1
    rows = []
    rhs = []
    for j in sw:                     # (M^T u)_j = v
        row = np.zeros(n_un)
        row[:a] = M[su, j]
        row[a + b] = -1.0
        rows.append(row)
        rhs.append(0.0)
    for i in su:                     # (M w)_i = v
        row = np.zeros(n_un)
        row[a:a + b] = M[i, sw]
        row[a + b] = -1.0
        rows.append(row)
        rhs.append(0.0)
    row = np.zeros(n_un); row[:a] = 1.0
    rows.append(row); rhs.append(1.0)
    row = np.zeros(n_un); row[a:a + b] = 1.0
    rows.append(row); rhs.append(1.0)
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    u_new = np.zeros_like(u)
    w_new = np.zeros_like(w)
    u_new[su] = np.clip(sol[:a], 0.0, None)
    w_new[sw] = np.clip(sol[a:a + b], 0.0, None)
    if u_new.sum() <= 0.0 or w_new.sum() <= 0.0:
        return None
    return u_new / u_new.sum(), w_new / w_new.sum()


def _package_game(inst, U, W, M, u, w, iters, method) -> SaddleCertificate:
    gap, lo, hi = _game_gap(M, u, w)
    f0 = RandVar(inst.space, U @ u)
    g0 = RandVar(inst.space, W @ w)
    value = inst.payoff.value(f0, g0)
    return SaddleCertificate(
        f0=f0, g0=g0, value=value,
        supinf=lo, infsup=hi, gap=gap,
        iterations=iters, method=method,
    )


def _spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    v = np.full(M.shape[1], 1.0 / math.sqrt(M.shape[1]))
    for _ in range(60):
        x = M.T @ (M @ v)
        nx = float(np.linalg.norm(x))
        if nx <= 0.0:
            return 0.0
        v = x / nx
    return float(np.linalg.norm(M @ v))


# ---------------------------------------------------------------------------
# general (projected) path
# ---------------------------------------------------------------------------

class _FrozenArgFunctional:
    """Phi with one argument frozen, as a convex objective: sign +1 gives
    g -> Phi(f_fix, g); sign -1 gives f -> -Phi(f, g_fix)."""

    declared_convex = True
    kind = "frozen-payoff"

    def __init__(self, payoff: BilinearPayoff, fixed: RandVar, side: str):
        self.payoff = payoff
        self.fixed = fixed
        self.side = side
        self.space = payoff.space

    def value(self, x: RandVar) -> float:
        if self.side == "g":
            return self.payoff.value(self.fixed, x)
        return -self.payoff.value(x, self.fixed)

    def grad(self, x: RandVar) -> np.ndarray:
        if self.side == "g":
            return self.payoff.grad_g(self.fixed, x)
        return -self.payoff.grad_f(x, self.fixed)


def _inner_opt(payoff, fixed: RandVar, side: str, over: ConvexSetRep,
               tol: float):
    """inf_g Phi(fixed, g) (side 'g') or sup_f Phi(f, fixed) (side 'f'),
    by certified convex minimization over the set."""
    func = _FrozenArgFunctional(payoff, fixed, side)
    x, val, _report = minimize(func, over, max(tol * 0.25, 1e-10))
    return (val if side == "g" else -val), x


def _solve_direct(inst: SaddleInstance, tol: float) -> SaddleCertificate:
    payoff = inst.payoff
    space = inst.space
    p = space.probs
    rp = np.sqrt(p)
    B = (rp[:, None] * payoff.K) / rp[None, :]
    L = _spectral_norm(B)
    if payoff.f_term is not None or payoff.g_term is not None:
        L += _term_curvature_bound(payoff)
    step = 0.9 / max(L, 1e-12)

    f = inst.C.reference_point()
    g = inst.D.reference_point()
    proj_tol = min(tol, 1e-9)
    total = 0
    iters = 2_000
    best = None
    for _round in range(EG_MAX_ROUNDS):
        f_acc = np.zeros(space.n)
        g_acc = np.zeros(space.n)
        kept = 0
        half = iters // 2
        for k in range(iters):
            fh = project(inst.C, RandVar(space, f.values + step * payoff.grad_f(f, g)), proj_tol)
            gh = project(inst.D, RandVar(space, g.values - step * payoff.grad_g(f, g)), proj_tol)
            f = project(inst.C, RandVar(space, f.values + step * payoff.grad_f(fh, gh)), proj_tol)
            g = project(inst.D, RandVar(space, g.values - step * payoff.grad_g(fh, gh)), proj_tol)
            if k >= half:
                f_acc += f.values
                g_acc += g.values
                kept += 1
        total += iters
        f_avg = RandVar(space, f_acc / kept)
        g_avg = RandVar(space, g_acc / kept)
        for fc, gc in ((f_avg, g_avg), (f, g)):
            supinf, _ = _inner_opt(payoff, fc, "g", inst.D, tol)
            infsup, _ = _inner_opt(payoff, gc, "f", inst.C, tol)
            gap = infsup - supinf
            if best is None or gap < best[0]:
                best = (gap, supinf, infsup, fc, gc)
            if gap <= tol:
                return SaddleCertificate(
                    f0=fc, g0=gc, value=payoff.value(fc, gc),
                    supinf=supinf, infsup=infsup, gap=gap,
                    iterations=total, method="extragradient (projected)",
                )
        iters *= 2
    gap, supinf, infsup, fc, gc = best
    cert = SaddleCertificate(
        f0=fc, g0=gc, value=payoff.value(fc, gc),
        supinf=supinf, infsup=infsup, gap=gap,
        iterations=total, method="extragradient (projected, best effort)",
    )
    raise NonConvergent(
        f"duality gap stalled at {gap:.3e} > tol {tol:g} after {total} iterations",
        certificate=cert,
    )


def _term_curvature_bound(payoff: BilinearPayoff) -> float:
    """Crude finite-difference bound on the separable terms' gradient
    Lipschitz constants over [0, 16]."""
    bound = 0.0
    xs = np.linspace(0.0, 16.0, 33)
    for term in (payoff.f_term, payoff.g_term):
        if term is None:
            continue
        ds = [term.derivative({"x": float(x)}, "x") for x in xs]
        for d1, d2, x1, x2 in zip(ds, ds[1:], xs, xs[1:]):
            bound = max(bound, abs(d2 - d1) / (x2 - x1))
    return bound


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class VerifyResult:
    ok: bool
    value: float
    max_violation: float
    witness: dict | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_saddle(inst: SaddleInstance, f0: RandVar, g0: RandVar,
                  tol: float = 1e-6) -> VerifyResult:
    """Check the saddle inequalities
        Phi(f, g0) <= Phi(f0, g0) <= Phi(f0, g)
    against the sets: exact generator sweeps for bilinear polytope
    instances, certified inner optimization otherwise. The witness names
    the side and the point achieving the worst violation.
    """
    if not contains(inst.C, f0, 2.0 * tol):
        raise InputError("f0 is not a member of C at 2*tol")
    if not contains(inst.D, g0, 2.0 * tol):
        raise InputError("g0 is not a member of D at 2*tol")
    payoff = inst.payoff
    value = payoff.value(f0, g0)

    if (isinstance(inst.C, Polytope) and isinstance(inst.D, Polytope)
            and payoff.is_bilinear):
        worst = -math.inf
        witness = None
        for v in inst.C.generators:
            viol = payoff.value(v, g0) - value
            if viol > worst:
                worst, witness = viol, {"side": "f", "point": v}
        for w in inst.D.generators:
            viol = value - payoff.value(f0, w)
            if viol > worst:
                worst, witness = viol, {"side": "g", "point": w}
    else:
        infsup, f_best = _inner_opt(payoff, g0, "f", inst.C, tol)
        supinf, g_best = _inner_opt(payoff, f0, "g", inst.D, tol)
        cand = [
            (infsup - value, {"side": "f", "point": f_best}),
            (value - supinf, {"side": "g", "point": g_best}),
        ]
        worst, witness = max(cand, key=lambda t: t[0])
    ok = worst <= tol
    return VerifyResult(
        ok=ok, value=value, max_violation=max(worst, 0.0),
        witness=None if ok else witness,
    )


# ---------------------------------------------------------------------------
# direct-sum gap family
# ---------------------------------------------------------------------------

class _GapFunctional:
    """h = f'+g'  ->  Phi(f, g') - Phi(f', g), convex on the direct sum.

    On the direct-sum space (probabilities halved) the weighted gradient
    picks up a factor 2 on each half; the bilinear case reduces to a
    plain linear functional with c_left = -2 K g and
    c_right = 2 K^T(p f)/p.
    """

    declared_convex = True
    kind = "saddle-gap"

    def __init__(self, payoff: BilinearPayoff, sum_space: DirectSumSpace,
                 f: RandVar, g: RandVar):
        self.payoff = payoff
        self.space = sum_space
        self.f = f
        self.g = g

    def value(self, h: RandVar) -> float:
        f_part, g_part = split_oplus(h)
        return (self.payoff.value(self.f, g_part)
                - self.payoff.value(f_part, self.g))

    def grad(self, h: RandVar) -> np.ndarray:
        f_part, g_part = split_oplus(h)
        left = -2.0 * self.payoff.grad_f(f_part, self.g)
        right = 2.0 * self.payoff.grad_g(self.f, g_part)
        return np.concatenate([left, right])

    def to_json(self) -> dict:
        from .measure import randvar_to_json
        return {
            "kind": "saddle-gap",
            "payoff": self.payoff.to_json(),
            "f": randvar_to_json(self.f),
            "g": randvar_to_json(self.g),
        }


def build_G_family(inst: SaddleInstance, pairs: list) -> list:
    """Sublevel representations of G_{f+g} on the direct-sum space, one per
    (f, g) pair; pairs must be members of C x D. For bilinear payoffs each
    set is a plain linear sublevel (halfspace)."""
    sum_space = direct_sum(inst.space)
    out = []
    p = inst.space.probs
    for f, g in pairs:
        if not contains(inst.C, f, 1e-6):
            raise InputError("a pair's f is not a member of C")
        if not contains(inst.D, g, 1e-6):
            raise InputError("a pair's g is not a member of D")
        if inst.payoff.is_bilinear:
            c_left = -2.0 * (inst.payoff.K @ g.values)
            c_right = 2.0 * (inst.payoff.K.T @ (p * f.values)) / p
            func = LinearFunctional(
                sum_space, np.concatenate([c_left, c_right])
            )
        else:
            func = _GapFunctional(inst.payoff, sum_space, f, g)
        out.append(Sublevel(sum_space, func, 0.0))
    return out
