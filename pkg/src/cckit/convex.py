"""Closed convex subsets of the nonnegative orthant over a finite space.

Four representations share one geometry, the E[fg]-weighted Euclidean
norm (probability-weighted coordinates):

* ``Polytope``    -- convex hull of finitely many nonnegative generators;
* ``Box``         -- coordinate intervals [lower, upper] with lower >= 0;
* ``Sublevel``    -- {f >= 0 : G(f) <= level} for a declared-convex G;
* ``Intersection``-- finite intersections of the above.

Membership semantics per representation: Polytope by a feasibility
program over the weight simplex (active-set least squares, deterministic
lowest-index tie-breaks), Sublevel by evaluating the functional, Box and
Intersection componentwise. Projections: exact clamp for boxes, the
simplex program for polytopes, closed-form halfspace or multiplier
bisection for sublevel sets, and Dykstra's alternating scheme for
intersections. Iterative routines fail loudly on budget exhaustion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, CurvatureError, InputError, SolverError
from .measure import ProbSpace, RandVar

#: iteration cap for the active-set weight program
SIMPLEX_QP_CAP = 10_000

#: dual feasibility slack for the weight program, relative to data scale
SIMPLEX_QP_DUAL_TOL = 1e-12

#: sweeps allowed to Dykstra's alternating projections
DYKSTRA_CAP = 5_000

#: sampled pairs for the midpoint convexity spot-check
CONVEXITY_SPOT_PAIRS = 100

#: fixed seed for sampled validation (solver paths never depend on --seed)
_SPOT_SEED = 20240901


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Nonnegative weights summing to one (a point of the weight simplex)."""

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise InputError("weights must be a nonempty vector")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        if np.any(w < 0.0):
            raise InputError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise InputError("weights must sum to 1 within 1e-12")


def convex_combine(points: list[RandVar], w: WeightVector) -> RandVar:
    """The convex combination sum_k w_k points_k (shared space required)."""
    if len(points) == 0:
        raise InputError("need at least one point")
    if len(points) != w.weights.size:
        raise InputError("weights must align with points")
    space = points[0].space
    vals = np.zeros(space.n)
    for wk, pt in zip(w.weights, points):
        if not pt.space.same(space):
            raise InputError("all points must share one space")
        vals += wk * pt.values
    return RandVar(space, vals)


# ---------------------------------------------------------------------------
# representations
# ---------------------------------------------------------------------------

class ConvexSetRep:
    """Base class; concrete sets implement the private geometry hooks."""

    kind = "abstract"
    space: ProbSpace

    def _contains(self, f: RandVar, tol: float) -> bool:
        raise NotImplementedError

    def _project(self, f: RandVar, tol: float) -> RandVar:
        raise NotImplementedError

    def distance(self, f: RandVar, tol: float = 1e-9) -> float:
        """Weighted-norm distance from f to the set (via projection)."""
        from .measure import norm
        return norm(f - self._project(f, tol))


class Polytope(ConvexSetRep):
    kind = "polytope"

    def __init__(self, generators: list[RandVar]):
        if len(generators) == 0:
            raise InputError("a polytope needs at least one generator")
        space = generators[0].space
        for g in generators:
            if not g.space.same(space):
                raise InputError("generators must share one space")
            if np.any(g.values < 0.0):
                raise InputError("generators must be nonnegative atomwise")
        self.space = space
        self.generators = list(generators)
        # columns scaled by sqrt(p): weighted geometry becomes Euclidean
        self._root_p = np.sqrt(space.probs)
        self._cols = np.stack([g.values for g in generators], axis=1)
        self._A = self._cols * self._root_p[:, None]

    def max_abs_value(self) -> float:
        return float(np.abs(self._cols).max())

    def weights_for(self, f: RandVar, tol: float = 1e-9):
        """Best weight vector reproducing f, and the residual distance."""
        b = f.values * self._root_p
        w, dist, _ = _simplex_lsq(self._A, b)
        return WeightVector(w), dist

    def _contains(self, f, tol):
        _, dist = self.weights_for(f, tol)
        return dist <= tol

    def _project(self, f, tol):
        w, _ = self.weights_for(f, tol)
        return RandVar(self.space, self._cols @ w.weights)

    def reference_point(self) -> RandVar:
        return RandVar(self.space, self._cols.mean(axis=1))


class Box(ConvexSetRep):
    kind = "box"

    def __init__(self, lower: RandVar, upper: RandVar):
        if not lower.space.same(upper.space):
            raise InputError("box bounds must share one space")
        if np.any(lower.values < 0.0):
            raise InputError("box lower bounds must be nonnegative")
        if np.any(lower.values > upper.values):
            raise InputError("box needs lower <= upper atomwise")
        self.space = lower.space
        self.lower = lower
        self.upper = upper

    def _contains(self, f, tol):
        # componentwise with slack tol
        return bool(
            np.all(f.values >= self.lower.values - tol)
            and np.all(f.values <= self.upper.values + tol)
        )

    def _project(self, f, tol):
        return RandVar(self.space, np.clip(f.values, self.lower.values, self.upper.values))

    def reference_point(self) -> RandVar:
        return RandVar(self.space, 0.5 * (self.lower.values + self.upper.values))


class Sublevel(ConvexSetRep):
    """{f >= 0 : G(f) <= level} for a functional G declared convex by the caller.

    Construction spot-checks the midpoint inequality on sampled pairs and
    refuses the representation when a violation shows up. ``sampler`` maps
    an integer to a pair of value vectors and defaults to a uniform box;
    callers restricted to a sub-domain (e.g. a price simplex) pass their
    own so the check happens where the set will actually be used.
    """

    kind = "sublevel"

    def __init__(self, space: ProbSpace, functional, level: float, sampler=None,
                 spot_check: bool = True):
        if not math.isfinite(level):
            raise InputError("sublevel needs a finite level")
        if not getattr(functional, "declared_convex", False):
            raise InputError("sublevel functionals must be declared convex")
        self.space = space
        self.functional = functional
        self.level = float(level)
        if spot_check:
            self._spot_check_convexity(sampler)

    def _spot_check_convexity(self, sampler):
        rng = np.random.default_rng(_SPOT_SEED)
        n = self.space.n
        for k in range(CONVEXITY_SPOT_PAIRS):
            if sampler is None:
                a_vals = rng.uniform(0.0, 10.0, size=n)
                b_vals = rng.uniform(0.0, 10.0, size=n)
            else:
                a_vals, b_vals = sampler(rng)
            a = RandVar(self.space, a_vals)
            b = RandVar(self.space, b_vals)
            ga, gb = self.functional.value(a), self.functional.value(b)
            gm = self.functional.value(0.5 * (a + b))
            slack = 1e-9 * (1.0 + abs(ga) + abs(gb))
            if gm > 0.5 * (ga + gb) + slack:
                raise CurvatureError(
                    f"midpoint convexity violated on sampled pair #{k}: "
                    f"G(mid)={gm!r} > avg={0.5 * (ga + gb)!r}"
                )

    def _contains(self, f, tol):
        if np.any(f.values < -tol):
            return False
        return self.functional.value(f) <= self.level + tol

    def _project(self, f, tol):
        x = RandVar(self.space, np.maximum(f.values, 0.0))
        if self.functional.value(x) <= self.level:
            return x
        kind = getattr(self.functional, "kind", None)
        if kind == "linear":
            return self._project_halfspace_orthant(f, tol)
        return _project_sublevel_bisect(self, f, tol)

    def _project_halfspace_orthant(self, f, tol):
        # Dykstra between the halfspace {<c,x>_P <= level} and the orthant;
        # both projectors are exact, the pair converges geometrically.
        p = self.space.probs
        c = self.functional.c_values
        cc = float(np.dot(p * c, c))
        if cc <= 0.0:
            raise InputError("halfspace normal must be nonzero")
        x = f.values.copy()
        inc_h = np.zeros_like(x)
        inc_o = np.zeros_like(x)
        for _ in range(DYKSTRA_CAP):
            y = x + inc_h
            t = max(0.0, (float(np.dot(p * c, y)) - self.level) / cc)
            xh = y - t * c
            inc_h = y - xh
            y2 = xh + inc_o
            xo = np.maximum(y2, 0.0)
            inc_o = y2 - xo
            drift = float(np.abs(xo - x).max())
            x = xo
            viol = max(0.0, float(np.dot(p * c, x)) - self.level)
            if drift <= 1e-15 + 0.01 * tol and viol <= 0.1 * tol * (1.0 + abs(self.level)):
                return RandVar(self.space, np.maximum(x, 0.0))
        raise BudgetExceededError("halfspace/orthant projection did not converge")


class Intersection(ConvexSetRep):
    kind = "intersection"

    def __init__(self, parts: list[ConvexSetRep]):
        if len(parts) == 0:
            raise InputError("an intersection needs at least one part")
        space = parts[0].space
        for s in parts:
            if not s.space.same(space):
                raise InputError("intersection parts must share one space")
        self.space = space
        self.parts = list(parts)

    def _contains(self, f, tol):
        return all(part._contains(f, tol) for part in self.parts)

    def _project(self, f, tol):
        return _dykstra(self.parts, f, tol)

    def reference_point(self) -> RandVar:
        for part in self.parts:
            ref = getattr(part, "reference_point", None)
            if ref is not None:
                return self._project(ref(), 1e-10)
        raise SolverError("no part exposes a reference point")


def contains(set_rep: ConvexSetRep, f: RandVar, tol: float) -> bool:
    """Membership at slack tol, per-representation semantics (module docstring)."""
    if tol < 0.0:
        raise InputError("tol must be nonnegative")
    if not f.space.same(set_rep.space):
        raise InputError("point and set live on different spaces")
    return set_rep._contains(f, tol)


def project(set_rep: ConvexSetRep, f: RandVar, tol: float = 1e-9) -> RandVar:
    """Nearest point of the set in the weighted norm (tol steers the iterative paths)."""
    if not f.space.same(set_rep.space):
        raise InputError("point and set live on different spaces")
    return set_rep._project(f, tol)


# ---------------------------------------------------------------------------
# the weight-simplex least-squares program (active set, Lawson-Hanson style)
# ---------------------------------------------------------------------------

def _simplex_lsq(A: np.ndarray, b: np.ndarray):
    """min ||A w - b|| over w >= 0, sum w = 1.

    Active-set iteration with lowest-index tie-breaks; finite termination
    in exact arithmetic, hard cap ``SIMPLEX_QP_CAP`` otherwise. Returns
    (w, residual_norm, iterations).
    """
    n, k = A.shape
    scale = 1.0 + float(np.abs(A).max(initial=0.0)) + float(np.abs(b).max(initial=0.0))
    col_err = np.linalg.norm(A - b[:, None], axis=0)
    first = int(np.argmin(col_err))  # argmin returns the lowest index on ties
    passive = [first]
    w = np.zeros(k)
    w[first] = 1.0

    def kkt_solve(idx):
        Ap = A[:, idx]
        m = len(idx)
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = Ap.T @ Ap
        K[:m, m] = 1.0
        K[m, :m] = 1.0
        rhs = np.concatenate([Ap.T @ b, [1.0]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        return sol[:m], sol[m]

    for it in range(1, SIMPLEX_QP_CAP + 1):
        z, lam = kkt_solve(passive)
        inner_guard = 0
        while np.min(z) < -1e-12:
            inner_guard += 1
            if inner_guard > k + 2:
                break
            wp = w[passive]
            neg = z < -1e-12
            alphas = wp[neg] / (wp[neg] - z[neg])
            alpha = float(np.min(alphas))
            wp = wp + alpha * (z - wp)
            wp[wp < 1e-15] = 0.0
            for j, idx in enumerate(passive):
                w[idx] = wp[j]
            passive = [idx for idx in passive if w[idx] > 0.0]
            if not passive:
                passive = [first]
                w[:] = 0.0
                w[first] = 1.0
            z, lam = kkt_solve(passive)
        for j, idx in enumerate(passive):
            w[idx] = max(z[j], 0.0)
        for idx in range(k):
            if idx not in passive:
                w[idx] = 0.0
        s = w.sum()
        if s > 0:
            w = w / s
        grad = A.T @ (A @ w - b)
        lam_now = float(np.dot(w, grad))
        slack = lam_now - grad  # positive where adding idx would improve
        for idx in passive:
            slack[idx] = -np.inf
        best = int(np.argmax(slack))
        if slack[best] <= SIMPLEX_QP_DUAL_TOL * scale * scale:
            res = float(np.linalg.norm(A @ w - b))
            return w, res, it
        passive.append(best)
        passive.sort()
    raise BudgetExceededError(
        f"weight-simplex program hit the {SIMPLEX_QP_CAP}-iteration cap"
    )


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto {w >= 0, sum w = 1} (sort-based, exact)."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = int(idx[cond][-1])
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


# ---------------------------------------------------------------------------
# iterative projections
# ---------------------------------------------------------------------------

def _dykstra(parts, f: RandVar, tol: float) -> RandVar:
    """Dykstra's alternating projections onto an intersection."""
    from .measure import norm
    x = f
    incs = [None] * len(parts)
    zero = RandVar(f.space, np.zeros(f.space.n))
    incs = [zero] * len(parts)
    for sweep in range(DYKSTRA_CAP):
        x_prev = x
        for i, part in enumerate(parts):
            y = x + incs[i]
            xp = part._project(y, tol)
            incs[i] = y - xp
            x = xp
        drift = norm(x - x_prev)
        feasible = all(part._contains(x, max(tol, 1e-12)) for part in parts)
        if drift <= 1e-15 + 0.01 * tol and feasible:
            return x
    raise BudgetExceededError(
        f"Dykstra did not converge in {DYKSTRA_CAP} sweeps "
        "(empty or badly conditioned intersection?)"
    )


def _project_sublevel_bisect(rep: Sublevel, f: RandVar, tol: float) -> RandVar:
    """Projection onto {x >= 0 : G(x) <= level} via bisection on the multiplier.

    x(mu) solves (x - f) + mu * gradG(x) = 0 componentwise over x >= 0;
    G(x(mu)) decreases in mu, so bisect until the level is met.
    """
    functional = rep.functional
    level = rep.level

    def x_of_mu(mu: float) -> RandVar:
        kind = getattr(functional, "kind", None)
        if kind == "quadratic":
            # (I + mu A) x = f - mu b, then clamp to the orthant
            n = rep.space.n
            A = functional.A_values
            bvec = functional.b_values
            M = np.eye(n) + mu * A
            try:
                x = np.linalg.solve(M, f.values - mu * bvec)
            except np.linalg.LinAlgError:
                x, *_ = np.linalg.lstsq(M, f.values - mu * bvec, rcond=None)
            return RandVar(rep.space, np.maximum(x, 0.0))
        # pointwise: separable scalar prox via monotone derivative bisection
        vals = np.empty(rep.space.n)
        for i, fi in enumerate(f.values):
            vals[i] = _scalar_prox(functional, fi, mu)
        return RandVar(rep.space, vals)

    lo, hi = 0.0, 1.0
    x_hi = x_of_mu(hi)
    guard = 0
    while functional.value(x_hi) > level and guard < 200:
        hi *= 2.0
        x_hi = x_of_mu(hi)
        guard += 1
    if functional.value(x_hi) > level:
        raise SolverError("sublevel projection could not reach the level set")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        x_mid = x_of_mu(mid)
        if functional.value(x_mid) > level:
            lo = mid
        else:
            hi = mid
            x_hi = x_mid
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return x_hi


# ---------------------------------------------------------------------------
# JSON codecs (one wrapper key per variant)
# ---------------------------------------------------------------------------

def set_to_json(rep: ConvexSetRep) -> dict:
    from .measure import randvar_to_json
    if isinstance(rep, Polytope):
        return {
            "polytope": {
                "generators": [randvar_to_json(g) for g in rep.generators]
            }
        }
    if isinstance(rep, Box):
        return {
            "box": {
                "lower": randvar_to_json(rep.lower),
                "upper": randvar_to_json(rep.upper),
            }
        }
    if isinstance(rep, Sublevel):
        return {
            "sublevel": {
                "functional": rep.functional.to_json(),
                "level": rep.level,
            }
        }
    if isinstance(rep, Intersection):
        return {"intersection": {"parts": [set_to_json(s) for s in rep.parts]}}
    raise InputError(f"cannot serialize set kind {rep.kind!r}")


def set_from_json(space: ProbSpace, obj: dict) -> ConvexSetRep:
    from .functionals import functional_from_json
    from .measure import randvar_from_json
    if not isinstance(obj, dict) or len(obj) != 1:
        raise InputError("set JSON must be a single-key object naming the variant")
    (key, body), = obj.items()
    if key == "polytope":
        gens = [randvar_from_json(g, space) for g in body["generators"]]
        return Polytope(gens)
    if key == "box":
        return Box(
            randvar_from_json(body["lower"], space),
            randvar_from_json(body["upper"], space),
        )
    if key == "sublevel":
        fn = functional_from_json(space, body["functional"])
        return Sublevel(space, fn, float(body["level"]))
    if key == "intersection":
        return Intersection([set_from_json(space, s) for s in body["parts"]])
    raise InputError(f"unknown set variant {key!r}")


def _scalar_prox(functional, fi: float, mu: float) -> float:
    """argmin over x >= 0 of (x - fi)^2/2 + mu * Phi(x), Phi the pointwise map."""
    h = 1e-6

    def dphi(x):
        return (functional.scalar(x + h) - functional.scalar(max(0.0, x - h))) / (
            x + h - max(0.0, x - h)
        )

    def deriv(x):
        return (x - fi) + mu * dphi(x)

    lo, hi = 0.0, max(fi, 1.0)
    if deriv(lo) >= 0.0:
        return 0.0
    while deriv(hi) < 0.0 and hi < 1e12:
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if deriv(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
