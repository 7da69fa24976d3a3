"""Convex objective functionals on random variables.

Three concrete shapes, all convex by construction or validation:

* ``LinearFunctional``     G(f) = E[c f]
* ``QuadraticFunctional``  G(f) = (1/2) E[f (A f)] + E[b f]
* ``PointwiseFunctional``  G(f) = E[Phi(f)] for a scalar convex Phi

Gradients are taken in the probability-weighted geometry (the inner
product E[u v]), so grad of a linear functional is c itself and grad of
the quadratic is A f + b. For that to hold the quadratic matrix must be
self-adjoint for the weighted inner product (p_i A_ij = p_j A_ji) and
positive semidefinite; construction validates both and refuses
indefinite input. Pointwise maps come from the small expression
language (one free variable) and their gradients use central finite
differences.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import CurvatureError, InputError
from .expr import Expression
from .measure import ProbSpace, RandVar


class LinearFunctional:
    kind = "linear"
    declared_convex = True

    def __init__(self, space: ProbSpace, c):
        c_vals = c.values if isinstance(c, RandVar) else np.asarray(c, dtype=float)
        if c_vals.shape != (space.n,):
            raise InputError("linear coefficient must match the space")
        if not np.all(np.isfinite(c_vals)):
            raise InputError("linear coefficient must be finite")
        self.space = space
        self.c_values = c_vals

    def value(self, f: RandVar) -> float:
        return float(np.dot(self.space.probs * self.c_values, f.values))

    def grad(self, f: RandVar) -> np.ndarray:
        return self.c_values.copy()

    def to_json(self) -> dict:
        from .measure import randvar_to_json
        return {
            "kind": "linear",
            "c": randvar_to_json(RandVar(self.space, self.c_values)),
        }


class QuadraticFunctional:
    kind = "quadratic"
    declared_convex = True

    def __init__(self, space: ProbSpace, A, b=None):
        A = np.asarray(A, dtype=float)
        n = space.n
        if A.shape != (n, n):
            raise InputError("quadratic matrix must be n-by-n for the space")
        if not np.all(np.isfinite(A)):
            raise InputError("quadratic matrix must be finite")
        if b is None:
            b_vals = np.zeros(n)
        else:
            b_vals = b.values if isinstance(b, RandVar) else np.asarray(b, dtype=float)
        if b_vals.shape != (n,):
            raise InputError("quadratic linear term must match the space")
        p = space.probs
        scale = 1.0 + float(np.abs(A).max())
        # self-adjointness for the weighted inner product: p_i A_ij = p_j A_ji
        W = p[:, None] * A
        if float(np.abs(W - W.T).max()) > 1e-10 * scale:
            raise CurvatureError(
                "quadratic matrix is not self-adjoint for the weighted inner product"
            )
        # PSD check on the similarity transform  diag(sqrt p) A diag(1/sqrt p)
        rp = np.sqrt(p)
        B = (rp[:, None] * A) / rp[None, :]
        B = 0.5 * (B + B.T)
        eigs = np.linalg.eigvalsh(B)
        if eigs.min() < -1e-10 * max(1.0, abs(eigs.max())):
            raise CurvatureError(
                f"quadratic matrix is not positive semidefinite "
                f"(min eigenvalue {eigs.min():.3e})"
            )
        self.space = space
        self.A_values = A
        self.b_values = b_vals

    def value(self, f: RandVar) -> float:
        v = f.values
        quad = 0.5 * float(np.dot(self.space.probs * v, self.A_values @ v))
        lin = float(np.dot(self.space.probs * self.b_values, v))
        return quad + lin

    def grad(self, f: RandVar) -> np.ndarray:
        return self.A_values @ f.values + self.b_values

    def to_json(self) -> dict:
        from .measure import randvar_to_json
        return {
            "kind": "quadratic",
            "A": [[float(x) for x in row] for row in self.A_values],
            "b": randvar_to_json(RandVar(self.space, self.b_values)),
        }


class PointwiseFunctional:
    """G(f) = E[Phi(f)] for a scalar map Phi given as an expression in x.

    ``declared_convex`` is settled at construction: ``True`` runs a sampled
    midpoint check and refuses on violation, ``False`` skips the check and
    marks the functional unusable as a convex objective, and the default
    ``None`` runs the check and records the verdict instead of raising
    (diagnostics like the coercivity report accept such functionals;
    ``minimize`` and Sublevel representations do not when the verdict is
    negative).
    """

    kind = "pointwise"

    def __init__(self, space: ProbSpace, expr, declared_convex=None):
        if isinstance(expr, str):
            expr = Expression(expr)
        extra = [v for v in expr.variables if v != "x"]
        if extra:
            raise InputError(
                f"pointwise map must use only the variable x, found {extra}"
            )
        self.space = space
        self.expr = expr
        self.convexity_witness = None
        if declared_convex is False:
            self.declared_convex = False
        else:
            witness = self._midpoint_scan()
            if witness is None:
                self.declared_convex = True
            elif declared_convex is True:
                raise CurvatureError(
                    f"scalar map failed the midpoint convexity spot-check "
                    f"at x pair {witness!r}"
                )
            else:
                self.declared_convex = False
                self.convexity_witness = witness

    def _midpoint_scan(self):
        """Sampled midpoint convexity check; returns a violating pair or None.
        Pairs where the map is undefined are skipped (domain holes are the
        caller's concern, not curvature evidence)."""
        rng = np.random.default_rng(20240902)
        checked = 0
        for _ in range(200):
            a, b = rng.uniform(1e-3, 16.0, size=2)
            try:
                fa, fb = self.scalar(float(a)), self.scalar(float(b))
                fm = self.scalar(0.5 * (float(a) + float(b)))
            except Exception:
                continue
            checked += 1
            if fm > 0.5 * (fa + fb) + 1e-9 * (1.0 + abs(fa) + abs(fb)):
                return (float(a), float(b))
            if checked >= 100:
                break
        if checked < 20:
            raise InputError(
                "scalar map is undefined on most of the sample domain (0, 16]"
            )
        return None

    def scalar(self, x: float) -> float:
        return self.expr.eval({"x": x})

    def value(self, f: RandVar) -> float:
        total = 0.0
        for p_i, v_i in zip(self.space.probs, f.values):
            total += p_i * self.scalar(float(v_i))
        if not math.isfinite(total):
            raise InputError("pointwise functional evaluated to a non-finite value")
        return total

    def grad(self, f: RandVar) -> np.ndarray:
        out = np.empty(self.space.n)
        for i, v_i in enumerate(f.values):
            out[i] = self.expr.derivative({"x": float(v_i)}, "x")
        return out

    def to_json(self) -> dict:
        return {
            "kind": "pointwise",
            "expr": self.expr.src,
            "declared_convex": self.declared_convex,
        }


def functional_from_json(space: ProbSpace, obj: dict):
    """Build a functional from its JSON form (see each class's to_json)."""
    from .measure import randvar_from_json
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InputError("functional JSON needs a 'kind' field")
    kind = obj["kind"]
    if kind == "linear":
        c = randvar_from_json(obj["c"], space)
        return LinearFunctional(space, c)
    if kind == "quadratic":
        A = np.asarray(obj["A"], dtype=float)
        b = randvar_from_json(obj["b"], space) if "b" in obj and obj["b"] is not None else None
        return QuadraticFunctional(space, A, b)
    if kind == "pointwise":
        return PointwiseFunctional(
            space, obj["expr"], declared_convex=obj.get("declared_convex")
        )
    raise InputError(f"unknown functional kind {kind!r}")
