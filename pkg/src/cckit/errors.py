"""Exception hierarchy.

Every error carries a machine-readable ``kind`` slug surfaced by the CLI
(`error.kind` in emitted JSON). Input-side problems exit with code 1,
solver-side problems with code 2.
"""
from __future__ import annotations


class CCKitError(Exception):
    """Base class for all package errors."""

    kind = "error"
    exit_code = 2


class InputError(CCKitError):
    """Malformed instance, schema violation, or failed precondition."""

    kind = "input"
    exit_code = 1


class SpaceMismatchError(InputError):
    """Two random variables do not share the same probability space."""

    kind = "space_mismatch"


class ParseError(InputError):
    """Expression syntax error; ``offset`` is the byte position."""

    kind = "parse"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DomainError(CCKitError):
    """Evaluation outside a function's domain (log of a negative, 0/0, ...)."""

    kind = "domain"


class SolverError(CCKitError):
    """An iterative routine failed and says so (never silent)."""

    kind = "solver"


class BudgetExceededError(SolverError):
    """Iteration / cell / step budget exhausted before the tolerance was met."""

    kind = "budget"


class NonConvergent(SolverError):
    """An iteration ran out of room before its stopping criterion (horizon
    too short, resolution cap, gap stalled). ``certificate`` carries the
    best state reached, when the solver has one worth reporting."""

    kind = "non_convergent"

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class Unbounded(SolverError):
    """Escaping mass detected; carries the certificate that proves it."""

    kind = "unbounded"

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class EmptyIntersection(SolverError):
    """A finite intersection was demonstrated empty; carries the witnesses."""

    kind = "empty_intersection"

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class KKMViolation(SolverError):
    """The covering condition failed at a concrete point (the witness)."""

    kind = "kkm_violation"

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class CurvatureError(InputError):
    """A declared convexity/concavity was refuted by a sampled midpoint."""

    kind = "curvature"
