"""
Exception hierarchy for the affinelab toolkit.
Every error raised by the package derives from AffineLabError.
"""

from typing import Optional, Tuple


class AffineLabError(Exception):
    """Base class for all affinelab errors."""


class InvariantViolation(AffineLabError):
    """A mathematical property that must hold was found violated."""


# Jets

class JetError(AffineLabError):
    """Base class for truncated Taylor arithmetic errors."""


class DivisionByZeroValue(JetError):
    """Division by a jet whose value vanishes."""


class DomainError(JetError):
    """Elementary function evaluated outside its domain."""

    def __init__(self, fn: str, message: Optional[str] = None):
        self.fn = fn
        super().__init__(message or f"{fn}: argument outside the function domain")


class OrderError(JetError):
    """Requested jet order is outside the supported range."""


# Expressions

class ExpressionError(AffineLabError):
    """Base class for expression parsing and evaluation errors."""


class ExpressionSyntaxError(ExpressionError):
    """Malformed expression text."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class UnknownIdentifier(ExpressionError):
    """Reference to a variable, constant or function that is not declared."""

    def __init__(self, name: str, offset: int = 0):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier '{name}' (at byte {offset})")


class ArityError(ExpressionError):
    """Function called with the wrong number of arguments."""


class EvaluationError(ExpressionError):
    """Jet evaluation failed at a given AST node."""

    def __init__(self, message: str, span: Tuple[int, int]):
        self.span = span
        super().__init__(f"{message} (at bytes {span[0]}-{span[1]})")


# Geometry

class GeometryError(AffineLabError):
    """Base class for surface geometry errors."""


class DegenerateFrame(GeometryError):
    """The frame {f_u, f_v, xi} is (numerically) not a basis."""


class NotConvex(GeometryError):
    """Second fundamental form is not definite where convexity is needed."""


class PreconditionFailed(GeometryError):
    """An identity check was requested where its hypotheses fail."""

    def __init__(self, condition: str, message: Optional[str] = None):
        self.condition = condition
        super().__init__(message or f"precondition failed: {condition}")


# Umbilics

class UmbilicError(AffineLabError):
    """Base class for umbilic analysis errors."""


class NotUmbilic(UmbilicError):
    """The point is not an umbilic at the working tolerance."""


class OrderExceedsMax(UmbilicError):
    """Every jet of the umbilic field vanishes up to the maximal order."""


class OrderTooLow(UmbilicError):
    """The umbilic order is lower than the requested jet identity order."""


class ZeroOnLoop(UmbilicError):
    """The planar field vanishes on the winding loop."""


class IndexUnstable(UmbilicError):
    """Winding numbers disagree between loop radii."""


class NotIsolated(UmbilicError):
    """The field vanishes on a whole neighbourhood or curve."""


class NewtonDivergence(UmbilicError):
    """Newton refinement of an umbilic candidate did not converge."""


class UmbilicSeed(UmbilicError):
    """A curvature line was seeded at an umbilical point."""


class ChartGap(UmbilicError):
    """The census atlas leaves part of the surface uncovered."""


class IndexSumMismatch(InvariantViolation, UmbilicError):
    """Sum of foliation indices differs from the Euler characteristic."""


# Congruences

class CongruenceError(AffineLabError):
    """Base class for line congruence errors."""


class NonSimplyConnectedDomain(CongruenceError):
    """Periodic domain whose period holonomy of tau does not vanish."""

    def __init__(self, holonomy: float):
        self.holonomy = holonomy
        super().__init__(f"period holonomy of tau is {holonomy:.3e}")


class DegenerateShiftedFrame(CongruenceError):
    """The shifted reference surface is not immersed or not transversal."""


# Rotational surfaces

class RotationalError(AffineLabError):
    """Base class for surface-of-revolution errors."""


class InvalidProfile(RotationalError):
    """Generator arc violates x > 0 or y' > 0."""


class SingularSystem(RotationalError):
    """The (a, b) linear system of the Blaschke normal is singular."""


class QuadratureFailure(RotationalError):
    """Numerical integration of y'/x did not reach the tolerance."""


class NoSignChange(RotationalError):
    """y'' has no sign change on the profile interval."""


class NotConvexAtAxis(RotationalError):
    """Rotational graph is not convex at the axis."""


# Foliation

class FoliationError(AffineLabError):
    """Base class for curvature line integration errors."""


class StepUnderflow(FoliationError):
    """Adaptive step size fell below the minimum."""


# Scene files

class SceneError(AffineLabError):
    """Invalid scene file; pointer locates the offending entry."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")
