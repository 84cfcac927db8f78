"""Exception hierarchy.

Everything raised on purpose by the library derives from `XformTreeError`.
`FormatError` marks parse and I/O failures (exit code 2 in the CLI); all other
subclasses are domain errors (exit code 1).
"""

from __future__ import annotations


class XformTreeError(Exception):
    pass


# geometry / algebra
class SingularMatrix(XformTreeError):
    pass


class InvalidRotation(XformTreeError):
    pass


class NotTrsFactorable(XformTreeError):
    pass


class SizeMismatch(XformTreeError):
    pass


class EmptySet(XformTreeError):
    pass


# tree
class UnknownNode(XformTreeError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class UnknownParent(UnknownNode):
    pass


class UnknownCamera(XformTreeError):
    pass


class NoGeometry(XformTreeError):
    pass


class DifferentModels(XformTreeError):
    pass


class CycleWouldForm(XformTreeError):
    pass


class NotSiblings(XformTreeError):
    pass


class MalformedTransform(XformTreeError):
    pass


class AmbiguousSelector(XformTreeError):
    pass


# registration / motion
class DegenerateConfiguration(XformTreeError):
    pass


class NoCorrespondences(XformTreeError):
    pass


class InconsistentPoses(XformTreeError):
    pass


class DegenerateAngles(XformTreeError):
    pass


class RegistrationFailed(XformTreeError):
    pass


class InsufficientFrames(XformTreeError):
    pass


class BadTimesSpec(XformTreeError):
    pass


class UnexportableGeometry(XformTreeError):
    pass


# parse / io
class FormatError(XformTreeError):
    """Raised for unreadable input. Carries an optional source location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(self._render())

    def _render(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}, column {self.column}: {self.message}"


class DpwSyntaxError(FormatError):
    pass


class UnbalancedBraces(DpwSyntaxError):
    pass


class MalformedMatrix(DpwSyntaxError):
    pass


class MalformedString(DpwSyntaxError):
    pass


class GeometryFormatError(FormatError):
    pass


class TrackFormatError(FormatError):
    pass


class MissingFile(FormatError):
    pass
