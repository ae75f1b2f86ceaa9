"""Exception hierarchy.  Anything deriving from :class:`IIRCError` is a
data or configuration problem (CLI exit code 2)."""


class IIRCError(Exception):
    pass


class HierarchyError(IIRCError):
    pass


class DuplicateClass(HierarchyError):
    pass


class CycleOrDepthViolation(HierarchyError):
    pass


class DanglingParent(HierarchyError):
    pass


class EmptyHierarchy(HierarchyError):
    pass


class UnknownClass(HierarchyError, KeyError):
    pass


class IsSuperclass(HierarchyError):
    pass


class DataError(IIRCError):
    """Raised for malformed datasets; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidSpec(DataError):
    pass


class ParseError(DataError):
    pass


class UnknownLabel(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DuplicateId(DataError):
    pass


class EmptyClass(DataError):
    pass


class InfeasibleConfig(IIRCError):
    pass


class EmptyBatch(IIRCError, ValueError):
    pass
