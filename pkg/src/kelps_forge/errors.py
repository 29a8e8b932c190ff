from __future__ import annotations


class KelpsError(Exception):
    """Base class for every error raised by the toolchain."""


class ParseError(KelpsError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class ValidationError(KelpsError):
    def __init__(self, report, positions: dict | None = None):
        self.report = report
        self.positions = positions or {}
        lines = []
        for issue in report.errors:
            pos = self.positions.get(issue.where)
            prefix = f"{pos[0]}:{pos[1]}: " if pos else ""
            lines.append(prefix + issue.message)
        super().__init__("; ".join(lines))


class HorizonViolation(KelpsError):
    pass


class BudgetExceeded(KelpsError):
    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class NotNDistant(KelpsError):
    pass


class UnsupportedConstraint(KelpsError):
    pass


class UnsafeRule(KelpsError):
    pass


class UnsafeWeakConstraint(UnsafeRule):
    pass


class SolverNotFound(KelpsError):
    pass


class SolverTimeout(KelpsError):
    pass


class SolverParseError(KelpsError):
    def __init__(self, message: str, raw: str = ""):
        self.raw = raw
        super().__init__(message)


class SolverError(KelpsError):
    def __init__(self, message: str, raw: str = ""):
        self.raw = raw
        super().__init__(message)


class MalformedAtom(KelpsError):
    pass


class PreconditionViolation(KelpsError):
    pass


class RewriteUnsupported(KelpsError):
    pass


class NoModel(KelpsError):
    pass
