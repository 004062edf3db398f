"""Exception hierarchy shared across the pipeline.

Every error that should surface as CLI exit code 2 derives from
:class:`PregussError`.  Errors carry a source location when one is known.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class SourcePos:
    """A position in a source file (1-based line and column)."""

    file: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


class PregussError(Exception):
    """Base class for all pipeline errors."""

    def __init__(self, message: str, pos: SourcePos | None = None):
        self.pos = pos
        if pos is not None:
            message = f"{pos}: {message}"
        super().__init__(message)


class MiniCSyntaxError(PregussError):
    """Raised by the parser; carries the set of tokens that were expected."""

    def __init__(self, message: str, pos: SourcePos, expected: tuple[str, ...] = ()):
        self.expected = expected
        if expected:
            message = f"{message} (expected one of: {', '.join(sorted(expected))})"
        super().__init__(message, pos)


class ResolveError(PregussError):
    """Name/type resolution failure (unknown identifier, arity, types...)."""


class SpecSyntaxError(PregussError):
    """Malformed annotation clause text."""


class UnknownConstructError(SpecSyntaxError):
    """An annotation uses a construct outside the supported subset."""


class MutualRecursionError(PregussError):
    """The call graph contains a cycle; carries the offending path."""

    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("recursion is not supported: " + " -> ".join(self.cycle))


class AnalysisBudgetError(PregussError):
    """The abstract interpreter exceeded its iteration budget (defensive)."""


class MissingLoopInvariant(PregussError):
    """VC generation hit a loop that has no invariant clause yet."""

    def __init__(self, node_ids: list[int]):
        self.node_ids = list(node_ids)
        super().__init__(
            "missing loop invariant for loop node(s): "
            + ", ".join(str(n) for n in self.node_ids)
        )


class ProhibitedRequiresError(PregussError):
    """A requires clause was about to be recorded for a phase-Callees callee."""


class GeneratorError(PregussError):
    """The specification generator backend failed permanently."""


class SmtError(PregussError):
    """SMT export or external solver interaction failed."""


class ReportError(PregussError):
    """Report serialization failed schema validation."""
