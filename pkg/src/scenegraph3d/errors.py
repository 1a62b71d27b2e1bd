"""Exception types shared across the pipeline.

The CLI maps these onto its exit-code contract: usage errors exit 1,
data/validation errors exit 2, external-service errors exit 3.
"""

from __future__ import annotations


class SceneGraphError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SceneGraphError):
    """Invalid input data: parse failures, schema violations, bad references."""


class ParseError(DataError):
    """A file could not be parsed. Carries location context in the message."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" ({loc})"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class SchemaError(DataError):
    """A structured document violates the graph schema at `pointer`."""

    def __init__(self, message: str, pointer: str):
        super().__init__(f"{message} at {pointer}")
        self.pointer = pointer


class SceneValidationError(DataError):
    """A scene failed invariant validation. Carries the full violation list."""

    def __init__(self, violations: list[str]):
        lines = "\n".join(f"- {v}" for v in violations)
        super().__init__(f"scene validation failed:\n{lines}")
        self.violations = list(violations)


class DegenerateGeometryError(DataError):
    """Geometric input admits no answer: coincident points, zero vectors,
    or an object with no spatial extent."""


class FileAccessError(DataError):
    """A referenced file is missing or unreadable."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message}: {path}")
        self.path = path


class MissingFrontError(DataError):
    """An operation needed an object's front direction before it was estimated."""

    def __init__(self, object_id: int):
        super().__init__(f"object {object_id} has no estimated front direction")
        self.object_id = object_id


class ServiceError(SceneGraphError):
    """A model/embedding service failed after the retry budget was exhausted.

    `kind` is one of "timeout", "malformed", "http", "config".
    """

    def __init__(self, message: str, kind: str = "http"):
        super().__init__(message)
        self.kind = kind


class ResponseParseError(ServiceError):
    """The service replied, but the payload could not be interpreted.

    Not retryable. The raw payload is kept for diagnosis.
    """

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw response: {raw!r}", kind="malformed")
        self.raw = raw


class UnresolvableAnswerError(DataError):
    """The grounding answer matched no node id, caption, or class label."""

    def __init__(self, raw: str):
        super().__init__(f"could not resolve any graph node from answer: {raw!r}")
        self.raw = raw
