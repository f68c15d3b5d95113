"""Shared exception types."""
from __future__ import annotations


class SpecificationError(ValueError):
    """A caller handed an object that violates a declared contract."""


class ProtocolError(RuntimeError):
    """A wire-protocol line could not be interpreted."""

    def __init__(self, message: str, *, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class TransportError(RuntimeError):
    """The external evaluator process is gone or unresponsive (distinct from a crash outcome)."""
