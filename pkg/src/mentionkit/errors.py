"""Exception types shared across the toolkit."""

from __future__ import annotations


class MentionKitError(Exception):
    """Base class for all toolkit errors."""


class CorpusError(MentionKitError):
    """Unreadable or undecodable input, or a document that violates corpus invariants."""


class RuleError(MentionKitError):
    """A pattern rule failed to compile or violates rule invariants."""


class StoreError(MentionKitError):
    """An annotation example or store file violates store invariants."""


class ModelError(MentionKitError):
    """Invalid training input or a snapshot file that cannot be decoded."""


class LoopError(MentionKitError):
    """An iteration was requested that the loop state does not allow."""
