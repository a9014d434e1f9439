"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class UcmrError(Exception):
    """Base class for all pipeline errors."""


class AllSourcesEmpty(UcmrError):
    """Every source body normalized to the empty string."""


class DimensionMismatch(UcmrError):
    """Vectors or matrices with incompatible dimensions."""


class RemoteUnavailable(UcmrError):
    """The remote encoder endpoint could not be reached or misbehaved."""


class MissingEmbedding(UcmrError):
    """A file-store encoder has no entry for the requested text."""


class TooFewSentences(UcmrError):
    """A dissimilarity series needs at least two sentences."""


class EigensolveFailure(UcmrError):
    """The symmetric eigensolver did not converge."""


class ShapeMismatch(UcmrError):
    """Model input shape does not match the parameter shapes."""


class NonFiniteLoss(UcmrError):
    """A training loss became NaN or infinite."""


class EmptyRule(UcmrError):
    """A rule with no member sentences cannot drive question generation."""


class EmptyInput(UcmrError):
    """A metric was asked to aggregate zero records."""


class EmptyReference(UcmrError):
    """BLEU needs a non-empty reference."""


class InvalidState(UcmrError):
    """An operation was called in a dialog state that forbids it."""


class SessionNotFound(UcmrError):
    """No session with the given id exists."""


class NotAwaitingAnswer(UcmrError):
    """The session's last system turn is not an open inquiry."""


class UnknownCorpus(UcmrError):
    """No corpus bundle with the given reference is loaded."""


class PipelineError(UcmrError):
    """A pipeline stage failed; carries the stage name for context."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class CheckpointError(UcmrError):
    """A checkpoint file is malformed or has an unexpected shape table."""
