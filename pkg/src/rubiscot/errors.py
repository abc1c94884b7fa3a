"""Exception hierarchy shared by every stage of the assessment pipeline."""

from __future__ import annotations


class RubiscotError(Exception):
    """Base class for all errors raised by this package."""


class EmptyDocument(RubiscotError):
    pass


class BackendUnavailable(RubiscotError):
    """Transport or auth failure after the configured number of retries."""


class ContextOverflow(RubiscotError):
    def __init__(self, length: int, budget: int) -> None:
        super().__init__(f"request of {length} chars exceeds context budget of {budget}")
        self.length = length
        self.budget = budget


class UnscriptedPrompt(RubiscotError):
    """The mock backend received a request no script entry matches."""

    def __init__(self, stage_id: str, fingerprint: str) -> None:
        super().__init__(f"no scripted response for stage {stage_id!r} (fingerprint {fingerprint})")
        self.stage_id = stage_id
        self.fingerprint = fingerprint


class UnparseableResponse(RubiscotError):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class MissingCriterion(UnparseableResponse):
    def __init__(self, criterion_id: str) -> None:
        super().__init__(f"response omits criterion {criterion_id!r}")
        self.criterion_id = criterion_id


class MissingBinding(RubiscotError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name


class InvalidChunkParams(RubiscotError):
    pass


class ZeroVector(RubiscotError):
    pass


class DimensionMismatch(RubiscotError):
    pass


class EmptyStore(RubiscotError):
    pass


class OutOfRange(RubiscotError):
    pass


class ValidationFailed(RubiscotError):
    def __init__(self, violations: list[str]) -> None:
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class RubricPassError(RubiscotError):
    """A rubric pass failed; ``first_run`` keeps pass 1 when pass 2 is the failure."""

    def __init__(self, pass_index: int, cause: Exception, first_run=None) -> None:
        super().__init__(f"rubric pass {pass_index} failed: {cause}")
        self.pass_index = pass_index
        self.cause = cause
        self.first_run = first_run


class IncompleteRun(RubiscotError):
    pass
