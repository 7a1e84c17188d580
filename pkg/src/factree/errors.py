"""Exception hierarchy shared by every stage of the pipeline."""


class FactreeError(Exception):
    """Base class for all errors raised by this package."""


class DocumentError(FactreeError):
    """A source document could not be read or decoded."""


class TokenizerError(FactreeError):
    """The tokenizer spec could not be resolved (missing or corrupt vocabulary)."""


class ParseError(FactreeError):
    """Structured model output violated its schema.

    The message is written so it can be quoted back to the model verbatim
    in a corrective re-prompt.
    """


class CoverageError(FactreeError):
    """A verdict set does not cover every key-fact exactly once."""


class TemplateError(FactreeError):
    """Unknown template id, or a placeholder left unbound."""


class ContextOverflowError(FactreeError):
    """The request would not fit in the model's context window."""


class TransportError(FactreeError):
    """A retryable provider failure (network error, 429, 5xx)."""


class RetryExhaustedError(FactreeError):
    """Transport retries ran out."""


class StructuredOutputError(FactreeError):
    """Re-prompting did not produce valid structured output."""

    def __init__(self, message: str, last_text: str = "", attempts: int = 0):
        super().__init__(message)
        self.last_text = last_text
        self.attempts = attempts


class StageError(FactreeError):
    """A pipeline stage failed for one work item."""

    def __init__(self, stage: str, ref: object, message: str):
        super().__init__(f"[{stage}] {ref}: {message}")
        self.stage = stage
        self.ref = ref


class PrerequisiteError(FactreeError):
    """A stage was asked to run before the artifacts it reads exist."""


class ConfigError(FactreeError):
    """The run manifest is invalid."""


class ReportSchemaError(FactreeError):
    """metrics.json is missing a field the report needs."""


class ProviderError(FactreeError):
    """A non-retryable provider failure (bad request, auth, missing fixture)."""
