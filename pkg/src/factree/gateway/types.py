from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from ..errors import ConfigError

OPENAI = "openai-compatible"
ANTHROPIC = "anthropic-compatible"
MOCK = "mock"
PROVIDER_KINDS = (OPENAI, ANTHROPIC, MOCK)


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    provider_kind: str = MOCK
    context_window: int = 128_000
    max_output_tokens: int = 4_096
    # base URL for HTTP providers, fixture directory for the mock
    endpoint: Optional[str] = None
    # env var holding the credential; defaults per provider kind
    api_key_env: Optional[str] = None
    # USD per million tokens
    prompt_price: float = 0.0
    completion_price: float = 0.0

    def __post_init__(self) -> None:
        if self.provider_kind not in PROVIDER_KINDS:
            raise ConfigError(f"{self.model_id}: unknown provider_kind {self.provider_kind!r}")
        if not (self.context_window >= self.max_output_tokens > 0):
            raise ConfigError(
                f"{self.model_id}: need context_window >= max_output_tokens > 0 "
                f"(got {self.context_window}, {self.max_output_tokens})"
            )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model field(s): {sorted(unknown)}")
        if "model_id" not in d:
            raise ConfigError("model entry needs a model_id")
        return cls(**d)


@dataclass
class ChatRequest:
    model: ModelSpec
    messages: list[dict[str, str]]
    max_tokens: int
    temperature: float = 0.0
    tag: str = ""
    # set when the messages came from a stored template; keys the mock
    template_id: Optional[str] = None
    bindings: Optional[dict[str, str]] = None
    # number of corrective re-prompts already appended
    reprompt: int = 0

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0
    attempt: int = 1


@dataclass
class Structured:
    """A validated structured reply and how many asks it took."""

    value: Any
    attempt: int
    response: ChatResponse = field(repr=False, default=None)
