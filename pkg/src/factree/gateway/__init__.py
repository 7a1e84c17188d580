"""Chat-completion access shared by every pipeline stage."""

from .client import Gateway
from .ledger import CostLedger, LedgerEntry
from .prompts import TEMPLATE_IDS, load_template, placeholders, render_prompt, render_text
from .providers import (
    AnthropicCompatibleProvider,
    MockProvider,
    OpenAICompatibleProvider,
    request_digest,
)
from .types import ANTHROPIC, MOCK, OPENAI, ChatRequest, ChatResponse, ModelSpec, Structured

__all__ = [
    "ANTHROPIC",
    "AnthropicCompatibleProvider",
    "ChatRequest",
    "ChatResponse",
    "CostLedger",
    "Gateway",
    "LedgerEntry",
    "MOCK",
    "MockProvider",
    "ModelSpec",
    "OPENAI",
    "OpenAICompatibleProvider",
    "Structured",
    "TEMPLATE_IDS",
    "load_template",
    "placeholders",
    "render_prompt",
    "render_text",
    "request_digest",
]
