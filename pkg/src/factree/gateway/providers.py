"""Chat-completion transports.

Credentials come from the environment: ``OPENAI_API_KEY`` for
openai-compatible endpoints and ``ANTHROPIC_API_KEY`` for
anthropic-compatible ones, unless the model spec names another variable
in ``api_key_env``.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx

from ..errors import ProviderError, TransportError
from .types import ANTHROPIC, MOCK, OPENAI, ChatRequest

DEFAULT_KEY_ENV = {OPENAI: "OPENAI_API_KEY", ANTHROPIC: "ANTHROPIC_API_KEY"}
DEFAULT_ENDPOINT = {OPENAI: "https://api.openai.com/v1", ANTHROPIC: "https://api.anthropic.com"}
ANTHROPIC_VERSION = "2023-06-01"
RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504, 529}


class Provider(Protocol):
    def send(self, req: ChatRequest) -> tuple[str, Optional[int], Optional[int]]:
        """Return (text, prompt_tokens, completion_tokens); counts may be None."""
        ...


def _post(client: httpx.Client, url: str, payload: dict, headers: dict) -> dict:
    try:
        resp = client.post(url, json=payload, headers=headers)
    except httpx.TransportError as exc:
        raise TransportError(f"{url}: {exc}") from exc
    if resp.status_code in RETRYABLE_STATUS:
        raise TransportError(f"{url}: HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise ProviderError(f"{url}: HTTP {resp.status_code}: {resp.text[:500]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise TransportError(f"{url}: undecodable body") from exc


def _api_key(req: ChatRequest) -> str:
    env = req.model.api_key_env or DEFAULT_KEY_ENV[req.model.provider_kind]
    key = os.environ.get(env)
    if not key:
        raise ProviderError(f"{req.model.model_id}: environment variable {env} is not set")
    return key


class OpenAICompatibleProvider:
    """POST {endpoint}/chat/completions."""

    def __init__(self, client: httpx.Client | None = None, timeout: float = 600.0):
        self.client = client or httpx.Client(timeout=timeout)

    def send(self, req: ChatRequest):
        base = (req.model.endpoint or DEFAULT_ENDPOINT[OPENAI]).rstrip("/")
        payload = {
            "model": req.model.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        body = _post(self.client, f"{base}/chat/completions", payload,
                     {"Authorization": f"Bearer {_api_key(req)}"})
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {str(body)[:200]}") from exc
        usage = body.get("usage") or {}
        return text, usage.get("prompt_tokens"), usage.get("completion_tokens")


class AnthropicCompatibleProvider:
    """POST {endpoint}/v1/messages; system messages go in the top-level field."""

    def __init__(self, client: httpx.Client | None = None, timeout: float = 600.0):
        self.client = client or httpx.Client(timeout=timeout)

    def send(self, req: ChatRequest):
        base = (req.model.endpoint or DEFAULT_ENDPOINT[ANTHROPIC]).rstrip("/")
        system = "\n\n".join(m["content"] for m in req.messages if m["role"] == "system")
        payload = {
            "model": req.model.model_id,
            "messages": [m for m in req.messages if m["role"] != "system"],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if system:
            payload["system"] = system
        headers = {"x-api-key": _api_key(req), "anthropic-version": ANTHROPIC_VERSION}
        body = _post(self.client, f"{base}/v1/messages", payload, headers)
        try:
            text = "".join(b.get("text", "") for b in body["content"] if b.get("type") == "text")
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed messages body: {str(body)[:200]}") from exc
        usage = body.get("usage") or {}
        return text, usage.get("input_tokens"), usage.get("output_tokens")


def request_digest(req: ChatRequest) -> str:
    """Stable key of a request: template id, bindings and model, not raw prompt bytes."""
    if req.template_id is not None:
        key = {"template_id": req.template_id, "bindings": req.bindings or {},
               "model_id": req.model.model_id}
        if req.reprompt:
            key["reprompt"] = req.reprompt
    else:
        key = {"messages": req.messages, "model_id": req.model.model_id}
    blob = json.dumps(key, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class MockProvider:
    """Canned responses for offline runs.

    Looks for ``<fixture_dir>/<digest>.txt`` first; otherwise falls back to
    ``synthesize(req, digest)`` when one is configured.
    """

    def __init__(self, fixture_dir: str | Path | None = None,
                 synthesize: Callable[[ChatRequest, str], str] | None = None):
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.synthesize = synthesize

    def send(self, req: ChatRequest):
        digest = request_digest(req)
        fixture_dir = self.fixture_dir or (Path(req.model.endpoint) if req.model.endpoint else None)
        if fixture_dir is not None:
            path = fixture_dir / f"{digest}.txt"
            if path.is_file():
                return path.read_text(encoding="utf-8"), None, None
        if self.synthesize is not None:
            return self.synthesize(req, digest), None, None
        raise ProviderError(f"no mock fixture {digest}.txt for {req.model.model_id} ({req.template_id})")


def make_provider(kind: str, **kwargs) -> Provider:
    if kind == OPENAI:
        return OpenAICompatibleProvider(**kwargs)
    if kind == ANTHROPIC:
        return AnthropicCompatibleProvider(**kwargs)
    if kind == MOCK:
        return MockProvider(**kwargs)
    raise ProviderError(f"unknown provider kind {kind!r}")
