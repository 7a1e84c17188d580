from __future__ import annotations

import logging
import random
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Callable

from ..errors import (
    ContextOverflowError,
    ParseError,
    RetryExhaustedError,
    StructuredOutputError,
    TransportError,
)
from ..tokenizers import TokenizerSpec, get_tokenizer
from .ledger import CostLedger
from .providers import Provider, make_provider
from .types import ChatRequest, ChatResponse, Structured

log = logging.getLogger(__name__)

CORRECTION = (
    "Your previous answer could not be used: {reason}\n"
    "Answer again, following the required output format exactly."
)


class Gateway:
    """Provider-agnostic chat completion with retries, re-prompts and a cost ledger.

    Safe to share between worker threads. At most ``max_concurrency``
    requests are in flight per provider kind; ``peak_in_flight`` records the
    highest level observed.
    """

    def __init__(
        self,
        providers: dict[str, Provider] | None = None,
        tokenizer: TokenizerSpec = TokenizerSpec(),
        ledger: CostLedger | None = None,
        max_concurrency: int = 4,
        retry_limit: int = 5,
        backoff_base: float = 1.0,
        reprompt_limit: int = 3,
        sleep: Callable[[float], None] = time.sleep,
        seed: int | None = None,
        stage_max_tokens: dict[str, int] | None = None,
    ):
        self.providers = dict(providers or {})
        self.tokenizer = tokenizer
        self.ledger = ledger if ledger is not None else CostLedger()
        self.max_concurrency = max_concurrency
        self.retry_limit = retry_limit
        self.backoff_base = backoff_base
        self.reprompt_limit = reprompt_limit
        # per-stage output budgets; stages fall back to their own defaults
        self.stage_max_tokens = dict(stage_max_tokens or {})
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self._slots: dict[str, threading.BoundedSemaphore] = {}
        self.in_flight: dict[str, int] = defaultdict(int)
        self.peak_in_flight: dict[str, int] = defaultdict(int)

    def provider(self, kind: str) -> Provider:
        with self._lock:
            if kind not in self.providers:
                self.providers[kind] = make_provider(kind)
            return self.providers[kind]

    @contextmanager
    def _slot(self, kind: str):
        with self._lock:
            sem = self._slots.setdefault(kind, threading.BoundedSemaphore(self.max_concurrency))
        with sem:
            with self._lock:
                self.in_flight[kind] += 1
                self.peak_in_flight[kind] = max(self.peak_in_flight[kind], self.in_flight[kind])
            try:
                yield
            finally:
                with self._lock:
                    self.in_flight[kind] -= 1

    def estimate_prompt_tokens(self, req: ChatRequest) -> int:
        tok = get_tokenizer(self.tokenizer)
        return sum(tok.count(m["content"]) for m in req.messages)

    def complete(self, req: ChatRequest) -> ChatResponse:
        model = req.model
        prompt_est = self.estimate_prompt_tokens(req)
        if prompt_est + req.max_tokens > model.context_window:
            raise ContextOverflowError(
                f"{model.model_id}: ~{prompt_est} prompt + {req.max_tokens} output tokens "
                f"exceed the {model.context_window}-token window"
            )
        provider = self.provider(model.provider_kind)
        for attempt in range(1, self.retry_limit + 1):
            t0 = time.monotonic()
            try:
                with self._slot(model.provider_kind):
                    text, p_tok, c_tok = provider.send(req)
            except TransportError as exc:
                if attempt == self.retry_limit:
                    raise RetryExhaustedError(
                        f"{model.model_id}: gave up after {attempt} attempts: {exc}"
                    ) from exc
                delay = self.backoff_base * 2 ** (attempt - 1) * (1 + self._rng.random())
                log.warning("%s attempt %d failed (%s); retrying in %.1fs",
                            model.model_id, attempt, exc, delay)
                self._sleep(delay)
                continue
            latency = time.monotonic() - t0
            if p_tok is None:
                p_tok = prompt_est
            if c_tok is None:
                c_tok = get_tokenizer(self.tokenizer).count(text)
            self.ledger.record(model.model_id, req.tag, p_tok, c_tok)
            return ChatResponse(text, p_tok, c_tok, latency, attempt)
        raise AssertionError("unreachable")

    def complete_structured(self, req: ChatRequest, validator: Callable[[str], Any]) -> Structured:
        """Ask until ``validator`` accepts the reply, re-prompting with its complaint.

        ``validator`` raises :class:`ParseError` with a reason fit to show the
        model. Up to ``reprompt_limit`` corrective turns follow the first ask.
        """
        messages = list(req.messages)
        last_text = last_reason = ""
        for n in range(self.reprompt_limit + 1):
            attempt_req = ChatRequest(
                model=req.model, messages=messages, max_tokens=req.max_tokens,
                temperature=req.temperature, tag=req.tag, template_id=req.template_id,
                bindings=req.bindings, reprompt=n,
            )
            resp = self.complete(attempt_req)
            last_text = resp.text
            try:
                value = validator(resp.text)
            except ParseError as exc:
                last_reason = str(exc)
                log.info("%s/%s: invalid structured output (%s)", req.model.model_id, req.tag, exc)
                messages = messages + [
                    {"role": "assistant", "content": resp.text},
                    {"role": "user", "content": CORRECTION.format(reason=exc)},
                ]
                continue
            return Structured(value, n + 1, resp)
        raise StructuredOutputError(
            f"{req.model.model_id}/{req.tag}: no valid output after {self.reprompt_limit + 1} attempts "
            f"(last problem: {last_reason})",
            last_text=last_text,
            attempts=self.reprompt_limit + 1,
        )
