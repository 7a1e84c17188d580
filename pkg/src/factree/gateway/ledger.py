from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass
class LedgerEntry:
    model: str
    stage: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    requests: int = 0
    est_cost: float = 0.0


class CostLedger:
    """Thread-safe token and spend accumulator keyed by (model, stage)."""

    def __init__(self, prices: dict[str, tuple[float, float]] | None = None):
        # model_id -> (prompt, completion) USD per million tokens
        self.prices = dict(prices or {})
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], LedgerEntry] = {}

    def record(self, model: str, stage: str, prompt_tokens: int, completion_tokens: int) -> None:
        p_price, c_price = self.prices.get(model, (0.0, 0.0))
        with self._lock:
            e = self._entries.setdefault((model, stage), LedgerEntry(model, stage))
            e.prompt_tokens += prompt_tokens
            e.completion_tokens += completion_tokens
            e.requests += 1
            e.est_cost = (e.prompt_tokens * p_price + e.completion_tokens * c_price) / 1e6

    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return [LedgerEntry(**asdict(e)) for _, e in sorted(self._entries.items())]

    def totals(self) -> LedgerEntry:
        total = LedgerEntry("*", "*")
        for e in self.entries():
            total.prompt_tokens += e.prompt_tokens
            total.completion_tokens += e.completion_tokens
            total.requests += e.requests
            total.est_cost += e.est_cost
        return total

    def requests(self, stage: str | None = None) -> int:
        return sum(e.requests for e in self.entries() if stage is None or e.stage == stage)

    def to_json(self) -> str:
        rows = [asdict(e) for e in self.entries()]
        for r in rows:
            r["est_cost"] = round(r["est_cost"], 6)
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def load(self, path: str | Path) -> None:
        """Merge a previously saved ledger, so resumed runs keep their totals."""
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
        with self._lock:
            for r in rows:
                e = self._entries.setdefault((r["model"], r["stage"]), LedgerEntry(r["model"], r["stage"]))
                e.prompt_tokens += r["prompt_tokens"]
                e.completion_tokens += r["completion_tokens"]
                e.requests += r["requests"]
                e.est_cost += r["est_cost"]
