"""On-disk artifact store: keyed JSONL tables and the output-directory lock.

Records are appended and flushed as soon as they exist, so an interrupted
run loses at most the line being written. ``finalize`` rewrites a table
sorted by key, which makes the final bytes independent of completion order.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .errors import ConfigError

log = logging.getLogger(__name__)


def dumps(record: Any) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def safe_name(model_id: str) -> str:
    """A filesystem-safe form of a model id."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", model_id)


class JsonlTable:
    """A JSONL file of records addressed by ``key(record)``."""

    def __init__(self, path: str | Path, key: Callable[[dict], tuple]):
        self.path = Path(path)
        self.key = key
        self._lock = threading.Lock()
        self._rows: dict[tuple, dict] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from an interrupted write
                    log.warning("%s:%d: skipping unreadable line", self.path, n)
                    continue
                self._rows[self.key(rec)] = rec

    def __contains__(self, key: tuple) -> bool:
        with self._lock:
            return key in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def get(self, key: tuple) -> dict | None:
        with self._lock:
            return self._rows.get(key)

    def rows(self) -> list[dict]:
        with self._lock:
            return [self._rows[k] for k in sorted(self._rows)]

    def __iter__(self) -> Iterator[dict]:
        return iter(self.rows())

    def append(self, records: dict | Iterable[dict]) -> None:
        """Persist one record or a batch in a single locked write."""
        batch = [records] if isinstance(records, dict) else list(records)
        if not batch:
            return
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write("".join(dumps(r) + "\n" for r in batch))
                fh.flush()
            for r in batch:
                self._rows[self.key(r)] = r

    def finalize(self) -> None:
        with self._lock:
            if not self._rows and not self.path.exists():
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write("".join(dumps(self._rows[k]) + "\n" for k in sorted(self._rows)))
            os.replace(tmp, self.path)


class DirectoryLock:
    """Exclusive ownership of an output directory via an ``O_EXCL`` lock file."""

    NAME = ".factree.lock"

    def __init__(self, directory: str | Path):
        self.path = Path(directory) / self.NAME

    def __enter__(self) -> "DirectoryLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"{self.path.parent} is in use by another run (remove {self.path} if that run died)"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc) -> None:
        self.path.unlink(missing_ok=True)
