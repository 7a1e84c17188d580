from __future__ import annotations

import threading
from collections import defaultdict
from pathlib import Path

import pytest

from factree.gateway import ChatRequest, Gateway, ModelSpec
from factree.gateway.mock import synthesize
from factree.gateway.providers import request_digest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def alice_text() -> str:
    return (DATA / "alice.txt").read_text(encoding="utf-8")


class ScriptedProvider:
    """Answers by template id; counts calls. ``script[template_id]`` is a
    string, a list consumed one reply per call, or ``callable(req)``."""

    def __init__(self, script=None, fallback=synthesize):
        self.script = dict(script or {})
        self.fallback = fallback
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()
        self._served = defaultdict(int)

    def send(self, req: ChatRequest):
        with self._lock:
            self.calls.append(req)
            n = self._served[req.template_id]
            self._served[req.template_id] += 1
        reply = self.script.get(req.template_id)
        if reply is None:
            return self.fallback(req, request_digest(req)), None, None
        if callable(reply):
            return reply(req), None, None
        if isinstance(reply, list):
            return reply[min(n, len(reply) - 1)], None, None
        return reply, None, None


@pytest.fixture
def judge() -> ModelSpec:
    return ModelSpec("judge", "mock")


def make_gateway(provider, **kw) -> Gateway:
    kw.setdefault("sleep", lambda s: None)
    return Gateway(providers={"mock": provider}, **kw)


# -- acceptance reporting --------------------------------------------------------
# Tests marked ``@pytest.mark.criterion(name)`` contribute to one PASS/FAIL
# line per criterion, printed at the end of the session.

_outcomes: dict[str, list[tuple[str, bool]]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _outcomes[marker.args[0]].append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _outcomes.items():
        failed = [n for n, ok in results if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = f" ({len(results) - len(failed)}/{len(results)} cases)" if len(results) > 1 else ""
        terminalreporter.write_line(f"{status} {name}{detail}")
        for n in failed:
            terminalreporter.write_line(f"     failing case: {n}")
