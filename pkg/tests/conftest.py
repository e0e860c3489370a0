from __future__ import annotations

import socket
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from tripletrag import RunConfig, build_index
from tripletrag.gateway import Gateway, MockBackend
from tripletrag.ingest import load_corpus

DATA = Path(__file__).parent / "data"

_SESSION_START = time.perf_counter()
_acceptance: list[tuple[str, str, float]] = []
SUITE_LIMIT = 120.0


@pytest.fixture(autouse=True)
def _no_network(request, monkeypatch):
    """Fail any test that opens a socket, unless it is marked ``live``."""
    if request.node.get_closest_marker("live"):
        return

    def refuse(*args, **kwargs):
        raise RuntimeError("network access attempted in an offline test")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


@contextmanager
def time_limit(seconds: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.2f}s, limit {seconds}s"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


def mock_gateway(transcript: str = "transcript.jsonl", **kwargs) -> Gateway:
    return Gateway(MockBackend.from_jsonl(DATA / transcript, **kwargs))


@pytest.fixture(scope="session")
def fixture_index():
    index, _ = build_index(load_corpus(DATA / "corpus.jsonl"), mock_gateway(), RunConfig())
    return index


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            outcome = "PASS"
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            outcome = "SKIP"
        else:
            outcome = "FAIL"
        _acceptance.append((marker.args[0], outcome, call.duration))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _acceptance:
        terminalreporter.write_line(f"{outcome:<5} {name}  ({duration:.2f}s)")
    total = time.perf_counter() - _SESSION_START
    suite_ok = total < SUITE_LIMIT and exitstatus == 0
    terminalreporter.write_line(
        f"{'PASS' if suite_ok else 'FAIL':<5} whole suite offline with mock backend in < {SUITE_LIMIT:.0f}s  "
        f"({total:.1f}s, exit status {int(exitstatus)})"
    )
