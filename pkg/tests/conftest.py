"""Shared fixtures. Every test runs with outbound sockets disabled."""

import socket

import numpy as np
import pytest

from llana.space import ParamSpec, SearchSpace, weight_space

_real_connect = socket.socket.connect
NETWORK_ATTEMPTS = []


def _blocked_connect(self, address):
    NETWORK_ATTEMPTS.append(address)
    raise OSError(f"network access blocked in tests: {address!r}")


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    monkeypatch.setattr(socket.socket, "connect", _blocked_connect)
    monkeypatch.setattr(socket, "create_connection", lambda *a, **k: _blocked_connect(None, a[0] if a else None))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def space14():
    return weight_space(14)


@pytest.fixture
def mixed_space():
    return SearchSpace(
        (
            ParamSpec("lr", "continuous", 1e-4, 1.0, log_scale=True),
            ParamSpec("depth", "integer", 1, 12),
            ParamSpec("frac", "continuous", 0.0, 1.0),
            ParamSpec("crit", "categorical", categories=("gini", "entropy", "log_loss")),
        )
    )


VERDICTS = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        VERDICTS[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
    if NETWORK_ATTEMPTS:
        terminalreporter.write_line(f"network attempts during the run: {NETWORK_ATTEMPTS!r}")


def pytest_sessionfinish(session, exitstatus):
    if NETWORK_ATTEMPTS and exitstatus == 0:
        session.exitstatus = 1
