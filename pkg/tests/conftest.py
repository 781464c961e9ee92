import socket

import numpy as np
import pytest

from clothskill.camera import top_down_camera
from clothskill.sim import SimConfig, make_template

NETWORK_ATTEMPTS: list[tuple] = []
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Any outbound connection attempt is recorded and refused."""

    def refuse(*args, **kwargs):
        NETWORK_ATTEMPTS.append(args[1:] if args else kwargs)
        raise OSError("network access is disabled during tests")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    if NETWORK_ATTEMPTS and "A8" in ACCEPTANCE_LINES:
        ACCEPTANCE_LINES["A8"] = f"A8 FAIL {len(NETWORK_ATTEMPTS)} network connection attempts during the suite"
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def camera():
    return top_down_camera()


@pytest.fixture(scope="session")
def sim():
    return SimConfig()


@pytest.fixture(scope="session")
def square():
    return make_template("square")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
