"""Shared fixtures: stores, in-process API apps, and a live HTTP server.

Password hashing runs with a tiny work factor here; the production default
stays strong. The acceptance tests (marked ``acceptance``) get a dedicated
terminal section with one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import threading
import time

import pytest
from fastapi.testclient import TestClient

from tupli.server import ServerConfig, create_app
from tupli.storage import OnDiskStore

FAST_ITERATIONS = 10
TEST_SECRET = "test-secret"
ADMIN = "root"
ADMIN_PW = "rootpw"


class FakeClock:
    """Injectable unix-seconds clock for token lifecycle tests."""

    def __init__(self, start: int = 1_700_000_000):
        self.now = start

    def __call__(self) -> int:
        return self.now

    def advance(self, seconds: int) -> None:
        self.now += seconds


@pytest.fixture
def store(tmp_path) -> OnDiskStore:
    return OnDiskStore(tmp_path / "data")


@pytest.fixture
def make_app(tmp_path):
    """App factory with fast hashing; kwargs forward to ServerConfig/create_app."""

    counter = iter(range(1000))

    def _make(*, now=None, **config_kwargs):
        config_kwargs.setdefault(
            "storage_root", str(tmp_path / f"srv{next(counter)}")
        )
        config = ServerConfig(
            api_secret=TEST_SECRET,
            admin_username=ADMIN,
            admin_password=ADMIN_PW,
            **config_kwargs,
        )
        return create_app(config, now=now, pbkdf2_iterations=FAST_ITERATIONS)

    return _make


class Api:
    """TestClient wrapper with login and signup helpers."""

    def __init__(self, client: TestClient):
        self.client = client

    def __getattr__(self, name):
        return getattr(self.client, name)

    def login(self, username: str, password: str) -> dict[str, str]:
        response = self.client.post(
            "/access/token", json={"username": username, "password": password}
        )
        assert response.status_code == 200, response.text
        return {"Authorization": f"Bearer {response.json()['access_token']}"}

    def make_user(
        self, username: str, roles: list[str] | None = None, password: str = "pw"
    ) -> dict[str, str]:
        admin = self.login(ADMIN, ADMIN_PW)
        response = self.client.post(
            "/access/signup",
            json={"username": username, "password": password, "roles": roles},
            headers=admin,
        )
        assert response.status_code == 201, response.text
        return self.login(username, password)


@pytest.fixture
def api(make_app) -> Api:
    return Api(TestClient(make_app()))


@pytest.fixture
def live_server(tmp_path):
    """Real uvicorn server on an ephemeral port, for CLI and client tests."""
    import uvicorn

    config = ServerConfig(
        storage_root=str(tmp_path / "live-srv"),
        api_secret=TEST_SECRET,
        admin_username=ADMIN,
        admin_password=ADMIN_PW,
        open_signup=True,
    )
    app = create_app(config, pbkdf2_iterations=FAST_ITERATIONS)
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


# -- acceptance summary ------------------------------------------------------

_LABELS: dict[str, str] = {}
_OUTCOMES: dict[str, str] = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            _LABELS[item.nodeid] = marker.args[0] if marker.args else item.name


def pytest_runtest_logreport(report):
    if report.nodeid not in _LABELS:
        return
    if report.when == "call":
        _OUTCOMES[report.nodeid] = "PASS" if report.passed else "FAIL"
    elif not report.passed:
        _OUTCOMES[report.nodeid] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LABELS:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, label in _LABELS.items():
        outcome = _OUTCOMES.get(nodeid, "FAIL")
        terminalreporter.write_line(f"[{outcome}] {label}")
