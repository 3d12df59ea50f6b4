"""End-to-end checks against a real server process and the installed CLI.

These tests boot the service as a subprocess (the same entry point an
operator would use) and talk to it only over HTTP, so they exercise the
actual wire contract rather than in-process shortcuts. They are skipped
when the server package or its CLI is not installed in the environment.
"""

import json
import os
import random
import shutil
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from tupli_sdk import (
    GridEnvWrapper,
    GridTimeSeriesEnv,
    LocalFileStorage,
    RemoteStorage,
    as_float_list,
    to_trainer_format,
)

REPO_ROOT = Path(__file__).resolve().parents[2]
RUN_SERVER = REPO_ROOT / "scripts" / "run_server.py"

ADMIN_USER = "admin"
ADMIN_PASSWORD = "integration-admin-pw"

SERIES = [round(5.0 + 0.25 * i, 2) for i in range(12)]

pytestmark = pytest.mark.skipif(
    not RUN_SERVER.exists() or shutil.which("tupli") is None,
    reason="server entry point or tupli CLI not installed",
)


def eq(key, value) -> str:
    return json.dumps({"type": "EQ", "key": key, "value": value})


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def start_server(root: Path) -> tuple[subprocess.Popen, str]:
    port = free_port()
    url = f"http://127.0.0.1:{port}"
    proc = subprocess.Popen(
        [
            sys.executable,
            str(RUN_SERVER),
            "--storage-root", str(root),
            "--listen", f"127.0.0.1:{port}",
            "--api-secret", "integration-secret",
            "--admin-username", ADMIN_USER,
            "--admin-password", ADMIN_PASSWORD,
            "--open-signup",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    deadline = time.monotonic() + 30.0
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            out = proc.stdout.read().decode("utf-8", "replace")
            raise RuntimeError(f"server exited with {proc.returncode}:\n{out}")
        try:
            httpx.get(f"{url}/benchmarks/list", timeout=1.0)
            return proc, url
        except httpx.TransportError:
            time.sleep(0.1)
    proc.terminate()
    raise RuntimeError("server did not come up within 30s")


def stop_server(proc: subprocess.Popen) -> None:
    proc.terminate()
    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    proc, url = start_server(tmp_path_factory.mktemp("server-root"))
    yield url
    stop_server(proc)


@pytest.fixture()
def cli(server, tmp_path):
    """Run the installed tupli CLI against the test server."""
    cache = tmp_path / "token-cache.json"

    def run(*argv: str, expect: int = 0) -> str:
        env = dict(os.environ, TUPLI_URL=server, TUPLI_TOKEN_CACHE=str(cache))
        proc = subprocess.run(
            ["tupli", *argv], env=env, capture_output=True, text=True
        )
        assert proc.returncode == expect, f"{argv}: {proc.stderr}"
        return proc.stdout

    return run


def user_storage(server, name: str) -> RemoteStorage:
    storage = RemoteStorage(server)
    storage.signup(name, f"{name}-pw-123")
    storage.login(name, f"{name}-pw-123")
    return storage


def record_episodes(wrapper, months: list[str], max_steps: int) -> dict[str, list]:
    """Roll one episode per month; returns the tuples the wrapper should post."""
    posted: dict[str, list] = {}
    for month in months:
        tuples = []
        rng = random.Random(int(month))
        wrapper.reset(seed=int(month), episode_metadata={"month": month})
        done = False
        while not done:
            action = rng.choice([-1.0, 1.0])
            obs, reward, terminated, truncated, info = wrapper.step(action)
            tuples.append(
                {
                    "state": as_float_list(obs),
                    "action": [action],
                    "reward": float(reward),
                    "terminated": terminated,
                    "timeout": truncated,
                }
            )
            done = terminated or truncated
        assert len(tuples) == max_steps  # wide grid: always runs to the limit
        posted[month] = tuples
    return posted


def test_remote_recording_flow(server, cli):
    storage = user_storage(server, "recorder")
    env = GridTimeSeriesEnv(width=256, series=SERIES, max_steps=25)
    wrapper = GridEnvWrapper(env, storage)
    benchmark_id = wrapper.store("grid-remote", "integration benchmark")

    expected = record_episodes(wrapper, ["06", "07", "08"], max_steps=25)

    episodes = storage.list_episodes(
        benchmark_filter={"type": "EQ", "key": "id", "value": benchmark_id},
        include_tuples=True,
    )
    assert len(episodes) == 3
    by_month = {e["metadata"]["month"]: e for e in episodes}
    assert set(by_month) == {"06", "07", "08"}
    for month, episode in by_month.items():
        got = [
            {k: t[k] for k in ("state", "action", "reward", "terminated", "timeout")}
            for t in episode["tuples"]
        ]
        assert got == expected[month]

    # the episode filter narrows server-side
    june = storage.list_episodes(
        benchmark_filter={"type": "EQ", "key": "id", "value": benchmark_id},
        episode_filter={"type": "EQ", "key": "month", "value": "06"},
    )
    assert [e["metadata"]["month"] for e in june] == ["06"]

    # the CLI sees exactly what the SDK sees
    cli("login", "--username", "recorder", "--password", "recorder-pw-123")
    rows = json.loads(
        cli("episode", "list", "--json", "--benchmark-filter", eq("id", benchmark_id))
    )
    assert {r["id"] for r in rows} == {e["id"] for e in episodes}
    assert sum(r["n_tuples"] for r in rows) == 75

    bench_rows = json.loads(
        cli("benchmark", "list", "--json", "--filter", eq("id", benchmark_id))
    )
    assert [b["id"] for b in bench_rows] == [benchmark_id]


def test_cli_export_round_trips_to_trainer(server, cli, tmp_path):
    storage = user_storage(server, "exporter")
    env = GridTimeSeriesEnv(width=256, series=SERIES, max_steps=30)
    wrapper = GridEnvWrapper(env, storage)
    benchmark_id = wrapper.store("grid-export", "export benchmark")
    (tuples,) = record_episodes(wrapper, ["06"], max_steps=30).values()

    out = tmp_path / "dataset.bin"
    cli("login", "--username", "exporter", "--password", "exporter-pw-123")
    summary = json.loads(
        cli(
            "dataset", "export", "--json",
            "--benchmark-filter", eq("id", benchmark_id),
            "--out", str(out),
        )
    )
    assert summary["episodes"] == 1
    assert summary["tuples"] == 30

    ds = to_trainer_format(out)
    assert ds.observations.tolist() == [t["state"] for t in tuples]
    assert ds.actions.tolist() == [t["action"] for t in tuples]
    assert ds.rewards.tolist() == [t["reward"] for t in tuples]
    assert ds.terminals.tolist() == [t["terminated"] for t in tuples]
    assert ds.timeouts.tolist() == [t["timeout"] for t in tuples]
    assert ds.episode_boundaries.tolist() == [30]
    assert ds.episode_slices() == [(0, 30)]


def test_artifact_round_trip_over_http(server):
    storage = user_storage(server, "artificer")
    env = GridTimeSeriesEnv(width=64, series=SERIES, max_steps=10)
    benchmark_id = GridEnvWrapper(env, storage).store("grid-artifact", "artifact check")

    loaded = GridEnvWrapper.load(benchmark_id, storage)
    assert isinstance(loaded.env, GridTimeSeriesEnv)
    assert loaded.env.series == SERIES
    assert loaded.env.width == 64
    assert loaded.env.max_steps == 10


def test_offline_root_served_as_is(tmp_path):
    """A directory written by LocalFileStorage works unchanged as STORAGE_ROOT."""
    root = tmp_path / "offline-root"
    local = LocalFileStorage(root, username=ADMIN_USER)
    env = GridTimeSeriesEnv(width=256, series=SERIES, max_steps=15)
    wrapper = GridEnvWrapper(env, local)
    benchmark_id = wrapper.store("grid-offline", "written without a server")
    record_episodes(wrapper, ["06"], max_steps=15)

    proc, url = start_server(root)
    remote = RemoteStorage(url)
    try:
        remote.login(ADMIN_USER, ADMIN_PASSWORD)

        served = remote.get_benchmark(benchmark_id)
        assert served["serialized"] == local.get_benchmark(benchmark_id)["serialized"]
        assert served["created_by"] == ADMIN_USER

        loaded = GridEnvWrapper.load(benchmark_id, remote)
        assert loaded.env.series == SERIES

        episodes = remote.list_episodes(
            benchmark_filter={"type": "EQ", "key": "id", "value": benchmark_id},
            include_tuples=True,
        )
        assert len(episodes) == 1
        assert episodes[0]["n_tuples"] == 15
    finally:
        remote.close()
        stop_server(proc)
