#!/usr/bin/env python3
"""Run the EMS collaboration workflow against a throwaway local server.

Boots a server on an ephemeral port with a temporary storage root, then
plays both sides of a small research collaboration: an operator account
uploads household profiles, a benchmark, and a year of daily episodes; a
researcher account filters the summer months and exports a columnar
training file. Prints each step; leaves nothing behind but the export.
"""

from __future__ import annotations

import argparse
import json
import tempfile
import threading
import time
from pathlib import Path

import uvicorn

from tupli.client import ApiClient
from tupli.dataset import Dataset, read_columnar, write_columnar
from tupli.filters import eq, or_filter
from tupli.server import ServerConfig, create_app

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "data" / "ems_workflow.json"


def start_server(storage_root: str) -> tuple[uvicorn.Server, str]:
    config = ServerConfig(
        storage_root=storage_root,
        api_secret="demo-secret",
        admin_username="admin",
        admin_password="demo-admin-pw",
    )
    server = uvicorn.Server(
        uvicorn.Config(create_app(config), host="127.0.0.1", port=0, log_level="error")
    )
    threading.Thread(target=server.run, daemon=True).start()
    while not server.started:
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    return server, f"http://127.0.0.1:{port}"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out", default="summer_dataset.bin", help="columnar export path"
    )
    args = parser.parse_args()
    fixture = json.loads(FIXTURE.read_text())

    with tempfile.TemporaryDirectory(prefix="tupli-demo-") as tmp:
        server, url = start_server(tmp)
        print(f"server up at {url}")

        admin = ApiClient(url, cache=None)
        admin.login("admin", "demo-admin-pw")
        admin.signup("bob", "bob-pw")
        admin.signup("alice", "alice-pw")
        print("created accounts bob and alice")

        bob = ApiClient(url, cache=None)
        bob.login("bob", "bob-pw")
        artifact = bob.upload_artifact(
            fixture["profile_csv"].encode(), {"kind": "profiles"}
        )
        bob.publish_artifact(artifact["id"])
        serialized = fixture["benchmark"]["serialized"].replace(
            "__ARTIFACT_ID__", artifact["id"]
        )
        benchmark = bob.create_benchmark(serialized, fixture["benchmark"]["metadata"])
        bob.publish_benchmark(benchmark["id"])
        print(f"benchmark {benchmark['id'][:12]}... published")
        for episode in fixture["episodes"]:
            recorded = bob.record_episode(
                benchmark["id"], episode["tuples"], episode["metadata"]
            )
            bob.publish_episode(recorded["id"])
        print(f"recorded {len(fixture['episodes'])} episodes")

        alice = ApiClient(url, cache=None)
        alice.login("alice", "alice-pw")
        summer = or_filter(
            [eq("month", "06"), eq("month", "07"), eq("month", "08")]
        )
        dataset = (
            Dataset(source=alice).with_episode_filter(summer).load()
        )
        batch = dataset.to_columnar()
        write_columnar(args.out, batch)
        check = read_columnar(args.out)
        print(
            f"exported {check.n_episodes} summer episodes "
            f"({check.n_tuples} tuples, obs dim {check.observations.shape[1]}) "
            f"to {args.out}"
        )

        for client in (admin, bob, alice):
            client.close()
        server.should_exit = True


if __name__ == "__main__":
    main()
