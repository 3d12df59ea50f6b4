"""Acceptance gate: one test per headline guarantee of the service.

Every test carries an ``acceptance`` marker; the terminal summary section
prints one PASS/FAIL line per criterion. Expected values come from sources
independent of the implementation: a checked-in route table, a hand-copied
permission matrix with its own tiny interpreter, an operator-module filter
evaluator, and counts recomputed from the stored JSON fixtures.
"""

from __future__ import annotations

import json
import math
import operator
import random
import time
from collections import Counter
from pathlib import Path

import pytest
from fastapi.routing import APIRoute
from fastapi.testclient import TestClient

from conftest import ADMIN, ADMIN_PW, Api, FakeClock
from tupli.auth import Principal, authorize
from tupli.cli import main as cli_main
from tupli.dataset import Dataset, LocalSource, read_columnar, write_columnar
from tupli.filters import FilterNode, filter_to_json
from tupli.models import BenchmarkQuery, Episode, RLTuple, hash_benchmark
from tupli.storage import OnDiskStore, Viewer

DATA = Path(__file__).parent / "data"


class StaticSource:
    """Episode source over an in-memory list, for export plumbing."""

    def __init__(self, episodes):
        self.episodes = list(episodes)

    def fetch_episodes(self, benchmark_filter, episode_filter):
        return list(self.episodes)


def make_tuples(n: int, reward0: float = 0.0, dims=(2, 1)) -> list[RLTuple]:
    return [
        RLTuple(
            state=[reward0 + i] * dims[0],
            action=[0.5] * dims[1],
            reward=reward0 + i,
            info={},
            terminated=i == n - 1,
            timeout=False,
        )
        for i in range(n)
    ]


@pytest.mark.acceptance("endpoint parity: served routes match the checked-in table")
def test_endpoint_parity(make_app):
    started = time.monotonic()
    app = make_app()
    served = sorted(
        (method, route.path)
        for route in app.routes
        if isinstance(route, APIRoute)
        for method in route.methods
    )
    expected = sorted(
        (method, path)
        for method, path in json.loads((DATA / "api_routes.json").read_text())
    )
    assert served == expected
    assert len(served) == 22
    assert time.monotonic() - started < 1.0


# Permission matrix, copied cell by cell from the access-control design, with
# an interpreter written here so the test shares no code with tupli.auth.
# Scope names: all / all_public / own_public / own_private; own private
# objects are always accessible to their owner.
MATRIX = {
    "admin": {
        "read": "all",
        "create": "all",
        "delete": "all",
        "user_mgmt": "all",
    },
    "user_admin": {
        "read": "all_public",
        "create": "own_public",
        "delete": "own_private",
        "user_mgmt": "all",
    },
    "content_admin": {
        "read": "all",
        "create": "all",
        "delete": "all",
        "user_mgmt": "own_private",
    },
    "standard_user": {
        "read": "all_public",
        "create": "own_public",
        "delete": "own_private",
        "user_mgmt": "own_private",
    },
}


def scope_admits(scope: str, *, own: bool, public: bool) -> bool:
    if scope == "all":
        return True
    if scope == "all_public":
        return public or own
    if scope == "own_public":
        return own
    assert scope == "own_private"
    return own and not public


@pytest.mark.acceptance("permission matrix: 64 role/action/owner/visibility cells")
def test_permission_matrix():
    started = time.monotonic()
    checks = 0
    for role, row in MATRIX.items():
        principal = Principal(username="self", roles=(role,))
        for action, scope in row.items():
            for own in (True, False):
                for public in (False, True):
                    got = authorize(
                        principal,
                        action,
                        owner="self" if own else "other",
                        is_public=public,
                    )
                    want = scope_admits(scope, own=own, public=public)
                    assert got == want, (role, action, own, public)
                    checks += 1
    assert checks == 64
    assert time.monotonic() - started < 5.0


@pytest.mark.acceptance("token lifecycle at the 1 h access and 30 d refresh bounds")
def test_token_lifecycle(make_app):
    started = time.monotonic()
    clock = FakeClock()
    api = Api(TestClient(make_app(now=clock)))
    tokens = api.post(
        "/access/token", json={"username": ADMIN, "password": ADMIN_PW}
    ).json()

    def bearer(token):
        return {"Authorization": f"Bearer {token}"}

    clock.advance(59 * 60)
    assert api.get("/benchmarks/list", headers=bearer(tokens["access_token"])).status_code == 200
    clock.advance(2 * 60)
    assert api.get("/benchmarks/list", headers=bearer(tokens["access_token"])).status_code == 401

    refreshed = api.post(
        "/access/refresh-token", json={"refresh_token": tokens["refresh_token"]}
    )
    assert refreshed.status_code == 200
    assert api.get(
        "/benchmarks/list", headers=bearer(refreshed.json()["access_token"])
    ).status_code == 200

    clock.advance(29 * 86_400 - 61 * 60)  # 29 days after issue
    assert api.post(
        "/access/refresh-token", json={"refresh_token": tokens["refresh_token"]}
    ).status_code == 200
    clock.advance(2 * 86_400)  # 31 days after issue
    assert api.post(
        "/access/refresh-token", json={"refresh_token": tokens["refresh_token"]}
    ).status_code == 401
    assert time.monotonic() - started < 1.0


@pytest.mark.acceptance("content-addressed dedup for benchmarks and artifacts")
def test_dedup_semantics(make_app, tmp_path):
    started = time.monotonic()
    root = tmp_path / "dedup-root"
    api = Api(TestClient(make_app(storage_root=str(root))))
    alice = api.make_user("alice")
    bob = api.make_user("bob")

    body = {
        "hash": hash_benchmark("dup-env"),
        "serialized": "dup-env",
        "metadata": {"name": "dup", "description": "d"},
    }
    assert api.post("/benchmarks/create", json=body, headers=alice).status_code == 201
    repeat = api.post("/benchmarks/create", json=body, headers=alice)
    assert repeat.status_code == 409
    assert repeat.json()["code"] == "DUPLICATE_BENCHMARK"
    # same serialized env by a second user while the first copy is private
    second = api.post("/benchmarks/create", json=body, headers=bob)
    assert second.status_code == 201
    assert second.json()["id"] == body["hash"]

    upload = dict(
        files={"file": ("w.bin", b"\x00\x01payload")},
        data={"metadata": json.dumps({"kind": "weights"})},
        headers=alice,
    )
    first = api.post("/artifacts/upload", **upload)
    again = api.post("/artifacts/upload", **upload)
    assert first.status_code == 201
    assert again.status_code == 200
    assert first.json()["id"] == again.json()["id"]
    blobs = list((root / "artifacts").glob("*.bin"))
    assert len(blobs) == 1
    assert time.monotonic() - started < 1.0


# -- filter oracle -------------------------------------------------------------

_OPS = {
    "EQ": operator.eq,
    "NE": operator.ne,
    "GT": operator.gt,
    "GEQ": operator.ge,
    "LT": operator.lt,
    "LEQ": operator.le,
}
_ORDERED = {"GT", "GEQ", "LT", "LEQ"}


def _cls(value):
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    return "string"


def oracle_eval(node: FilterNode, doc: dict) -> bool:
    """Brute-force evaluator sharing no code with tupli.filters."""
    if node.type == "AND":
        return all(oracle_eval(c, doc) for c in node.children)
    if node.type == "OR":
        return any(oracle_eval(c, doc) for c in node.children)
    if node.key not in doc:
        return False
    stored = doc[node.key]
    if not isinstance(stored, (bool, int, float, str)):
        return False
    if _cls(stored) != _cls(node.value):
        return False
    if node.type in _ORDERED and _cls(stored) == "bool":
        return False
    return _OPS[node.type](stored, node.value)


_NAMES = ["alpha", "beta", "gamma", "delta"]
_FAMILIES = ["ems", "grid", "toy", "maze"]
_HOUSEHOLDS = ["hh-01", "hh-02", "hh-03"]


def _rand_bench_meta(rng) -> dict:
    meta = {"name": rng.choice(_NAMES), "description": "d"}
    if rng.random() < 0.8:
        meta["family"] = rng.choice(_FAMILIES)
    if rng.random() < 0.6:
        meta["difficulty"] = rng.choice([1, 2, 3, 2.5])
    if rng.random() < 0.3:
        meta["flag"] = rng.random() < 0.5
    if rng.random() < 0.3:
        meta["month"] = rng.choice(["01", "06", 6, 7.0])
    return meta


def _rand_episode_meta(rng) -> dict:
    meta = {}
    if rng.random() < 0.9:
        meta["month"] = rng.choice(["01", "06", "07", 6, 7, 12.0])
    if rng.random() < 0.7:
        meta["household"] = rng.choice(_HOUSEHOLDS)
    if rng.random() < 0.5:
        meta["quality"] = rng.choice([0, 1, 0.5, 10])
    if rng.random() < 0.3:
        meta["flag"] = rng.random() < 0.5
    return meta


def _rand_value(rng, docs):
    if docs and rng.random() < 0.5:
        doc = rng.choice(docs)
        if doc:
            return rng.choice(list(doc.values()))
    return rng.choice([0, 1, 2, 6, 2.5, "06", "alpha", "ems", True, False, "zz"])


def _rand_key(rng):
    return rng.choice(
        [
            "name", "family", "difficulty", "month", "household",
            "quality", "flag", "id", "benchmark_id", "missing",
        ]
    )


def _rand_filter(rng, docs, depth: int) -> FilterNode:
    if depth >= 4 or rng.random() < 0.45:
        return FilterNode(
            type=rng.choice(list(_OPS)), key=_rand_key(rng), value=_rand_value(rng, docs)
        )
    children = tuple(
        _rand_filter(rng, docs, depth + 1) for _ in range(rng.randint(2, 3))
    )
    return FilterNode(type=rng.choice(["AND", "OR"]), children=children)


def _rand_tuple_filter(rng, depth: int = 1) -> FilterNode:
    key = rng.choice(["reward", "terminated", "timeout", "info", "missing"])
    value = rng.choice(
        [0.0, 1.0, 50.0, 120.0, 200.0, True, False, 10, "x"]
    )
    op = rng.choice(list(_OPS))
    leaf = FilterNode(type=op, key=key, value=value)
    if depth >= 4 or rng.random() < 0.4:
        return leaf
    return FilterNode(
        type=rng.choice(["AND", "OR"]),
        children=(leaf, _rand_tuple_filter(rng, depth + 1)),
    )


@pytest.mark.acceptance("staged filtering equals a single-pass brute-force oracle")
def test_filter_oracle_equivalence(tmp_path):
    started = time.monotonic()
    rng = random.Random(0xF117E4)
    local = Viewer.local()
    for corpus in range(100):
        store = OnDiskStore(tmp_path / f"corpus{corpus}")
        bench_docs = {}
        for i in range(rng.randint(1, 50)):
            serialized = f"env-{corpus}-{i}"
            query = BenchmarkQuery(
                hash=hash_benchmark(serialized),
                serialized=serialized,
                metadata=_rand_bench_meta(rng),
            )
            bench = store.put_benchmark(query, owner="bob")
            bench_docs[bench.id] = {**bench.metadata, "id": bench.id}
        episodes = []
        bench_ids = list(bench_docs)
        for j in range(rng.randint(1, 200)):
            episode = store.put_episode(
                rng.choice(bench_ids),
                make_tuples(rng.randint(1, 20), reward0=float(j)),
                _rand_episode_meta(rng),
                owner="bob",
            )
            episodes.append(episode)
        episode_docs = {
            e.id: {**e.metadata, "id": e.id, "benchmark_id": e.benchmark_id}
            for e in episodes
        }

        all_docs = list(bench_docs.values()) + list(episode_docs.values())
        bf = None if rng.random() < 0.15 else _rand_filter(rng, all_docs, 1)
        ef = None if rng.random() < 0.15 else _rand_filter(rng, all_docs, 1)

        want_benchmarks = {
            bid for bid, doc in bench_docs.items()
            if bf is None or oracle_eval(bf, doc)
        }
        got_benchmarks = {b.id for b in store.list_benchmarks(local, bf)}
        assert got_benchmarks == want_benchmarks

        want = {
            e.id for e in episodes
            if e.benchmark_id in want_benchmarks
            and (ef is None or oracle_eval(ef, episode_docs[e.id]))
        }
        got = {e.id for e in store.query_episodes(local, bf, ef)}
        assert got == want, f"corpus {corpus}"

        if corpus % 10 == 0:
            tf = _rand_tuple_filter(rng)
            dataset = (
                Dataset(source=LocalSource(store))
                .with_benchmark_filter(bf)
                .with_episode_filter(ef)
                .with_tuple_filter(tf)
                .load()
            )
            want_counts = {}
            for episode in episodes:
                if episode.id not in want:
                    continue
                kept = sum(
                    1 for t in episode.tuples if oracle_eval(tf, t.filter_doc())
                )
                if kept:
                    want_counts[episode.id] = kept
            got_counts = {e.id: len(e.tuples) for e in dataset}
            assert got_counts == want_counts
    assert time.monotonic() - started < 30.0


@pytest.mark.acceptance("HTTP listing agrees with the filter oracle")
def test_filter_oracle_over_http(make_app):
    started = time.monotonic()
    rng = random.Random(0xBEEF)
    api = Api(TestClient(make_app()))
    for corpus in range(3):
        owner = f"bob{corpus}"
        headers = api.make_user(owner)
        bench_docs, episode_docs = {}, {}
        for i in range(rng.randint(2, 10)):
            serialized = f"http-env-{corpus}-{i}"
            body = {
                "hash": hash_benchmark(serialized),
                "serialized": serialized,
                "metadata": _rand_bench_meta(rng),
            }
            created = api.post("/benchmarks/create", json=body, headers=headers)
            assert created.status_code == 201, created.text
            row = created.json()
            bench_docs[row["id"]] = {**row["metadata"], "id": row["id"]}
        for j in range(rng.randint(5, 30)):
            body = {
                "benchmark_id": rng.choice(list(bench_docs)),
                "tuples": [t.to_dict() for t in make_tuples(3, reward0=float(j))],
                "metadata": _rand_episode_meta(rng),
            }
            created = api.post("/episodes/record", json=body, headers=headers)
            assert created.status_code == 201, created.text
            row = created.json()
            episode_docs[row["id"]] = {
                **row["metadata"], "id": row["id"], "benchmark_id": row["benchmark_id"],
            }
        all_docs = list(bench_docs.values()) + list(episode_docs.values())
        bf = _rand_filter(rng, all_docs, 1)
        ef = _rand_filter(rng, all_docs, 1)
        want_benchmarks = {
            bid for bid, doc in bench_docs.items() if oracle_eval(bf, doc)
        }
        want = {
            eid for eid, doc in episode_docs.items()
            if doc["benchmark_id"] in want_benchmarks and oracle_eval(ef, doc)
        }
        listed = api.get(
            "/episodes/list",
            params={
                "benchmark_filter": filter_to_json(bf),
                "episode_filter": filter_to_json(ef),
            },
            headers=headers,
        )
        assert listed.status_code == 200
        assert {row["id"] for row in listed.json()} == want
    assert time.monotonic() - started < 30.0


@pytest.mark.acceptance("byte-identical exports and uniform episode sampling")
def test_dataset_determinism(live_server, tmp_path, monkeypatch, capsys):
    started = time.monotonic()
    monkeypatch.setenv("TUPLI_URL", live_server)
    monkeypatch.setenv("TUPLI_TOKEN_CACHE", str(tmp_path / "cache.json"))
    assert cli_main(["login", "--username", ADMIN, "--password", ADMIN_PW]) == 0
    assert cli_main([
        "benchmark", "create", "--serialized", "det-env",
        "--name", "det", "--description", "d",
    ]) == 0
    bid = hash_benchmark("det-env")
    for k in range(6):
        tuples_file = tmp_path / f"t{k}.json"
        tuples_file.write_text(
            json.dumps([t.to_dict() for t in make_tuples(4, reward0=float(k))])
        )
        assert cli_main([
            "episode", "record", "--benchmark-id", bid,
            "--tuples-file", str(tuples_file), "--meta", f"month={k + 1}",
        ]) == 0
    out_a, out_b = tmp_path / "a.bin", tmp_path / "b.bin"
    for out in (out_a, out_b):
        assert cli_main([
            "dataset", "export", "--sample", "3", "--seed", "11",
            "--out", str(out),
        ]) == 0
    capsys.readouterr()
    assert out_a.read_bytes() == out_b.read_bytes()
    assert read_columnar(out_a).n_episodes == 3

    # frequency of single-episode draws over a 4-episode dataset
    episodes = [
        Episode(
            id=f"ep-{i}", benchmark_id="b", tuples=make_tuples(1),
            metadata={}, created_by="x", is_public=False, created_at="t",
        )
        for i in range(4)
    ]
    dataset = Dataset(source=StaticSource(episodes)).load()
    counts = Counter()
    for seed in range(10_000):
        picked = list(dataset.sample_episodes(1, seed))[0]
        counts[picked.id] += 1
    sigma = math.sqrt(10_000 * 0.25 * 0.75)  # 43.3
    assert set(counts) == {e.id for e in episodes}
    for value in counts.values():
        assert abs(value - 2_500) <= 3 * sigma, counts
    assert time.monotonic() - started < 30.0


@pytest.mark.acceptance("crash between blob and metadata writes leaves nothing listable")
def test_crash_safety(tmp_path):
    store = OnDiskStore(tmp_path / "crash")

    def power_cut():
        raise OSError("simulated power cut")

    store.fault_between_blob_and_meta = power_cut
    with pytest.raises(OSError):
        store.put_artifact(b"half-written", {"kind": "weights"}, "alice")
    store.fault_between_blob_and_meta = None
    assert store.list_artifacts(Viewer.local()) == []
    artifact, created = store.put_artifact(
        b"half-written", {"kind": "weights"}, "alice"
    )
    assert created
    assert [a.id for a in store.list_artifacts(Viewer.local())] == [artifact.id]


@pytest.mark.acceptance("EMS workflow end to end with summer-month filtering")
def test_ems_workflow(make_app, tmp_path):
    started = time.monotonic()
    fixture = json.loads((DATA / "ems_workflow.json").read_text())
    api = Api(TestClient(make_app()))
    bob = api.make_user("bob")
    alice = api.make_user("alice")

    # Bob shares the household profiles and the benchmark that references them.
    uploaded = api.post(
        "/artifacts/upload",
        files={"file": ("profiles.csv", fixture["profile_csv"].encode())},
        data={"metadata": json.dumps({"kind": "profiles"})},
        headers=bob,
    )
    assert uploaded.status_code == 201, uploaded.text
    artifact_id = uploaded.json()["id"]
    assert api.put(
        "/artifacts/publish", params={"artifact_id": artifact_id}, headers=bob
    ).status_code == 200

    serialized = fixture["benchmark"]["serialized"].replace(
        "__ARTIFACT_ID__", artifact_id
    )
    created = api.post(
        "/benchmarks/create",
        json={
            "hash": hash_benchmark(serialized),
            "serialized": serialized,
            "metadata": fixture["benchmark"]["metadata"],
        },
        headers=bob,
    )
    assert created.status_code == 201, created.text
    benchmark_id = created.json()["id"]
    assert api.put(
        "/benchmarks/publish", params={"benchmark_id": benchmark_id}, headers=bob
    ).status_code == 200

    for episode in fixture["episodes"]:
        recorded = api.post(
            "/episodes/record",
            json={
                "benchmark_id": benchmark_id,
                "tuples": episode["tuples"],
                "metadata": episode["metadata"],
            },
            headers=bob,
        )
        assert recorded.status_code == 201, recorded.text
        assert api.put(
            "/episodes/publish",
            params={"episode_id": recorded.json()["id"]},
            headers=bob,
        ).status_code == 200

    # Alice trains a seasonal baseline: benchmark + summer episodes only.
    loaded = api.get(
        "/benchmarks/load", params={"benchmark_id": benchmark_id}, headers=alice
    )
    assert loaded.status_code == 200
    assert loaded.json()["serialized"] == serialized
    fetched = api.get(
        "/artifacts/download", params={"artifact_id": artifact_id}, headers=alice
    )
    assert fetched.status_code == 200
    assert fetched.content == fixture["profile_csv"].encode()

    summer_months = {"06", "07", "08"}
    summer_filter = FilterNode(
        type="OR",
        children=tuple(
            FilterNode(type="EQ", key="month", value=month)
            for month in sorted(summer_months)
        ),
    )
    listed = api.get(
        "/episodes/list",
        params={
            "episode_filter": filter_to_json(summer_filter),
            "include_tuples": "true",
        },
        headers=alice,
    )
    assert listed.status_code == 200
    rows = listed.json()

    oracle_episodes = [
        e for e in fixture["episodes"] if e["metadata"]["month"] in summer_months
    ]
    oracle_rows = sum(len(e["tuples"]) for e in oracle_episodes)
    assert len(rows) == len(oracle_episodes)

    episodes = [Episode.from_dict(row) for row in rows]
    batch = Dataset(source=StaticSource(episodes)).load().to_columnar()
    out = tmp_path / "summer.bin"
    write_columnar(out, batch)
    reread = read_columnar(out)
    assert batch.n_tuples == oracle_rows
    assert reread.n_tuples == oracle_rows
    assert reread.n_episodes == len(oracle_episodes)
    assert reread.observations.shape == (oracle_rows, 4)
    assert time.monotonic() - started < 10.0
