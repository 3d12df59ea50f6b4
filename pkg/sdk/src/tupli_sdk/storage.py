"""Storage clients the wrapper talks to.

Two interchangeable modes: :class:`RemoteStorage` speaks the REST API of a
running tupli server; :class:`LocalFileStorage` writes the same on-disk
layout the server itself uses, so a directory filled offline can later be
served as-is by pointing a server's STORAGE_ROOT at it.

Both expose the same small surface:

    put_benchmark(serialized, metadata) -> benchmark record (dict)
    get_benchmark(benchmark_id)         -> benchmark record with "serialized"
    put_artifact(content, metadata)     -> artifact id
    get_artifact(artifact_id)           -> bytes
    put_episode(benchmark_id, tuples, metadata) -> episode record
"""

from __future__ import annotations

import hashlib
import json
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import httpx

from .errors import DuplicateBenchmark, NotFoundError, StorageError

MetadataMap = dict[str, Any]


def benchmark_hash(serialized: str) -> str:
    return hashlib.sha256(serialized.encode("utf-8")).hexdigest()


def artifact_hash(content: bytes, owner: str) -> str:
    return hashlib.sha256(content + owner.encode("utf-8")).hexdigest()


def _error_for(status: int, code: str, detail: str) -> StorageError:
    if code == "DUPLICATE_BENCHMARK":
        return DuplicateBenchmark(status, code, detail)
    if status == 404:
        return NotFoundError(status, code, detail)
    return StorageError(status, code, detail)


class RemoteStorage:
    """Minimal REST client for a tupli server."""

    def __init__(self, base_url: str, *, timeout: float = 30.0):
        self._http = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)
        self._token: str | None = None
        self.username: str | None = None

    def close(self) -> None:
        self._http.close()

    def login(self, username: str, password: str) -> None:
        data = self._call(
            "POST", "/access/token", json={"username": username, "password": password}
        ).json()
        self._token = data["access_token"]
        self.username = username

    def signup(self, username: str, password: str) -> None:
        self._call(
            "POST", "/access/signup", json={"username": username, "password": password}
        )

    def _call(self, method: str, path: str, **kwargs) -> httpx.Response:
        headers = kwargs.pop("headers", {})
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        response = self._http.request(method, path, headers=headers, **kwargs)
        if response.status_code >= 400:
            try:
                body = response.json()
                raise _error_for(body["status"], body["code"], body["detail"])
            except (ValueError, KeyError):
                raise StorageError(response.status_code, "HTTP_ERROR", response.text)
        return response

    # -- benchmarks ------------------------------------------------------------

    def put_benchmark(self, serialized: str, metadata: MetadataMap) -> dict:
        return self._call(
            "POST",
            "/benchmarks/create",
            json={
                "hash": benchmark_hash(serialized),
                "serialized": serialized,
                "metadata": metadata,
            },
        ).json()

    def get_benchmark(self, benchmark_id: str) -> dict:
        return self._call(
            "GET", "/benchmarks/load", params={"benchmark_id": benchmark_id}
        ).json()

    def list_benchmarks(self, flt: dict | None = None) -> list[dict]:
        params = {} if flt is None else {"benchmark_filter": json.dumps(flt)}
        return self._call("GET", "/benchmarks/list", params=params).json()

    def publish_benchmark(self, benchmark_id: str) -> dict:
        return self._call(
            "PUT", "/benchmarks/publish", params={"benchmark_id": benchmark_id}
        ).json()

    # -- artifacts ---------------------------------------------------------------

    def put_artifact(self, content: bytes, metadata: MetadataMap) -> str:
        response = self._call(
            "POST",
            "/artifacts/upload",
            files={"file": ("artifact.bin", content)},
            data={"metadata": json.dumps(metadata)},
        )
        return response.json()["id"]

    def get_artifact(self, artifact_id: str) -> bytes:
        return self._call(
            "GET", "/artifacts/download", params={"artifact_id": artifact_id}
        ).content

    def publish_artifact(self, artifact_id: str) -> dict:
        return self._call(
            "PUT", "/artifacts/publish", params={"artifact_id": artifact_id}
        ).json()

    # -- episodes ----------------------------------------------------------------

    def put_episode(
        self, benchmark_id: str, tuples: list[dict], metadata: MetadataMap
    ) -> dict:
        return self._call(
            "POST",
            "/episodes/record",
            json={
                "benchmark_id": benchmark_id,
                "tuples": tuples,
                "metadata": metadata,
            },
        ).json()

    def list_episodes(
        self,
        benchmark_filter: dict | None = None,
        episode_filter: dict | None = None,
        include_tuples: bool = False,
    ) -> list[dict]:
        params: dict[str, str] = {}
        if benchmark_filter is not None:
            params["benchmark_filter"] = json.dumps(benchmark_filter)
        if episode_filter is not None:
            params["episode_filter"] = json.dumps(episode_filter)
        if include_tuples:
            params["include_tuples"] = "true"
        return self._call("GET", "/episodes/list", params=params).json()

    def publish_episode(self, episode_id: str) -> dict:
        return self._call(
            "PUT", "/episodes/publish", params={"episode_id": episode_id}
        ).json()


class LocalFileStorage:
    """Server-compatible file layout, written directly without a server.

    Objects land in benchmarks/, artifacts/, and episodes/ under ``root``
    with the same file names and JSON shapes the service uses, owned by
    ``username`` and private. Pointing a server's STORAGE_ROOT at ``root``
    serves them unchanged.
    """

    def __init__(self, root: str | Path, username: str = "local"):
        self.root = Path(root)
        self.username = username
        for sub in ("benchmarks", "episodes", "artifacts"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _now() -> str:
        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")

    def _record(self, **fields) -> dict:
        return {
            **fields,
            "created_by": self.username,
            "is_public": False,
            "created_at": self._now(),
        }

    def put_benchmark(self, serialized: str, metadata: MetadataMap) -> dict:
        benchmark_id = benchmark_hash(serialized)
        path = self.root / "benchmarks" / f"{benchmark_id}.json"
        copies = json.loads(path.read_text("utf-8")) if path.exists() else []
        for copy in copies:
            if copy["created_by"] == self.username or copy["is_public"]:
                raise DuplicateBenchmark(
                    409, "DUPLICATE_BENCHMARK", f"benchmark {benchmark_id} exists"
                )
        record = self._record(
            id=benchmark_id, metadata=dict(metadata), serialized=serialized
        )
        path.write_text(json.dumps(copies + [record], indent=1), "utf-8")
        return record

    def get_benchmark(self, benchmark_id: str) -> dict:
        path = self.root / "benchmarks" / f"{benchmark_id}.json"
        if not path.exists():
            raise NotFoundError(404, "NOT_FOUND", f"benchmark {benchmark_id} not found")
        for copy in json.loads(path.read_text("utf-8")):
            if copy["created_by"] == self.username or copy["is_public"]:
                return copy
        raise NotFoundError(404, "NOT_FOUND", f"benchmark {benchmark_id} not found")

    def put_artifact(self, content: bytes, metadata: MetadataMap) -> str:
        artifact_id = artifact_hash(content, self.username)
        meta_path = self.root / "artifacts" / f"{artifact_id}.meta.json"
        if not meta_path.exists():
            (self.root / "artifacts" / f"{artifact_id}.bin").write_bytes(content)
            record = self._record(id=artifact_id, metadata=dict(metadata))
            meta_path.write_text(json.dumps(record, indent=1), "utf-8")
        return artifact_id

    def get_artifact(self, artifact_id: str) -> bytes:
        path = self.root / "artifacts" / f"{artifact_id}.bin"
        if not path.exists():
            raise NotFoundError(404, "NOT_FOUND", f"artifact {artifact_id} not found")
        return path.read_bytes()

    def put_episode(
        self, benchmark_id: str, tuples: list[dict], metadata: MetadataMap
    ) -> dict:
        self.get_benchmark(benchmark_id)  # owner-visible check, raises otherwise
        meta = dict(metadata)
        last = tuples[-1] if tuples else {}
        if not (last.get("terminated") or last.get("timeout")):
            meta["_complete"] = False
        record = self._record(
            id=str(uuid.uuid4()),
            benchmark_id=benchmark_id,
            metadata=meta,
            n_tuples=len(tuples),
            tuples=list(tuples),
        )
        path = self.root / "episodes" / f"{record['id']}.json"
        path.write_text(json.dumps(record, indent=1), "utf-8")
        return record
