"""On-disk object store for benchmarks, episodes, artifacts, and users.

Layout under the root directory::

    benchmarks/<hash>.json        JSON array of per-owner copies
    episodes/<id>.json            canonical episode encoding
    artifacts/<hash>.meta.json    canonical artifact metadata
    artifacts/<hash>.bin          raw blob bytes
    users/<username>.json         account record

A benchmark file holds an *array* because the dedup rule is
visibility-scoped: a second user may create a benchmark with the same hash
while the first copy is private, so one id can name several copies (at most
one per owner). Episode and artifact ids are globally unique.

All writes go through atomic replace (temp file + ``os.replace``) and are
serialized by a store-wide lock, which also makes the dedup
check-then-insert atomic; reads are lockless. Artifact blobs are written
before their metadata, so a crash between the two leaves an orphan ``.bin``
that no listing ever reports, never metadata without bytes.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from .errors import (
    Conflict,
    DuplicateBenchmark,
    DuplicateUser,
    NotFound,
    ValidationFailed,
)
from .filters import FilterNode, eval_filter
from .models import (
    Artifact,
    Benchmark,
    BenchmarkQuery,
    Episode,
    MetadataMap,
    RLTuple,
    UserRecord,
    hash_artifact,
    is_hex_digest,
    is_valid_username,
    new_episode_id,
    validate_episode,
)

_EPISODE_ID_RE = re.compile(r"^[0-9a-fA-F-]{8,64}$")


def utc_now_iso() -> str:
    """RFC 3339 UTC timestamp with microseconds; lexicographic == chronological."""
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class Viewer:
    """Read-visibility context: who is looking, and with which scope.

    ``sees_all`` corresponds to roles whose read scope covers every object;
    otherwise visibility is own objects plus public ones. An anonymous
    viewer (username None, sees_all False) sees public objects only.
    """

    username: str | None
    sees_all: bool = False

    @classmethod
    def anonymous(cls) -> "Viewer":
        return cls(username=None, sees_all=False)

    @classmethod
    def local(cls) -> "Viewer":
        """Unrestricted single-user context for local (non-server) storage use."""
        return cls(username="local", sees_all=True)

    def can_see(self, obj: Any) -> bool:
        if self.sees_all:
            return True
        if obj.is_public:
            return True
        return self.username is not None and obj.created_by == self.username


def _matches(flt: FilterNode | None, obj: Any) -> bool:
    return flt is None or eval_filter(flt, obj.filter_doc())


class OnDiskStore:
    """Embedded document-and-blob store, the backend for server and local use."""

    def __init__(self, root: str | Path, now: Callable[[], str] | None = None):
        self.root = Path(root)
        self._now = now or utc_now_iso
        self._lock = threading.RLock()
        # Fault-injection seam for crash-safety tests: called between the
        # artifact blob write and its metadata write.
        self.fault_between_blob_and_meta: Callable[[], None] | None = None
        for sub in ("benchmarks", "episodes", "artifacts", "users"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- file primitives ---------------------------------------------------

    def _write_atomic(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def _write_json(self, path: Path, obj: Any) -> None:
        self._write_atomic(path, json.dumps(obj, indent=1).encode("utf-8"))

    @staticmethod
    def _read_json(path: Path) -> Any | None:
        try:
            return json.loads(path.read_text("utf-8"))
        except FileNotFoundError:
            return None

    # -- benchmarks ----------------------------------------------------------

    def _benchmark_path(self, benchmark_id: str) -> Path:
        return self.root / "benchmarks" / f"{benchmark_id}.json"

    def _benchmark_copies(self, benchmark_id: str) -> list[Benchmark]:
        if not is_hex_digest(benchmark_id):
            return []
        raw = self._read_json(self._benchmark_path(benchmark_id))
        if raw is None:
            return []
        copies = [Benchmark.from_dict(item) for item in raw]
        copies.sort(key=lambda b: (b.created_at, b.created_by))
        return copies

    def _write_benchmark_copies(self, benchmark_id: str, copies: list[Benchmark]) -> None:
        path = self._benchmark_path(benchmark_id)
        if copies:
            self._write_json(path, [c.to_dict() for c in copies])
        else:
            path.unlink(missing_ok=True)

    def _resolve_benchmark(
        self, copies: list[Benchmark], viewer: Viewer
    ) -> Benchmark | None:
        """Pick the copy an id refers to for this viewer: own, public, then any."""
        for copy in copies:
            if viewer.username is not None and copy.created_by == viewer.username:
                return copy
        for copy in copies:
            if copy.is_public:
                return copy
        if viewer.sees_all and copies:
            return copies[0]
        return None

    def put_benchmark(self, query: BenchmarkQuery, owner: str) -> Benchmark:
        """Create a private benchmark; reject duplicates the owner can see."""
        query.validate()
        with self._lock:
            copies = self._benchmark_copies(query.hash)
            for copy in copies:
                if copy.created_by == owner or copy.is_public:
                    raise DuplicateBenchmark(
                        f"benchmark {query.hash} already exists"
                    )
            benchmark = Benchmark(
                id=query.hash,
                serialized=query.serialized,
                metadata=dict(query.metadata),
                created_by=owner,
                is_public=False,
                created_at=self._now(),
            )
            self._write_benchmark_copies(query.hash, copies + [benchmark])
        return benchmark

    def get_benchmark(self, benchmark_id: str, viewer: Viewer) -> Benchmark:
        resolved = self._resolve_benchmark(self._benchmark_copies(benchmark_id), viewer)
        if resolved is None:
            raise NotFound(f"benchmark {benchmark_id} not found")
        return resolved

    def list_benchmarks(
        self, viewer: Viewer, flt: FilterNode | None = None
    ) -> list[Benchmark]:
        out = []
        for path in (self.root / "benchmarks").glob("*.json"):
            for copy in self._benchmark_copies(path.stem):
                if viewer.can_see(copy) and _matches(flt, copy):
                    out.append(copy)
        out.sort(key=lambda b: (b.created_at, b.id, b.created_by))
        return out

    def publish_benchmark(self, benchmark_id: str, viewer: Viewer) -> Benchmark:
        with self._lock:
            copies = self._benchmark_copies(benchmark_id)
            target = self._resolve_benchmark(copies, viewer)
            if target is None:
                raise NotFound(f"benchmark {benchmark_id} not found")
            if target.is_public:
                return target
            published = Benchmark(**{**target.__dict__, "is_public": True})
            copies = [published if c is target else c for c in copies]
            self._write_benchmark_copies(benchmark_id, copies)
        return published

    def delete_benchmark(self, benchmark_id: str, viewer: Viewer) -> None:
        """Remove the viewer-resolved copy.

        Cascades to the requester's own episodes and rejects the deletion if
        another user's episodes would lose their last visible copy of this
        benchmark.
        """
        with self._lock:
            copies = self._benchmark_copies(benchmark_id)
            target = self._resolve_benchmark(copies, viewer)
            if target is None:
                raise NotFound(f"benchmark {benchmark_id} not found")
            remaining = [c for c in copies if c.created_by != target.created_by]

            def still_visible(owner: str) -> bool:
                return any(c.is_public or c.created_by == owner for c in remaining)

            referencing = [
                e for e in self._iter_episodes() if e.benchmark_id == benchmark_id
            ]
            cascade = []
            for episode in referencing:
                if still_visible(episode.created_by):
                    continue
                if episode.created_by == viewer.username:
                    cascade.append(episode)
                else:
                    raise Conflict(
                        "DANGLING_EPISODES",
                        f"benchmark {benchmark_id} is referenced by episodes "
                        f"of other users",
                    )
            for episode in cascade:
                self._episode_path(episode.id).unlink(missing_ok=True)
            self._write_benchmark_copies(benchmark_id, remaining)

    # -- episodes ------------------------------------------------------------

    def _episode_path(self, episode_id: str) -> Path:
        if not _EPISODE_ID_RE.match(episode_id or ""):
            raise NotFound(f"episode {episode_id!r} not found")
        return self.root / "episodes" / f"{episode_id}.json"

    def _iter_episodes(self):
        for path in (self.root / "episodes").glob("*.json"):
            raw = self._read_json(path)
            if raw is not None:
                yield Episode.from_dict(raw)

    def put_episode(
        self,
        benchmark_id: str,
        tuples: list[RLTuple],
        metadata: MetadataMap,
        owner: str,
    ) -> Episode:
        """Persist a private episode against a benchmark the owner can see.

        Episodes whose final tuple carries no end flag are accepted as
        partial (historical) data and tagged with metadata ``_complete=False``.
        """
        violation = validate_episode(tuples)
        if violation is not None:
            raise ValidationFailed(f"invalid episode: {violation}")
        if not isinstance(metadata, dict):
            raise ValidationFailed("episode metadata must be a map")
        with self._lock:
            copies = self._benchmark_copies(benchmark_id)
            visible = any(
                c.created_by == owner or c.is_public for c in copies
            )
            if not visible:
                raise NotFound(f"benchmark {benchmark_id} not found")
            meta = dict(metadata)
            last = tuples[-1]
            if not (last.terminated or last.timeout):
                meta["_complete"] = False
            episode = Episode(
                id=new_episode_id(),
                benchmark_id=benchmark_id,
                tuples=list(tuples),
                metadata=meta,
                created_by=owner,
                is_public=False,
                created_at=self._now(),
            )
            self._write_json(self._episode_path(episode.id), episode.to_dict())
        return episode

    def get_episode(self, episode_id: str, viewer: Viewer) -> Episode:
        raw = self._read_json(self._episode_path(episode_id))
        if raw is None:
            raise NotFound(f"episode {episode_id} not found")
        episode = Episode.from_dict(raw)
        if not viewer.can_see(episode):
            raise NotFound(f"episode {episode_id} not found")
        return episode

    def list_episodes(
        self, viewer: Viewer, flt: FilterNode | None = None
    ) -> list[Episode]:
        out = [
            e for e in self._iter_episodes() if viewer.can_see(e) and _matches(flt, e)
        ]
        out.sort(key=lambda e: (e.created_at, e.id))
        return out

    def publish_episode(self, episode_id: str, viewer: Viewer) -> Episode:
        """Make an episode public; requires a public copy of its benchmark."""
        with self._lock:
            episode = self.get_episode(episode_id, viewer)
            if episode.is_public:
                return episode
            copies = self._benchmark_copies(episode.benchmark_id)
            if not any(c.is_public for c in copies):
                raise Conflict(
                    "BENCHMARK_NOT_PUBLIC",
                    f"benchmark {episode.benchmark_id} must be published before "
                    f"its episodes",
                )
            published = Episode(**{**episode.__dict__, "is_public": True})
            self._write_json(self._episode_path(episode_id), published.to_dict())
        return published

    def delete_episode(self, episode_id: str) -> None:
        with self._lock:
            path = self._episode_path(episode_id)
            if not path.exists():
                raise NotFound(f"episode {episode_id} not found")
            path.unlink()

    def query_episodes(
        self,
        viewer: Viewer,
        benchmark_filter: FilterNode | None = None,
        episode_filter: FilterNode | None = None,
    ) -> list[Episode]:
        """Two-stage listing: benchmark filter first, then episode filter.

        Tuple-level filtering never happens here; it is a client concern.
        """
        benchmark_ids = {
            b.id for b in self.list_benchmarks(viewer, benchmark_filter)
        }
        return [
            e
            for e in self.list_episodes(viewer, episode_filter)
            if e.benchmark_id in benchmark_ids
        ]

    # -- artifacts -----------------------------------------------------------

    def _artifact_meta_path(self, artifact_id: str) -> Path:
        return self.root / "artifacts" / f"{artifact_id}.meta.json"

    def _artifact_bin_path(self, artifact_id: str) -> Path:
        return self.root / "artifacts" / f"{artifact_id}.bin"

    def put_artifact(
        self, content: bytes, metadata: MetadataMap, owner: str
    ) -> tuple[Artifact, bool]:
        """Idempotent upsert keyed by hash(content || owner).

        Returns (artifact, created): a repeated upload returns the stored
        record unchanged and writes nothing.
        """
        if not isinstance(content, (bytes, bytearray)):
            raise ValidationFailed("artifact content must be bytes")
        if not isinstance(metadata, dict):
            raise ValidationFailed("artifact metadata must be a map")
        artifact_id = hash_artifact(bytes(content), owner)
        with self._lock:
            existing = self._read_json(self._artifact_meta_path(artifact_id))
            if existing is not None:
                stored = Artifact.from_dict(
                    existing, content=self._artifact_bin_path(artifact_id).read_bytes()
                )
                return stored, False
            artifact = Artifact(
                id=artifact_id,
                content=bytes(content),
                metadata=dict(metadata),
                created_by=owner,
                is_public=False,
                created_at=self._now(),
            )
            # Blob first, metadata last: a crash in between leaves an orphan
            # blob that no listing reports, never metadata without bytes.
            self._write_atomic(self._artifact_bin_path(artifact_id), artifact.content)
            if self.fault_between_blob_and_meta is not None:
                self.fault_between_blob_and_meta()
            self._write_json(self._artifact_meta_path(artifact_id), artifact.to_dict())
        return artifact, True

    def get_artifact(self, artifact_id: str, viewer: Viewer) -> Artifact:
        if not is_hex_digest(artifact_id):
            raise NotFound(f"artifact {artifact_id!r} not found")
        raw = self._read_json(self._artifact_meta_path(artifact_id))
        if raw is None:
            raise NotFound(f"artifact {artifact_id} not found")
        artifact = Artifact.from_dict(
            raw, content=self._artifact_bin_path(artifact_id).read_bytes()
        )
        if not viewer.can_see(artifact):
            raise NotFound(f"artifact {artifact_id} not found")
        return artifact

    def list_artifacts(
        self, viewer: Viewer, flt: FilterNode | None = None
    ) -> list[Artifact]:
        out = []
        for path in (self.root / "artifacts").glob("*.meta.json"):
            raw = self._read_json(path)
            if raw is None:
                continue
            artifact = Artifact.from_dict(raw)
            if viewer.can_see(artifact) and _matches(flt, artifact):
                out.append(artifact)
        out.sort(key=lambda a: (a.created_at, a.id))
        return out

    def publish_artifact(self, artifact_id: str, viewer: Viewer) -> Artifact:
        with self._lock:
            artifact = self.get_artifact(artifact_id, viewer)
            if artifact.is_public:
                return artifact
            published = Artifact(**{**artifact.__dict__, "is_public": True})
            self._write_json(self._artifact_meta_path(artifact_id), published.to_dict())
        return published

    def delete_artifact(self, artifact_id: str) -> None:
        with self._lock:
            meta = self._artifact_meta_path(artifact_id)
            if not is_hex_digest(artifact_id) or not meta.exists():
                raise NotFound(f"artifact {artifact_id} not found")
            # Metadata first: an interrupted delete leaves an unlisted blob,
            # preserving the "every meta has its bin" invariant.
            meta.unlink()
            self._artifact_bin_path(artifact_id).unlink(missing_ok=True)

    # -- users ---------------------------------------------------------------

    def _user_path(self, username: str) -> Path:
        if not is_valid_username(username):
            raise ValidationFailed(f"invalid username {username!r}")
        return self.root / "users" / f"{username}.json"

    def put_user(self, record: UserRecord) -> None:
        with self._lock:
            path = self._user_path(record.username)
            if path.exists():
                raise DuplicateUser(f"user {record.username} already exists")
            self._write_json(path, record.to_dict())

    def update_user(self, record: UserRecord) -> None:
        with self._lock:
            path = self._user_path(record.username)
            if not path.exists():
                raise NotFound(f"user {record.username} not found")
            self._write_json(path, record.to_dict())

    def get_user(self, username: str) -> UserRecord | None:
        if not is_valid_username(username):
            return None
        raw = self._read_json(self.root / "users" / f"{username}.json")
        return None if raw is None else UserRecord.from_dict(raw)

    def list_users(self) -> list[UserRecord]:
        out = []
        for path in (self.root / "users").glob("*.json"):
            raw = self._read_json(path)
            if raw is not None:
                out.append(UserRecord.from_dict(raw))
        out.sort(key=lambda u: u.username)
        return out

    def delete_user(self, username: str) -> None:
        """Remove the account and every private object it owns.

        Public objects survive with their ownership label retained.
        """
        with self._lock:
            path = self._user_path(username)
            if not path.exists():
                raise NotFound(f"user {username} not found")
            for episode in list(self._iter_episodes()):
                if episode.created_by == username and not episode.is_public:
                    self._episode_path(episode.id).unlink(missing_ok=True)
            for bm_path in (self.root / "benchmarks").glob("*.json"):
                copies = self._benchmark_copies(bm_path.stem)
                kept = [
                    c
                    for c in copies
                    if not (c.created_by == username and not c.is_public)
                ]
                if len(kept) != len(copies):
                    self._write_benchmark_copies(bm_path.stem, kept)
            for meta_path in (self.root / "artifacts").glob("*.meta.json"):
                raw = self._read_json(meta_path)
                if raw is None:
                    continue
                artifact = Artifact.from_dict(raw)
                if artifact.created_by == username and not artifact.is_public:
                    self.delete_artifact(artifact.id)
            path.unlink()
