"""Persisted domain types, identity hashing, and structural validation.

Benchmarks are identified by the SHA-256 digest of their serialized
environment string; artifacts by the digest of their content bytes
concatenated with the uploader's name. All types define a canonical JSON
form (snake_case keys, exactly the field names below) which doubles as the
HTTP wire format and the on-disk file format.

Artifact content is raw bytes and never rides inside JSON: the canonical
artifact encoding covers every field except ``content``, which travels as a
separate binary payload (multipart upload, octet-stream download, ``.bin``
file on disk).
"""

from __future__ import annotations

import hashlib
import math
import re
import uuid
from dataclasses import dataclass, field
from typing import Any

from .errors import ValidationFailed

Scalar = str | int | float | bool
MetadataMap = dict[str, Any]

_HEX_DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")
_USERNAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,63}$")


def hash_benchmark(serialized: str) -> str:
    """Lowercase hex SHA-256 digest of the UTF-8 bytes of ``serialized``."""
    return hashlib.sha256(serialized.encode("utf-8")).hexdigest()


def hash_artifact(content: bytes, created_by: str) -> str:
    """Lowercase hex SHA-256 of the content bytes concatenated with the owner name.

    The owner is part of the identity: identical content uploaded by two
    different users yields two distinct artifacts.
    """
    if not created_by:
        raise ValidationFailed("artifact owner must be non-empty")
    return hashlib.sha256(content + created_by.encode("utf-8")).hexdigest()


def new_episode_id() -> str:
    return str(uuid.uuid4())


def is_hex_digest(value: str) -> bool:
    return isinstance(value, str) and bool(_HEX_DIGEST_RE.match(value))


def is_valid_username(value: str) -> bool:
    """Usernames double as file names, so the charset is restricted."""
    return isinstance(value, str) and bool(_USERNAME_RE.match(value))


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_finite_number(value: Any) -> bool:
    return _is_number(value) and math.isfinite(value)


def _check_metadata(value: Any, what: str) -> MetadataMap:
    if not isinstance(value, dict) or any(not isinstance(k, str) for k in value):
        raise ValidationFailed(f"{what} must be a string-keyed map")
    return value


@dataclass(frozen=True)
class RLTuple:
    """One environment interaction: observation, action, reward, and flags.

    ``timeout`` covers truncation (episode cut off by a step limit) as
    opposed to ``terminated`` (the task itself ended). At most one of them
    meaningfully ends an episode; both may be false for intermediate steps.
    """

    state: list[float]
    action: list[float]
    reward: float
    info: MetadataMap = field(default_factory=dict)
    terminated: bool = False
    timeout: bool = False

    def check(self) -> str | None:
        """Return a reason string if this tuple is structurally invalid."""
        if not isinstance(self.state, list) or not self.state:
            return "state must be a non-empty list"
        if any(not _is_finite_number(v) for v in self.state):
            return "state values must be finite numbers"
        if not isinstance(self.action, list) or not self.action:
            return "action must be a non-empty list"
        if any(not _is_finite_number(v) for v in self.action):
            return "action values must be finite numbers"
        if not _is_finite_number(self.reward):
            return "reward must be a finite number"
        if not isinstance(self.info, dict):
            return "info must be a string-keyed map"
        if not isinstance(self.terminated, bool) or not isinstance(self.timeout, bool):
            return "terminated and timeout must be booleans"
        return None

    def filter_doc(self) -> MetadataMap:
        """Document seen by tuple-level filters: fields plus nested info."""
        return {
            "reward": self.reward,
            "terminated": self.terminated,
            "timeout": self.timeout,
            "info": self.info,
        }

    def to_dict(self) -> dict:
        return {
            "state": list(self.state),
            "action": list(self.action),
            "reward": self.reward,
            "info": dict(self.info),
            "terminated": self.terminated,
            "timeout": self.timeout,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "RLTuple":
        if not isinstance(data, dict):
            raise ValidationFailed("tuple must be an object")
        try:
            tup = cls(
                state=list(data["state"]),
                action=list(data["action"]),
                reward=data["reward"],
                info=data.get("info", {}),
                terminated=data.get("terminated", False),
                timeout=data.get("timeout", False),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationFailed(f"malformed tuple: {exc}") from exc
        reason = tup.check()
        if reason is not None:
            raise ValidationFailed(f"malformed tuple: {reason}")
        return tup


@dataclass(frozen=True)
class EpisodeViolation:
    """First failing episode invariant, with the offending tuple index.

    ``index`` is None for episode-level violations (e.g. an empty tuple list).
    """

    index: int | None
    reason: str

    def __str__(self) -> str:
        if self.index is None:
            return self.reason
        return f"{self.reason} (at tuple index {self.index})"


def validate_episode(tuples: list[RLTuple]) -> EpisodeViolation | None:
    """Check the episode invariants over an ordered tuple list.

    Returns None when all invariants hold:
      - the list is non-empty,
      - every tuple is structurally valid,
      - no tuple before the last has terminated or timeout set,
      - all tuples share one state dimension and one action dimension.

    The final tuple may carry no end flag: partial episodes from historical
    data are legal and tagged by the server instead of rejected.
    """
    if not isinstance(tuples, list) or not tuples:
        return EpisodeViolation(None, "episode must contain at least one tuple")
    state_dim = action_dim = None
    last = len(tuples) - 1
    for i, tup in enumerate(tuples):
        if not isinstance(tup, RLTuple):
            return EpisodeViolation(i, "not an RLTuple")
        reason = tup.check()
        if reason is not None:
            return EpisodeViolation(i, reason)
        if i == 0:
            state_dim, action_dim = len(tup.state), len(tup.action)
        else:
            if len(tup.state) != state_dim:
                return EpisodeViolation(
                    i, f"state dimension {len(tup.state)} != {state_dim}"
                )
            if len(tup.action) != action_dim:
                return EpisodeViolation(
                    i, f"action dimension {len(tup.action)} != {action_dim}"
                )
        if i < last and (tup.terminated or tup.timeout):
            return EpisodeViolation(i, "episode-ending flag before the last tuple")
    return None


@dataclass(frozen=True)
class Episode:
    """Ordered tuple sequence bound to a benchmark, with free-form metadata.

    ``tuples`` may be None for header-only views (listings requested without
    tuple payloads); a stored episode always has a non-empty list.
    """

    id: str
    benchmark_id: str
    tuples: list[RLTuple] | None
    metadata: MetadataMap
    created_by: str
    is_public: bool
    created_at: str
    n_tuples: int | None = None

    def __post_init__(self):
        if self.tuples is not None and self.n_tuples is None:
            object.__setattr__(self, "n_tuples", len(self.tuples))

    def filter_doc(self) -> MetadataMap:
        """Metadata document plus the reserved ``id``/``benchmark_id`` keys."""
        doc = dict(self.metadata)
        doc["id"] = self.id
        doc["benchmark_id"] = self.benchmark_id
        return doc

    def to_dict(self, include_tuples: bool = True) -> dict:
        out = {
            "id": self.id,
            "benchmark_id": self.benchmark_id,
            "metadata": dict(self.metadata),
            "created_by": self.created_by,
            "is_public": self.is_public,
            "created_at": self.created_at,
            "n_tuples": self.n_tuples,
        }
        if include_tuples and self.tuples is not None:
            out["tuples"] = [t.to_dict() for t in self.tuples]
        return out

    @classmethod
    def from_dict(cls, data: Any) -> "Episode":
        if not isinstance(data, dict):
            raise ValidationFailed("episode must be an object")
        try:
            raw_tuples = data.get("tuples")
            tuples = (
                None
                if raw_tuples is None
                else [RLTuple.from_dict(t) for t in raw_tuples]
            )
            return cls(
                id=data["id"],
                benchmark_id=data["benchmark_id"],
                tuples=tuples,
                metadata=_check_metadata(data.get("metadata", {}), "episode metadata"),
                created_by=data["created_by"],
                is_public=bool(data["is_public"]),
                created_at=data["created_at"],
                n_tuples=data.get("n_tuples"),
            )
        except KeyError as exc:
            raise ValidationFailed(f"episode missing field {exc}") from exc


@dataclass(frozen=True)
class Benchmark:
    """Serialized environment with its content hash as identity.

    Different users may each hold a copy with the same id (the dedup rule
    only rejects duplicates the creator can see), so the id alone does not
    name a unique record; (id, created_by) does.
    """

    id: str
    serialized: str
    metadata: MetadataMap
    created_by: str
    is_public: bool
    created_at: str

    def filter_doc(self) -> MetadataMap:
        doc = dict(self.metadata)
        doc["id"] = self.id
        return doc

    def to_dict(self, include_serialized: bool = True) -> dict:
        out = {
            "id": self.id,
            "metadata": dict(self.metadata),
            "created_by": self.created_by,
            "is_public": self.is_public,
            "created_at": self.created_at,
        }
        if include_serialized:
            out["serialized"] = self.serialized
        return out

    @classmethod
    def from_dict(cls, data: Any) -> "Benchmark":
        if not isinstance(data, dict):
            raise ValidationFailed("benchmark must be an object")
        try:
            return cls(
                id=data["id"],
                serialized=data.get("serialized", ""),
                metadata=_check_metadata(data["metadata"], "benchmark metadata"),
                created_by=data["created_by"],
                is_public=bool(data["is_public"]),
                created_at=data["created_at"],
            )
        except KeyError as exc:
            raise ValidationFailed(f"benchmark missing field {exc}") from exc


def check_benchmark_metadata(metadata: Any) -> MetadataMap:
    """Benchmark metadata must carry a non-empty name and a description."""
    metadata = _check_metadata(metadata, "benchmark metadata")
    name = metadata.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationFailed("benchmark metadata requires a non-empty 'name'")
    if not isinstance(metadata.get("description"), str):
        raise ValidationFailed("benchmark metadata requires a 'description' string")
    return metadata


@dataclass(frozen=True)
class BenchmarkQuery:
    """Creation request: client-computed hash, payload, and metadata."""

    hash: str
    serialized: str
    metadata: MetadataMap

    def validate(self) -> None:
        if not isinstance(self.serialized, str):
            raise ValidationFailed("serialized must be a string")
        if self.hash != hash_benchmark(self.serialized):
            raise ValidationFailed("hash does not match SHA-256 of serialized")
        check_benchmark_metadata(self.metadata)

    def to_dict(self) -> dict:
        return {
            "hash": self.hash,
            "serialized": self.serialized,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "BenchmarkQuery":
        if not isinstance(data, dict):
            raise ValidationFailed("benchmark query must be an object")
        try:
            return cls(
                hash=data["hash"],
                serialized=data["serialized"],
                metadata=_check_metadata(data.get("metadata", {}), "benchmark metadata"),
            )
        except KeyError as exc:
            raise ValidationFailed(f"benchmark query missing field {exc}") from exc


@dataclass(frozen=True)
class Artifact:
    """Opaque byte blob with metadata.

    ``content`` is None on listing views (metadata only) and bytes when the
    blob has been loaded. Zero-length content is legal and distinct from an
    unloaded view.
    """

    id: str
    content: bytes | None
    metadata: MetadataMap
    created_by: str
    is_public: bool
    created_at: str

    def filter_doc(self) -> MetadataMap:
        doc = dict(self.metadata)
        doc["id"] = self.id
        return doc

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "metadata": dict(self.metadata),
            "created_by": self.created_by,
            "is_public": self.is_public,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Any, content: bytes | None = None) -> "Artifact":
        if not isinstance(data, dict):
            raise ValidationFailed("artifact must be an object")
        try:
            return cls(
                id=data["id"],
                content=content,
                metadata=_check_metadata(data.get("metadata", {}), "artifact metadata"),
                created_by=data["created_by"],
                is_public=bool(data["is_public"]),
                created_at=data["created_at"],
            )
        except KeyError as exc:
            raise ValidationFailed(f"artifact missing field {exc}") from exc


@dataclass(frozen=True)
class UserRecord:
    """Stored account: username, salted password hash, role set.

    The hash never leaves the storage/auth layers; API responses project
    username and roles only.
    """

    username: str
    password_hash: str
    roles: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "username": self.username,
            "password_hash": self.password_hash,
            "roles": list(self.roles),
        }

    def public_dict(self) -> dict:
        return {"username": self.username, "roles": list(self.roles)}

    @classmethod
    def from_dict(cls, data: Any) -> "UserRecord":
        try:
            return cls(
                username=data["username"],
                password_hash=data["password_hash"],
                roles=tuple(data["roles"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationFailed(f"malformed user record: {exc}") from exc
