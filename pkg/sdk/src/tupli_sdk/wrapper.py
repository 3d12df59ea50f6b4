"""Environment wrapper: serialize/store benchmarks, record episodes.

The wrapper sits between an environment and a storage client. ``store()``
serializes the environment (uploading embedded artifacts separately) and
registers it as a benchmark; ``step()`` transparently records interaction
tuples and posts one episode per finished trajectory; ``load()`` rebuilds a
working environment from a stored benchmark id.

Subclasses customize serialization by overriding ``_serialize`` and
``_deserialize``; the defaults encode the environment's ``params`` dict as
deterministic JSON and rebuild the class by import path.
"""

from __future__ import annotations

import importlib
import json
from typing import Any

from .envbase import Env, as_float_list
from .errors import SerializationError

# Key under which the default deserializer finds the class import path.
_TYPE_KEY = "type"
_PARAMS_KEY = "params"


class EnvWrapper:
    def __init__(
        self,
        env: Env,
        storage,
        *,
        recording: bool = True,
        episode_metadata: dict | None = None,
    ):
        self.env = env
        self.storage = storage
        self.recording = recording
        self.episode_metadata = dict(episode_metadata or {})
        self.benchmark_id: str | None = None
        self._buffer: list[dict] = []
        self._reset_metadata: dict | None = None

    # -- serialization ---------------------------------------------------------

    def _serialize(self) -> str:
        """Encode the wrapped env; override to extract artifacts.

        Default: deterministic JSON of the env's ``params`` dict plus the
        class import path. Not every environment fits this; subclasses that
        embed bulk data should upload it via ``self.storage.put_artifact``
        and store the returned hash instead.
        """
        params = getattr(self.env, "params", None)
        if not isinstance(params, dict):
            raise SerializationError(
                f"{type(self.env).__name__} has no params dict; override _serialize()"
            )
        cls = type(self.env)
        doc = {
            _TYPE_KEY: f"{cls.__module__}:{cls.__qualname__}",
            _PARAMS_KEY: params,
        }
        try:
            return json.dumps(doc, sort_keys=True)
        except (TypeError, ValueError) as exc:
            raise SerializationError(f"params not JSON-encodable: {exc}") from exc

    @classmethod
    def _deserialize(cls, serialized: str, storage) -> Env:
        """Rebuild the wrapped env; override to reinstate artifacts."""
        doc = json.loads(serialized)
        module_name, _, qualname = doc[_TYPE_KEY].partition(":")
        target: Any = importlib.import_module(module_name)
        for part in qualname.split("."):
            target = getattr(target, part)
        return target(**doc[_PARAMS_KEY])

    def serialize(self) -> str:
        return self._serialize()

    # -- benchmark lifecycle -------------------------------------------------------

    def store(
        self, name: str, description: str, metadata: dict | None = None
    ) -> str:
        """Serialize, register as a benchmark, and remember the id."""
        serialized = self.serialize()
        record = self.storage.put_benchmark(
            serialized, {"name": name, "description": description, **(metadata or {})}
        )
        self.benchmark_id = record["id"]
        return self.benchmark_id

    @classmethod
    def load(cls, benchmark_id: str, storage, **kwargs) -> "EnvWrapper":
        """Fetch a benchmark, deserialize its env, and wrap it."""
        record = storage.get_benchmark(benchmark_id)
        wrapper = cls(cls._deserialize(record["serialized"], storage), storage, **kwargs)
        wrapper.benchmark_id = benchmark_id
        return wrapper

    def publish(self) -> None:
        self.storage.publish_benchmark(self._require_benchmark())

    def _require_benchmark(self) -> str:
        if self.benchmark_id is None:
            raise SerializationError("no benchmark id: call store() or load() first")
        return self.benchmark_id

    # -- interaction recording ------------------------------------------------------

    def reset(
        self,
        *,
        seed: int | None = None,
        options: dict | None = None,
        episode_metadata: dict | None = None,
    ):
        """Reset the env, discarding any unfinished recorded episode.

        ``episode_metadata`` overrides the wrapper default for the episode
        started by this reset only.
        """
        self._buffer.clear()
        self._reset_metadata = None if episode_metadata is None else dict(episode_metadata)
        return self.env.reset(seed=seed, options=options)

    def step(self, action):
        result = self.env.step(action)
        if self.recording:
            observation, reward, terminated, truncated, info = result
            self._buffer.append(
                {
                    "state": as_float_list(observation),
                    "action": as_float_list(action),
                    "reward": float(reward),
                    "info": dict(info),
                    "terminated": bool(terminated),
                    "timeout": bool(truncated),
                }
            )
            if terminated or truncated:
                self.flush()
        return result

    def flush(self) -> None:
        """Post the buffered episode; on failure the buffer is retained."""
        if not self._buffer:
            return
        metadata = (
            self.episode_metadata if self._reset_metadata is None else self._reset_metadata
        )
        self.storage.put_episode(
            self._require_benchmark(), list(self._buffer), dict(metadata)
        )
        self._buffer.clear()

    @property
    def buffered(self) -> int:
        return len(self._buffer)
