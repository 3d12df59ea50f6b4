"""A small deterministic environment used in tests and examples.

``GridTimeSeriesEnv`` is a 1-D grid walk driven by an exogenous time
series (think price or load profile): the agent moves left or right, and
the reward is the current series value minus a penalty for straying from
the center. It is intentionally tiny but exercises everything the wrapper
cares about: seeded stochasticity, termination at the grid edges,
truncation at a step limit, and bulk data (the series) that belongs in an
artifact rather than inline JSON.

``GridEnvWrapper`` is the matching :class:`~tupli_sdk.wrapper.EnvWrapper`
subclass: it stores the series as a one-column CSV artifact and keeps only
the artifact hash in the serialized benchmark.
"""

from __future__ import annotations

import json
import random

from .envbase import Env
from .errors import MissingArtifact, NotFoundError
from .wrapper import EnvWrapper

GRID_ENV_TYPE = "grid_timeseries"


class GridTimeSeriesEnv:
    def __init__(self, width: int, series: list[float], max_steps: int = 100):
        if width < 3:
            raise ValueError("width must be at least 3")
        if not series:
            raise ValueError("series must be non-empty")
        self.width = int(width)
        self.series = [float(v) for v in series]
        self.max_steps = int(max_steps)
        self._pos: int | None = None
        self._t = 0
        self._rng = random.Random()

    @property
    def params(self) -> dict:
        return {
            "width": self.width,
            "series": list(self.series),
            "max_steps": self.max_steps,
        }

    def _obs(self) -> list[float]:
        assert self._pos is not None
        return [float(self._pos), self.series[self._t % len(self.series)]]

    def reset(self, *, seed: int | None = None, options: dict | None = None):
        self._pos = self.width // 2
        self._t = 0
        self._rng = random.Random(seed)
        return self._obs(), {"t": 0}

    def step(self, action):
        if self._pos is None:
            raise RuntimeError("step() before reset()")
        direction = 1 if float(action) >= 0 else -1
        self._pos = min(max(self._pos + direction, 0), self.width - 1)
        self._t += 1
        reward = (
            self.series[self._t % len(self.series)]
            - 0.05 * abs(self._pos - self.width // 2)
            + self._rng.gauss(0.0, 0.01)
        )
        terminated = self._pos in (0, self.width - 1)
        truncated = self._t >= self.max_steps
        return self._obs(), reward, terminated, truncated, {"t": self._t}


class GridEnvWrapper(EnvWrapper):
    """Wrapper that extracts the series into a CSV artifact."""

    def _serialize(self) -> str:
        env: GridTimeSeriesEnv = self.env
        content = "\n".join(repr(v) for v in env.series).encode("utf-8")
        artifact_id = self.storage.put_artifact(
            content, {"name": "series.csv", "kind": "timeseries"}
        )
        doc = {
            "type": GRID_ENV_TYPE,
            "params": {
                "width": env.width,
                "max_steps": env.max_steps,
                "series_artifact": artifact_id,
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def _deserialize(cls, serialized: str, storage) -> Env:
        params = json.loads(serialized)["params"]
        artifact_id = params["series_artifact"]
        try:
            content = storage.get_artifact(artifact_id)
        except NotFoundError:
            raise MissingArtifact(artifact_id) from None
        series = [float(line) for line in content.decode("utf-8").splitlines() if line]
        return GridTimeSeriesEnv(
            width=params["width"], series=series, max_steps=params["max_steps"]
        )
