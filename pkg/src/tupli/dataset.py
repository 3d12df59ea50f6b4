"""Dataset assembly: filtered episode collections and columnar conversion.

A :class:`Dataset` is an immutable description of "which tuples": an episode
source plus up to three filters. Benchmark and episode filters run on the
source (server-side over the API, or in the store for local use); the tuple
filter always runs here in the client, after loading. Every ``with_*`` and
``sample_episodes`` call returns a new instance, so intermediate datasets
stay valid and reusable.

The columnar form concatenates all tuples in episode order. Its binary
serialization is a fixed little-endian layout (see ``docs/columnar_format.md``):

    bytes 0..8    magic ``TUPLCOL1``
    bytes 8..40   four uint64: N tuples, D state dims, A action dims, E episodes
    then float64 sections, in order:
        observations  N*D, column-major (Fortran) order
        actions       N*A, column-major (Fortran) order
        rewards       N
        terminateds   N, encoded 0.0 / 1.0
        timeouts      N, encoded 0.0 / 1.0
        episode_boundaries  E, cumulative tuple counts; last entry equals N

Identical datasets serialize to identical bytes, which makes exports
diffable and lets downstream trainers cache by digest.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Protocol

import numpy as np

from .errors import ValidationFailed
from .filters import FilterNode, eval_filter
from .models import Episode

MAGIC = b"TUPLCOL1"
_HEADER_FIELDS = 4


class EpisodeSource(Protocol):
    """Anything that can produce full episodes for two staged filters."""

    def fetch_episodes(
        self,
        benchmark_filter: FilterNode | None,
        episode_filter: FilterNode | None,
    ) -> list[Episode]: ...


class LocalSource:
    """Episode source over a store opened in-process (no server round trip)."""

    def __init__(self, store, viewer=None):
        from .storage import Viewer

        self._store = store
        self._viewer = viewer or Viewer.local()

    def fetch_episodes(self, benchmark_filter, episode_filter):
        return self._store.query_episodes(
            self._viewer, benchmark_filter, episode_filter
        )


@dataclass(frozen=True)
class ColumnarBatch:
    """All tuples of a dataset as flat arrays, episode boundaries preserved."""

    observations: np.ndarray  # (N, D) float64
    actions: np.ndarray  # (N, A) float64
    rewards: np.ndarray  # (N,) float64
    terminateds: np.ndarray  # (N,) bool
    timeouts: np.ndarray  # (N,) bool
    episode_boundaries: np.ndarray  # (E,) int64, cumulative; last == N

    @property
    def n_tuples(self) -> int:
        return int(self.observations.shape[0])

    @property
    def n_episodes(self) -> int:
        return int(self.episode_boundaries.shape[0])

    def episode_slices(self) -> list[slice]:
        starts = np.concatenate(([0], self.episode_boundaries[:-1]))
        return [
            slice(int(a), int(b))
            for a, b in zip(starts, self.episode_boundaries)
        ]


@dataclass(frozen=True)
class Dataset:
    """Immutable episode collection with staged filters.

    Unloaded datasets describe a query; ``load()`` materializes it. The
    tuple filter drops non-matching tuples inside each episode and discards
    episodes left empty.
    """

    source: EpisodeSource
    benchmark_filter: FilterNode | None = None
    episode_filter: FilterNode | None = None
    tuple_filter: FilterNode | None = None
    episodes: tuple[Episode, ...] | None = None

    # -- construction ----------------------------------------------------------

    def with_benchmark_filter(self, flt: FilterNode | None) -> "Dataset":
        return replace(self, benchmark_filter=flt, episodes=None)

    def with_episode_filter(self, flt: FilterNode | None) -> "Dataset":
        return replace(self, episode_filter=flt, episodes=None)

    def with_tuple_filter(self, flt: FilterNode | None) -> "Dataset":
        return replace(self, tuple_filter=flt, episodes=None)

    def load(self) -> "Dataset":
        fetched = self.source.fetch_episodes(
            self.benchmark_filter, self.episode_filter
        )
        kept: list[Episode] = []
        for episode in fetched:
            if episode.tuples is None:
                raise ValidationFailed(
                    f"episode {episode.id} arrived without tuples"
                )
            tuples = [
                t
                for t in episode.tuples
                if self.tuple_filter is None
                or eval_filter(self.tuple_filter, t.filter_doc())
            ]
            if not tuples:
                continue
            if len(tuples) == len(episode.tuples):
                kept.append(episode)
            else:
                kept.append(
                    Episode(
                        id=episode.id,
                        benchmark_id=episode.benchmark_id,
                        tuples=tuples,
                        metadata=episode.metadata,
                        created_by=episode.created_by,
                        is_public=episode.is_public,
                        created_at=episode.created_at,
                    )
                )
        return replace(self, episodes=tuple(kept))

    # -- loaded-state access -----------------------------------------------------

    def _require_loaded(self) -> tuple[Episode, ...]:
        if self.episodes is None:
            raise ValidationFailed("dataset is not loaded; call load() first")
        return self.episodes

    def __len__(self) -> int:
        return len(self._require_loaded())

    def __iter__(self) -> Iterator[Episode]:
        return iter(self._require_loaded())

    @property
    def n_tuples(self) -> int:
        return sum(len(e.tuples or ()) for e in self._require_loaded())

    def sample_episodes(self, n: int, seed: int) -> "Dataset":
        """Draw ``n`` distinct episodes, keeping their original order.

        The draw is a seeded sample of index positions, so a given
        (dataset, n, seed) triple always selects the same episodes.
        """
        episodes = self._require_loaded()
        if not 0 <= n <= len(episodes):
            raise ValidationFailed(
                f"cannot sample {n} of {len(episodes)} episodes"
            )
        indices = sorted(random.Random(seed).sample(range(len(episodes)), n))
        return replace(self, episodes=tuple(episodes[i] for i in indices))

    def to_columnar(self) -> ColumnarBatch:
        """Concatenate every episode's tuples into flat arrays."""
        episodes = self._require_loaded()
        if not episodes:
            return ColumnarBatch(
                observations=np.zeros((0, 0)),
                actions=np.zeros((0, 0)),
                rewards=np.zeros(0),
                terminateds=np.zeros(0, dtype=bool),
                timeouts=np.zeros(0, dtype=bool),
                episode_boundaries=np.zeros(0, dtype=np.int64),
            )
        first = episodes[0].tuples[0]
        state_dim, action_dim = len(first.state), len(first.action)
        observations, actions, rewards, terminateds, timeouts = [], [], [], [], []
        boundaries = []
        count = 0
        for episode in episodes:
            for tup in episode.tuples:
                if len(tup.state) != state_dim or len(tup.action) != action_dim:
                    raise ValidationFailed(
                        f"episode {episode.id} has mismatched dimensions; "
                        f"expected state {state_dim} / action {action_dim}"
                    )
                observations.append(tup.state)
                actions.append(tup.action)
                rewards.append(tup.reward)
                terminateds.append(tup.terminated)
                timeouts.append(tup.timeout)
            count += len(episode.tuples)
            boundaries.append(count)
        return ColumnarBatch(
            observations=np.asarray(observations, dtype=np.float64),
            actions=np.asarray(actions, dtype=np.float64),
            rewards=np.asarray(rewards, dtype=np.float64),
            terminateds=np.asarray(terminateds, dtype=bool),
            timeouts=np.asarray(timeouts, dtype=bool),
            episode_boundaries=np.asarray(boundaries, dtype=np.int64),
        )


# -- binary serialization ---------------------------------------------------------


def write_columnar(path: str | Path, batch: ColumnarBatch) -> None:
    """Serialize a batch to the fixed little-endian columnar layout."""
    n, d = batch.observations.shape if batch.observations.ndim == 2 else (0, 0)
    a = batch.actions.shape[1] if batch.actions.ndim == 2 else 0
    e = batch.episode_boundaries.shape[0]
    parts = [
        MAGIC,
        np.asarray([n, d, a, e], dtype="<u8").tobytes(),
        np.asarray(batch.observations, dtype="<f8").tobytes(order="F"),
        np.asarray(batch.actions, dtype="<f8").tobytes(order="F"),
        np.asarray(batch.rewards, dtype="<f8").tobytes(),
        np.asarray(batch.terminateds, dtype="<f8").tobytes(),
        np.asarray(batch.timeouts, dtype="<f8").tobytes(),
        np.asarray(batch.episode_boundaries, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_columnar(path: str | Path) -> ColumnarBatch:
    """Parse the binary columnar layout; strict about magic and length."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 * _HEADER_FIELDS:
        raise ValidationFailed("columnar file too short")
    if raw[: len(MAGIC)] != MAGIC:
        raise ValidationFailed("bad magic; not a columnar tuple file")
    header = np.frombuffer(
        raw, dtype="<u8", count=_HEADER_FIELDS, offset=len(MAGIC)
    )
    n, d, a, e = (int(x) for x in header)
    offset = len(MAGIC) + 8 * _HEADER_FIELDS
    expected = offset + 8 * (n * d + n * a + 3 * n + e)
    if len(raw) != expected:
        raise ValidationFailed(
            f"columnar file length {len(raw)} != expected {expected}"
        )

    def take(count: int) -> np.ndarray:
        nonlocal offset
        out = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        return out

    observations = take(n * d).reshape((n, d), order="F")
    actions = take(n * a).reshape((n, a), order="F")
    rewards = take(n)
    terminateds = take(n) != 0.0
    timeouts = take(n) != 0.0
    boundaries = take(e).astype(np.int64)
    return ColumnarBatch(
        observations=observations,
        actions=actions,
        rewards=rewards,
        terminateds=terminateds,
        timeouts=timeouts,
        episode_boundaries=boundaries,
    )
