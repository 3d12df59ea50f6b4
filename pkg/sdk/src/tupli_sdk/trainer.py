"""Importer for the binary columnar dataset format.

Layout, all little-endian, sizes in bytes:

    magic   8   b"TUPLCOL1"
    header  32  four uint64: n_tuples N, obs dim D, action dim A, n_episodes E
    body        float64 sections back to back:
                observations N*D (column-major), actions N*A (column-major),
                rewards N, terminals N, timeouts N, episode boundaries E
                (cumulative tuple counts)

Total file size must equal 40 + 8*(N*D + N*A + 3*N + E) exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"TUPLCOL1"
_HEADER = struct.Struct("<4Q")


@dataclass
class TrainerDataset:
    """Columnar view of an exported dataset, ready for a training loop."""

    observations: np.ndarray  # (N, D) float64
    actions: np.ndarray  # (N, A) float64
    rewards: np.ndarray  # (N,) float64
    terminals: np.ndarray  # (N,) bool
    timeouts: np.ndarray  # (N,) bool
    episode_boundaries: np.ndarray  # (E,) int64, cumulative

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def n_episodes(self) -> int:
        return self.episode_boundaries.shape[0]

    def episode_slices(self) -> list[tuple[int, int]]:
        """Half-open (start, end) tuple ranges, one per episode."""
        starts = np.concatenate(([0], self.episode_boundaries[:-1]))
        return [(int(s), int(e)) for s, e in zip(starts, self.episode_boundaries)]


def to_trainer_format(path: str | Path) -> TrainerDataset:
    """Read an exported ``.bin`` file into arrays."""
    data = Path(path).read_bytes()
    if len(data) < 8 + _HEADER.size:
        raise FormatError(f"file too short for header: {len(data)} bytes")
    if data[:8] != MAGIC:
        raise FormatError(f"bad magic {data[:8]!r}")
    n, d, a, e = _HEADER.unpack_from(data, 8)
    expected = 40 + 8 * (n * d + n * a + 3 * n + e)
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes for n={n} d={d} a={a} e={e}, got {len(data)}")

    body = np.frombuffer(data, dtype="<f8", offset=40)
    sections = []
    offset = 0
    for count in (n * d, n * a, n, n, n, e):
        sections.append(body[offset : offset + count])
        offset += count
    obs_flat, act_flat, rewards, terminals, timeouts, bounds = sections

    boundaries = bounds.astype(np.int64)
    if e == 0 and n != 0:
        raise FormatError("tuples present but no episode boundaries")
    if e and boundaries[-1] != n:
        raise FormatError(f"boundaries end at {boundaries[-1]}, expected {n}")

    return TrainerDataset(
        observations=obs_flat.reshape((n, d), order="F").copy(),
        actions=act_flat.reshape((n, a), order="F").copy(),
        rewards=rewards.copy(),
        terminals=terminals != 0.0,
        timeouts=timeouts != 0.0,
        episode_boundaries=boundaries,
    )
