"""Client SDK for tupli: wrap environments, record episodes, import datasets."""

from .envbase import Env, as_float_list
from .errors import (
    DuplicateBenchmark,
    FormatError,
    MissingArtifact,
    NotFoundError,
    SdkError,
    SerializationError,
    StorageError,
)
from .storage import LocalFileStorage, RemoteStorage, artifact_hash, benchmark_hash
from .toyenv import GridEnvWrapper, GridTimeSeriesEnv
from .trainer import TrainerDataset, to_trainer_format
from .wrapper import EnvWrapper

__version__ = "0.1.0"

__all__ = [
    "Env",
    "EnvWrapper",
    "GridEnvWrapper",
    "GridTimeSeriesEnv",
    "LocalFileStorage",
    "RemoteStorage",
    "TrainerDataset",
    "as_float_list",
    "artifact_hash",
    "benchmark_hash",
    "to_trainer_format",
    "DuplicateBenchmark",
    "FormatError",
    "MissingArtifact",
    "NotFoundError",
    "SdkError",
    "SerializationError",
    "StorageError",
]
