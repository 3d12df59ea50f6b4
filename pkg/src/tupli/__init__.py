"""Storage and sharing for offline RL benchmarks, artifacts, and episodes.

Quick tour: :mod:`tupli.models` defines the domain objects and their content
hashes, :mod:`tupli.filters` the metadata filter algebra,
:mod:`tupli.storage` the on-disk store, :mod:`tupli.server` the REST API,
:mod:`tupli.client` the HTTP client, :mod:`tupli.dataset` filtered dataset
assembly and the binary columnar format, and :mod:`tupli.cli` the ``tupli``
command.
"""

from .client import ApiClient, TokenCache
from .dataset import ColumnarBatch, Dataset, LocalSource, read_columnar, write_columnar
from .errors import ApiError, ServiceError
from .filters import (
    FilterNode,
    and_filter,
    eq,
    eval_filter,
    filter_from_json,
    filter_to_json,
    geq,
    gt,
    leq,
    lt,
    ne,
    or_filter,
)
from .models import (
    Artifact,
    Benchmark,
    BenchmarkQuery,
    Episode,
    RLTuple,
    hash_artifact,
    hash_benchmark,
    validate_episode,
)
from .storage import OnDiskStore, Viewer

__version__ = "0.1.0"

__all__ = [
    "ApiClient",
    "ApiError",
    "Artifact",
    "Benchmark",
    "BenchmarkQuery",
    "ColumnarBatch",
    "Dataset",
    "Episode",
    "FilterNode",
    "LocalSource",
    "OnDiskStore",
    "RLTuple",
    "ServiceError",
    "TokenCache",
    "Viewer",
    "and_filter",
    "eq",
    "eval_filter",
    "filter_from_json",
    "filter_to_json",
    "geq",
    "gt",
    "hash_artifact",
    "hash_benchmark",
    "leq",
    "lt",
    "ne",
    "or_filter",
    "read_columnar",
    "validate_episode",
    "write_columnar",
    "__version__",
]
