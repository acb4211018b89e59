"""Exact similarity search in general metric spaces.

A balanced pivot tree laid out as flat arrays, built level by level with
global sorts, searched in batches under a strict memory budget, and kept
fresh by a cache-and-rebuild update layer.  Supports edit distance on
strings and L1/L2/angular distances on vectors, always returning exact
answers.
"""

from .metrics import (
    ANGULAR,
    EDIT,
    L1,
    L2,
    METRIC_KINDS,
    MetricMismatchError,
    distance,
    edit_distance,
)
from .data import (
    DataObject,
    Dataset,
    DatasetFormatError,
    generate_clustered,
    generate_sequences,
    generate_uniform,
    load_dataset,
    resolve_radius,
    save_dataset,
)
from .runtime import (
    BudgetError,
    MemoryBudget,
    ParallelismConfig,
    ParallelRuntime,
)
from .tree import (
    ConfigError,
    FlatPivotTree,
    TreeConfig,
    build,
    child_node_id,
    decode_distance,
    encode_distance,
    level_range,
    parent_node_id,
    select_pivot_fft,
    tree_height,
)
from .search import (
    BatchSearcher,
    SearchStats,
    compute_query_groups,
    current_kth_bound,
    level_size_limit,
    node_prunable_knn,
    node_prunable_range,
    object_prunable,
)
from .oracle import OracleMismatch, answers_match, brute_knn, brute_range
from .updates import StreamingIndex, UpdateError
from .cost import (
    estimate_range_cost,
    estimate_variance,
    prune_retention_bound,
    recommend_node_capacity,
)
from .io import (
    SnapshotFormatError,
    file_sha256,
    load_snapshot,
    parse_workload,
    save_snapshot,
)
from .estimator import MetricTreeNeighbors

__version__ = "0.1.0"

__all__ = [
    "ANGULAR",
    "EDIT",
    "L1",
    "L2",
    "METRIC_KINDS",
    "BatchSearcher",
    "BudgetError",
    "ConfigError",
    "DataObject",
    "Dataset",
    "DatasetFormatError",
    "FlatPivotTree",
    "MemoryBudget",
    "MetricMismatchError",
    "MetricTreeNeighbors",
    "OracleMismatch",
    "ParallelRuntime",
    "ParallelismConfig",
    "SearchStats",
    "SnapshotFormatError",
    "StreamingIndex",
    "TreeConfig",
    "UpdateError",
    "answers_match",
    "brute_knn",
    "brute_range",
    "build",
    "child_node_id",
    "compute_query_groups",
    "current_kth_bound",
    "decode_distance",
    "distance",
    "edit_distance",
    "encode_distance",
    "estimate_range_cost",
    "estimate_variance",
    "file_sha256",
    "generate_clustered",
    "generate_sequences",
    "generate_uniform",
    "level_range",
    "level_size_limit",
    "load_dataset",
    "load_snapshot",
    "node_prunable_knn",
    "node_prunable_range",
    "object_prunable",
    "parent_node_id",
    "parse_workload",
    "prune_retention_bound",
    "recommend_node_capacity",
    "resolve_radius",
    "save_dataset",
    "save_snapshot",
    "select_pivot_fft",
    "tree_height",
]
