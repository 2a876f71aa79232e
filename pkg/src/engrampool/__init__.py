"""Hashed n-gram embedding retrieval over pooled-memory backends.

A library and CLI for the conditional-memory data path: multi-head hashed
n-gram lookup over a large read-only embedding table, pluggable local /
mapped-file / fabric-modeled storage backends, a prefetch scheduler that
overlaps retrieval with a simulated decode clock, and the bandwidth, latency,
and hardware-cost requirement models.
"""

from .analysis import (
    ConstraintReport,
    CostInput,
    RequirementsInput,
    check_constraints,
    local_cost,
    pool_cost,
    prefetch_window_ns,
    required_bandwidth,
    savings,
    table_gb_for_params,
)
from .backends import (
    FABRIC_PRESETS,
    FabricModel,
    GatherReport,
    LocalMemoryBackend,
    MappedFileBackend,
    ModeledBackend,
    effective_bandwidth,
    get_fabric_preset,
    load_table,
    read_segments,
)
from .config import (
    EngramConfig,
    TableFileHeader,
    payload_bytes_per_token_layer,
    segment_bytes,
    table_bytes,
    validate_config,
)
from .engine import (
    PrefetchHandle,
    StepRecord,
    StepTimeline,
    await_before_layer,
    issue_prefetch,
    simulate_decode_step,
)
from .indexer import (
    SENTINEL_TOKEN,
    GatherPlan,
    SegmentAddress,
    TokenContext,
    extract_ngram,
    hash_rows_batch,
    hash_to_row,
    plan_gather,
)

__version__ = "0.1.0"
