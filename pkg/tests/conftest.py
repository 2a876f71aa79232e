import numpy as np
import pytest

from engrampool import (
    EngramConfig,
    GatherPlan,
    TableFileHeader,
    table_bytes,
    validate_config,
)


def write_table_file(path, cfg: EngramConfig, payload: np.ndarray | None = None):
    """Write a valid table file; random payload by default."""
    validate_config(cfg)
    if payload is None:
        rng = np.random.default_rng(cfg.hash_seed & 0xFFFFFFFF)
        payload = rng.integers(0, 256, size=table_bytes(cfg), dtype=np.uint8)
    assert payload.size == table_bytes(cfg)
    with open(path, "wb") as fh:
        fh.write(TableFileHeader.from_config(cfg).pack())
        fh.write(payload.tobytes())
    return payload


def gather_oracle(region: np.ndarray, plan: GatherPlan) -> np.ndarray:
    """Sequential single-worker reference copy, one slice at a time."""
    seg = plan.segment_length
    out = np.empty(plan.total_bytes, dtype=np.uint8)
    for i in range(len(plan)):
        off = int(plan.byte_offsets[i])
        out[i * seg : (i + 1) * seg] = region[off : off + seg]
    return out


@pytest.fixture
def small_cfg():
    return EngramConfig(
        num_rows=1024,
        emb_dim=64,
        num_heads=8,
        ngram_orders=(2, 3),
        elem_bytes=2,
        engram_layers=(2, 15),
        total_layers=64,
        hash_seed=42,
    )


@pytest.fixture
def engram_27b_cfg():
    return EngramConfig(
        num_rows=2_262_400,
        emb_dim=1280,
        num_heads=8,
        ngram_orders=(2,),
        elem_bytes=2,
    )
