"""N-gram extraction and multi-head hashing into table row addresses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .config import EngramConfig, segment_bytes, table_bytes

# Left-padding value for n-gram windows that start before the sequence.
SENTINEL_TOKEN = 0xFFFFFFFF

# Mixing constants (golden-ratio increment, xxhash prime, murmur3 finalizer).
HASH_C1 = 0x9E3779B97F4A7C15
HASH_C2 = 0xC2B2AE3D27D4EB4F
HASH_C3 = 0xFF51AFD7ED558CCD

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class TokenContext:
    """A batch of token IDs plus the positions that need retrieval."""

    token_ids: tuple[int, ...]
    positions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "token_ids", tuple(int(t) for t in self.token_ids))
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        for p in self.positions:
            if not 0 <= p < len(self.token_ids):
                raise ValueError(
                    f"invalid position {p} for sequence of length {len(self.token_ids)}"
                )


@dataclass(frozen=True)
class SegmentAddress:
    row: int
    head: int
    order_idx: int
    byte_offset: int
    length: int


@dataclass(frozen=True)
class GatherPlan:
    """Resolved segment reads for one batch step at one layer.

    Addresses are position-major, then order, then head. All segments share
    one length, and every byte offset is a multiple of that length (the table
    is a uniform grid of ``num_rows * num_heads`` segments).
    """

    rows: np.ndarray        # int64, one table row per address
    heads: np.ndarray       # int64
    order_idx: np.ndarray   # int64
    byte_offsets: np.ndarray  # int64
    segment_length: int
    token_count: int

    def __len__(self) -> int:
        return int(self.byte_offsets.shape[0])

    @property
    def total_bytes(self) -> int:
        return len(self) * self.segment_length

    def address(self, i: int) -> SegmentAddress:
        return SegmentAddress(
            row=int(self.rows[i]),
            head=int(self.heads[i]),
            order_idx=int(self.order_idx[i]),
            byte_offset=int(self.byte_offsets[i]),
            length=self.segment_length,
        )

    def addresses(self) -> Iterator[SegmentAddress]:
        for i in range(len(self)):
            yield self.address(i)


def extract_ngram(ctx: TokenContext, position: int, order: int) -> list[int]:
    """Token IDs at positions ``[position-order+1 .. position]``.

    Positions before the sequence start are filled with the sentinel ID.
    """
    if not 0 <= position < len(ctx.token_ids):
        raise ValueError(f"invalid position {position}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    start = position - order + 1
    pad = max(0, -start)
    window = list(ctx.token_ids[max(0, start) : position + 1])
    return [SENTINEL_TOKEN] * pad + window


def _init_state(head: int, order_idx: int, seed: int) -> int:
    return (seed ^ ((head * HASH_C1) & _MASK) ^ ((order_idx * HASH_C2) & _MASK)) & _MASK


def hash_to_row(
    ngram: Sequence[int], head: int, order_idx: int, cfg: EngramConfig
) -> int:
    """Deterministic row index in ``[0, num_rows)`` for one (n-gram, head) pair."""
    state = _init_state(head, order_idx, cfg.hash_seed)
    for t in ngram:
        state = ((state ^ (int(t) & _MASK)) * HASH_C3) & _MASK
        state ^= state >> 29
    for _ in range(2):
        state = (state * HASH_C3) & _MASK
        state ^= state >> 29
    return state % cfg.num_rows


def hash_rows_batch(
    ngrams: np.ndarray, head: int, order_idx: int, cfg: EngramConfig
) -> np.ndarray:
    """Vectorized :func:`hash_to_row` over an ``(N, order)`` uint64 matrix."""
    ngrams = np.ascontiguousarray(ngrams, dtype=np.uint64)
    c3 = np.uint64(HASH_C3)
    shift = np.uint64(29)
    state = np.full(
        ngrams.shape[0], _init_state(head, order_idx, cfg.hash_seed), dtype=np.uint64
    )
    for j in range(ngrams.shape[1]):
        state = (state ^ ngrams[:, j]) * c3
        state ^= state >> shift
    for _ in range(2):
        state = state * c3
        state ^= state >> shift
    return (state % np.uint64(cfg.num_rows)).astype(np.int64)


def _ngram_windows(
    token_ids: np.ndarray, positions: np.ndarray, order: int
) -> np.ndarray:
    """(P, order) matrix of windows ending at each position, sentinel-padded."""
    padded = np.concatenate(
        [
            np.full(order - 1, SENTINEL_TOKEN, dtype=np.uint64),
            token_ids.astype(np.uint64),
        ]
    )
    col = np.arange(order, dtype=np.int64)
    idx = positions[:, None] + col[None, :]  # shifted by the order-1 pad
    return padded[idx]


def plan_gather(ctx: TokenContext, cfg: EngramConfig) -> GatherPlan:
    """Resolve every (position, order, head) triple to a segment address.

    Ordering is position-major, then order, then head; repeated addresses are
    kept (no deduplication) to preserve the real traffic shape.
    """
    if not ctx.positions:
        raise ValueError("plan_gather requires at least one position")
    seg = segment_bytes(cfg)
    positions = np.asarray(ctx.positions, dtype=np.int64)
    token_ids = np.asarray(ctx.token_ids, dtype=np.uint64)
    n_pos = positions.shape[0]
    n_orders = len(cfg.ngram_orders)
    n_heads = cfg.num_heads

    rows = np.empty((n_pos, n_orders, n_heads), dtype=np.int64)
    for oi, order in enumerate(cfg.ngram_orders):
        windows = _ngram_windows(token_ids, positions, order)
        for head in range(n_heads):
            rows[:, oi, head] = hash_rows_batch(windows, head, oi, cfg)

    heads = np.broadcast_to(
        np.arange(n_heads, dtype=np.int64)[None, None, :], rows.shape
    )
    order_idx = np.broadcast_to(
        np.arange(n_orders, dtype=np.int64)[None, :, None], rows.shape
    )
    flat_rows = rows.reshape(-1)
    flat_heads = np.ascontiguousarray(heads).reshape(-1)
    flat_orders = np.ascontiguousarray(order_idx).reshape(-1)
    # Row stride is num_heads * segment_bytes, so the table is a uniform
    # grid of segments and byte_offset = (row * num_heads + head) * seg.
    byte_offsets = (flat_rows * n_heads + flat_heads) * seg

    plan = GatherPlan(
        rows=flat_rows,
        heads=flat_heads,
        order_idx=flat_orders,
        byte_offsets=byte_offsets,
        segment_length=seg,
        token_count=n_pos,
    )
    assert plan.total_bytes <= n_pos * n_orders * n_heads * seg
    assert byte_offsets.size == 0 or (
        int(byte_offsets.max()) + seg <= table_bytes(cfg)
    )
    return plan
