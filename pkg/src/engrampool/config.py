"""Table geometry, configuration, and the binary table-file header."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

TABLE_MAGIC = b"ENGT"
TABLE_FORMAT_VERSION = 1

# magic, format_version, num_rows, emb_dim, num_heads, elem_bytes, hash_seed
_HEADER = struct.Struct("<4sIQQIIQ")
HEADER_BYTES = _HEADER.size
assert HEADER_BYTES == 40

DEFAULT_HASH_SEED = 0xCBF29CE484222325

_U64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class EngramConfig:
    """Geometry of one n-gram embedding table plus its placement in the model.

    ``engram_layers`` are 1-based transformer layer indices; ``hash_seed`` is
    the 64-bit master seed shared by every hash head.
    """

    num_rows: int
    emb_dim: int
    num_heads: int = 8
    ngram_orders: tuple[int, ...] = (2,)
    elem_bytes: int = 2
    engram_layers: tuple[int, ...] = (2, 15)
    total_layers: int = 64
    hash_seed: int = DEFAULT_HASH_SEED

    def __post_init__(self):
        # Normalize list-like inputs so configs hash/compare by value.
        object.__setattr__(self, "ngram_orders", tuple(self.ngram_orders))
        object.__setattr__(self, "engram_layers", tuple(self.engram_layers))


def validate_config(cfg: EngramConfig) -> EngramConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ValueError.

    The error message names the first violated invariant.
    """
    if cfg.num_rows <= 0:
        raise ValueError(f"num_rows must be positive, got {cfg.num_rows}")
    if cfg.emb_dim <= 0:
        raise ValueError(f"emb_dim must be positive, got {cfg.emb_dim}")
    if cfg.num_heads < 1:
        raise ValueError(f"num_heads must be >= 1, got {cfg.num_heads}")
    if cfg.emb_dim % cfg.num_heads != 0:
        raise ValueError(
            f"emb_dim not divisible by num_heads ({cfg.emb_dim} % {cfg.num_heads})"
        )
    for n in cfg.ngram_orders:
        if n < 1:
            raise ValueError(f"ngram order must be >= 1, got {n}")
    if cfg.elem_bytes not in (2, 4):
        raise ValueError(f"elem_bytes must be 2 or 4, got {cfg.elem_bytes}")
    if cfg.total_layers < 1:
        raise ValueError(f"total_layers must be >= 1, got {cfg.total_layers}")
    for k in cfg.engram_layers:
        if not 1 <= k <= cfg.total_layers:
            raise ValueError(
                f"layer out of range: {k} not in [1, {cfg.total_layers}]"
            )
    if not 0 <= cfg.hash_seed <= _U64_MASK:
        raise ValueError(f"hash_seed must fit in 64 bits, got {cfg.hash_seed}")
    return cfg


def segment_bytes(cfg: EngramConfig) -> int:
    """Bytes of one per-head slice of an embedding row."""
    return (cfg.emb_dim // cfg.num_heads) * cfg.elem_bytes


def payload_bytes_per_token_layer(cfg: EngramConfig) -> int:
    """Bytes fetched per token at one Engram layer (all orders, all heads)."""
    return len(cfg.ngram_orders) * cfg.num_heads * segment_bytes(cfg)


def table_bytes(cfg: EngramConfig) -> int:
    """Size of the raw row-major table payload."""
    return cfg.num_rows * cfg.emb_dim * cfg.elem_bytes


@dataclass(frozen=True)
class TableFileHeader:
    """Fixed 40-byte little-endian header preceding the raw table payload."""

    num_rows: int
    emb_dim: int
    num_heads: int
    elem_bytes: int
    hash_seed: int
    format_version: int = TABLE_FORMAT_VERSION

    def pack(self) -> bytes:
        return _HEADER.pack(
            TABLE_MAGIC,
            self.format_version,
            self.num_rows,
            self.emb_dim,
            self.num_heads,
            self.elem_bytes,
            self.hash_seed,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "TableFileHeader":
        if len(raw) < HEADER_BYTES:
            raise ValueError(f"truncated header: {len(raw)} < {HEADER_BYTES} bytes")
        magic, version, num_rows, emb_dim, num_heads, elem_bytes, hash_seed = (
            _HEADER.unpack(raw[:HEADER_BYTES])
        )
        if magic != TABLE_MAGIC:
            raise ValueError(f"bad magic: {magic!r}")
        if version != TABLE_FORMAT_VERSION:
            raise ValueError(f"unsupported format version: {version}")
        return cls(
            num_rows=num_rows,
            emb_dim=emb_dim,
            num_heads=num_heads,
            elem_bytes=elem_bytes,
            hash_seed=hash_seed,
            format_version=version,
        )

    @classmethod
    def from_config(cls, cfg: EngramConfig) -> "TableFileHeader":
        return cls(
            num_rows=cfg.num_rows,
            emb_dim=cfg.emb_dim,
            num_heads=cfg.num_heads,
            elem_bytes=cfg.elem_bytes,
            hash_seed=cfg.hash_seed,
        )

    def check_matches(self, cfg: EngramConfig) -> None:
        for name in ("num_rows", "emb_dim", "num_heads", "elem_bytes", "hash_seed"):
            have, want = getattr(self, name), getattr(cfg, name)
            if have != want:
                raise ValueError(
                    f"config mismatch: header {name}={have}, config {name}={want}"
                )


# --- structured key=value config file -------------------------------------

_INT_KEYS = (
    "num_rows",
    "emb_dim",
    "num_heads",
    "elem_bytes",
    "total_layers",
    "hash_seed",
)
_LIST_KEYS = ("ngram_orders", "engram_layers")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines (``#`` comments) into a flat dict."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.replace(",", " ").split())


def config_from_mapping(values: Mapping[str, str]) -> EngramConfig:
    kwargs: dict = {}
    for key in _INT_KEYS:
        if key in values:
            kwargs[key] = int(str(values[key]), 0)
    for key in _LIST_KEYS:
        if key in values:
            kwargs[key] = _parse_int_list(str(values[key]))
    if "num_rows" not in kwargs or "emb_dim" not in kwargs:
        raise ValueError("config requires at least num_rows and emb_dim")
    return validate_config(EngramConfig(**kwargs))


def fabric_overrides_from_mapping(values: Mapping[str, str]) -> dict[str, dict[str, float]]:
    """Collect ``fabric.<preset>.<param> = value`` entries."""
    out: dict[str, dict[str, float]] = {}
    for key, raw in values.items():
        if not key.startswith("fabric."):
            continue
        parts = key.split(".")
        if len(parts) != 3:
            raise ValueError(f"bad fabric override key: {key!r}")
        _, preset, param = parts
        out.setdefault(preset, {})[param] = float(raw)
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())
