import dataclasses

import pytest
from hypothesis import given, strategies as st

from engrampool import (
    EngramConfig,
    TableFileHeader,
    payload_bytes_per_token_layer,
    segment_bytes,
    table_bytes,
    validate_config,
)
from engrampool.config import (
    HEADER_BYTES,
    config_from_mapping,
    fabric_overrides_from_mapping,
    parse_config_text,
)


def test_engram_27b_config_is_valid(engram_27b_cfg):
    assert validate_config(engram_27b_cfg) is engram_27b_cfg


def test_emb_dim_not_divisible():
    cfg = EngramConfig(num_rows=100, emb_dim=1281, num_heads=8)
    with pytest.raises(ValueError, match="not divisible"):
        validate_config(cfg)


def test_layer_out_of_range():
    cfg = EngramConfig(
        num_rows=100, emb_dim=64, engram_layers=(2, 15), total_layers=14
    )
    with pytest.raises(ValueError, match="layer out of range"):
        validate_config(cfg)


@pytest.mark.parametrize(
    "field,value,match",
    [
        ("num_rows", 0, "num_rows"),
        ("num_heads", 0, "num_heads"),
        ("ngram_orders", (0,), "order"),
        ("elem_bytes", 3, "elem_bytes"),
    ],
)
def test_invariant_violations_named(field, value, match):
    cfg = dataclasses.replace(
        EngramConfig(num_rows=16, emb_dim=64), **{field: value}
    )
    with pytest.raises(ValueError, match=match):
        validate_config(cfg)


def test_segment_bytes_examples(engram_27b_cfg):
    assert segment_bytes(engram_27b_cfg) == 320
    assert segment_bytes(EngramConfig(num_rows=1, emb_dim=8, num_heads=8)) == 2
    assert segment_bytes(EngramConfig(num_rows=1, emb_dim=1280, num_heads=4)) == 640


def test_payload_examples(engram_27b_cfg):
    both_orders = dataclasses.replace(engram_27b_cfg, ngram_orders=(2, 3))
    assert payload_bytes_per_token_layer(both_orders) == 5120
    assert payload_bytes_per_token_layer(engram_27b_cfg) == 2560
    empty = dataclasses.replace(engram_27b_cfg, ngram_orders=())
    assert payload_bytes_per_token_layer(empty) == 0


def test_table_bytes_examples(engram_27b_cfg):
    assert table_bytes(engram_27b_cfg) == 5_791_744_000
    cfg_40b = dataclasses.replace(engram_27b_cfg, num_rows=7_239_680)
    assert table_bytes(cfg_40b) == 18_533_580_800
    assert table_bytes(EngramConfig(num_rows=1, emb_dim=1, num_heads=1)) == 2


def test_payload_law_over_small_grid():
    for heads in (1, 2, 4):
        for orders in ((), (1,), (2,), (2, 3), (1, 2, 3)):
            for elem in (2, 4):
                cfg = EngramConfig(
                    num_rows=7,
                    emb_dim=8 * heads,
                    num_heads=heads,
                    ngram_orders=orders,
                    elem_bytes=elem,
                )
                validate_config(cfg)
                assert payload_bytes_per_token_layer(cfg) == (
                    len(orders) * heads * segment_bytes(cfg)
                )


@given(
    num_rows=st.integers(1, 2**40),
    emb_dim=st.integers(1, 2**20),
    num_heads=st.integers(1, 2**16),
    elem_bytes=st.sampled_from([2, 4]),
    hash_seed=st.integers(0, 2**64 - 1),
)
def test_header_round_trip(num_rows, emb_dim, num_heads, elem_bytes, hash_seed):
    header = TableFileHeader(
        num_rows=num_rows,
        emb_dim=emb_dim,
        num_heads=num_heads,
        elem_bytes=elem_bytes,
        hash_seed=hash_seed,
    )
    packed = header.pack()
    assert len(packed) == HEADER_BYTES == 40
    assert TableFileHeader.unpack(packed) == header


def test_header_rejects_bad_magic():
    raw = bytearray(TableFileHeader(1, 1, 1, 2, 0).pack())
    raw[:4] = b"XXXX"
    with pytest.raises(ValueError, match="bad magic"):
        TableFileHeader.unpack(bytes(raw))


def test_header_rejects_bad_version():
    raw = bytearray(TableFileHeader(1, 1, 1, 2, 0).pack())
    raw[4] = 9
    with pytest.raises(ValueError, match="version"):
        TableFileHeader.unpack(bytes(raw))


def test_header_config_mismatch(small_cfg):
    header = TableFileHeader.from_config(small_cfg)
    other = dataclasses.replace(small_cfg, num_rows=small_cfg.num_rows * 2)
    with pytest.raises(ValueError, match="config mismatch"):
        header.check_matches(other)


def test_config_file_round_trip(tmp_path):
    text = """
    # geometry
    num_rows = 1024
    emb_dim = 64
    num_heads = 8
    ngram_orders = 2, 3
    elem_bytes = 2
    engram_layers = 2, 15
    total_layers = 64
    hash_seed = 42
    fabric.rdma.base_latency_ns = 1500
    fabric.rdma.max_inflight = 16
    """
    values = parse_config_text(text)
    cfg = config_from_mapping(values)
    assert cfg == EngramConfig(
        num_rows=1024,
        emb_dim=64,
        num_heads=8,
        ngram_orders=(2, 3),
        elem_bytes=2,
        engram_layers=(2, 15),
        total_layers=64,
        hash_seed=42,
    )
    overrides = fabric_overrides_from_mapping(values)
    assert overrides == {"rdma": {"base_latency_ns": 1500.0, "max_inflight": 16.0}}


def test_config_file_requires_geometry():
    with pytest.raises(ValueError, match="num_rows"):
        config_from_mapping({"emb_dim": "64"})
