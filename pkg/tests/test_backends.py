import dataclasses
import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engrampool import (
    FABRIC_PRESETS,
    EngramConfig,
    FabricModel,
    LocalMemoryBackend,
    MappedFileBackend,
    ModeledBackend,
    TokenContext,
    effective_bandwidth,
    get_fabric_preset,
    load_table,
    plan_gather,
    read_segments,
    table_bytes,
)
from conftest import gather_oracle, write_table_file


@pytest.fixture
def table_file(tmp_path, small_cfg):
    path = tmp_path / "table.engt"
    payload = write_table_file(path, small_cfg)
    return path, payload


def _plan(cfg, n_tokens=32, seed=0):
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 2**32 - 1, size=n_tokens, dtype=np.uint32)
    ctx = TokenContext(token_ids=tuple(int(t) for t in ids),
                       positions=tuple(range(n_tokens)))
    return plan_gather(ctx, cfg)


def test_load_table_region_len(table_file, small_cfg):
    path, payload = table_file
    for kind in ("local", "mapped"):
        backend = load_table(small_cfg, kind=kind, path=path)
        assert backend.region_len == table_bytes(small_cfg)
        assert bytes(backend.view()) == payload.tobytes()


def test_load_table_bad_magic(tmp_path, small_cfg):
    path = tmp_path / "bad.engt"
    write_table_file(path, small_cfg)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="bad magic"):
        load_table(small_cfg, kind="mapped", path=path)


def test_load_table_config_mismatch(table_file, small_cfg):
    path, _ = table_file
    other = dataclasses.replace(small_cfg, num_rows=small_cfg.num_rows * 2)
    with pytest.raises(ValueError, match="config mismatch"):
        load_table(other, kind="mapped", path=path)


def test_load_table_missing_file(tmp_path, small_cfg):
    with pytest.raises(FileNotFoundError):
        load_table(small_cfg, kind="mapped", path=tmp_path / "nope.engt")


def test_load_table_truncated(tmp_path, small_cfg):
    path = tmp_path / "short.engt"
    write_table_file(path, small_cfg)
    full = path.read_bytes()
    path.write_bytes(full[: len(full) - 100])
    with pytest.raises(ValueError, match="region too small"):
        load_table(small_cfg, kind="mapped", path=path)


def test_read_matches_oracle_all_kinds(table_file, small_cfg):
    path, payload = table_file
    plan = _plan(small_cfg, n_tokens=64)
    expected = gather_oracle(payload, plan)
    backends = [
        load_table(small_cfg, kind="local", path=path),
        load_table(small_cfg, kind="mapped", path=path),
        load_table(small_cfg, kind="modeled:cxl", path=path),
    ]
    for backend in backends:
        for workers in (1, 4, 64):
            dest = np.empty(plan.total_bytes, dtype=np.uint8)
            report = read_segments(backend, plan, dest, workers=workers)
            assert np.array_equal(dest, expected)
            assert report.bytes_moved == plan.total_bytes
            assert report.messages == len(plan)


def test_read_empty_plan(small_cfg):
    backend = LocalMemoryBackend.zeros(small_cfg)
    plan = _plan(small_cfg, n_tokens=1)
    empty = dataclasses.replace(
        plan,
        rows=plan.rows[:0],
        heads=plan.heads[:0],
        order_idx=plan.order_idx[:0],
        byte_offsets=plan.byte_offsets[:0],
        token_count=0,
    )
    dest = np.full(64, 0xAB, dtype=np.uint8)
    report = read_segments(backend, empty, dest)
    assert report.bytes_moved == 0
    assert np.all(dest == 0xAB)  # untouched


def test_read_rejects_small_destination(small_cfg):
    backend = LocalMemoryBackend.zeros(small_cfg)
    plan = _plan(small_cfg)
    dest = np.empty(plan.total_bytes - 1, dtype=np.uint8)
    with pytest.raises(ValueError, match="destination too small"):
        read_segments(backend, plan, dest)


def test_read_rejects_out_of_bounds(small_cfg):
    backend = LocalMemoryBackend.zeros(small_cfg)
    plan = _plan(small_cfg)
    bad = dataclasses.replace(
        plan, byte_offsets=plan.byte_offsets + table_bytes(small_cfg)
    )
    dest = np.empty(bad.total_bytes, dtype=np.uint8)
    with pytest.raises(ValueError, match="out-of-bounds"):
        read_segments(backend, bad, dest)


def test_backend_is_read_only(table_file, small_cfg):
    path, _ = table_file
    for kind in ("local", "mapped"):
        backend = load_table(small_cfg, kind=kind, path=path)
        before = hashlib.sha256(bytes(backend.view())).hexdigest()
        plan = _plan(small_cfg, n_tokens=128)
        dest = np.empty(plan.total_bytes, dtype=np.uint8)
        for _ in range(3):
            read_segments(backend, plan, dest, workers=8)
        after = hashlib.sha256(bytes(backend.view())).hexdigest()
        assert before == after
        with pytest.raises((ValueError, TypeError)):
            backend.view()[0] = 1


def test_modeled_latency_formula(small_cfg):
    rdma = FABRIC_PRESETS["rdma"]
    backend = ModeledBackend(LocalMemoryBackend.zeros(small_cfg), rdma)
    # 4,096 messages x 320 B with inflight 32: 128 waves.
    assert rdma.service_ns(4096, 1_310_720) == pytest.approx(
        rdma.base_latency_ns + 128 * rdma.per_message_ns + 1_310_720 * rdma.per_byte_ns
    )
    assert backend.model is rdma


def test_modeled_report_uses_formula(table_file, small_cfg):
    path, _ = table_file
    backend = load_table(small_cfg, kind="modeled:rdma", path=path)
    plan = _plan(small_cfg, n_tokens=16)
    dest = np.empty(plan.total_bytes, dtype=np.uint8)
    report = read_segments(backend, plan, dest)
    assert report.modeled_ns == backend.model.service_ns(
        len(plan), plan.total_bytes
    )


def test_real_backend_modeled_equals_wall(small_cfg):
    backend = LocalMemoryBackend.zeros(small_cfg)
    plan = _plan(small_cfg)
    dest = np.empty(plan.total_bytes, dtype=np.uint8)
    report = read_segments(backend, plan, dest)
    assert report.modeled_ns == report.wall_ns


def test_rdma_preset_small_message_collapse():
    rdma = FABRIC_PRESETS["rdma"]
    bw = effective_bandwidth(rdma, message_bytes=64, messages=1_000_000)
    assert bw < 0.25 * rdma.peak_bandwidth_bps


def test_cxl_preset_small_message_efficiency():
    cxl = FABRIC_PRESETS["cxl"]
    bw = effective_bandwidth(cxl, message_bytes=64, messages=1_000_000)
    assert bw >= 0.5 * cxl.peak_bandwidth_bps


def test_bandwidth_asymptote():
    for model in FABRIC_PRESETS.values():
        bw = effective_bandwidth(model, message_bytes=2**32, messages=1)
        assert bw == pytest.approx(model.peak_bandwidth_bps, rel=1e-3)


def test_effective_bandwidth_requires_messages():
    with pytest.raises(ValueError, match="messages"):
        effective_bandwidth(FABRIC_PRESETS["cxl"], 64, 0)


def test_fabric_preset_overrides():
    model = get_fabric_preset("rdma", {"rdma": {"base_latency_ns": 1.0,
                                                "max_inflight": 4}})
    assert model.base_latency_ns == 1.0
    assert model.max_inflight == 4
    assert FABRIC_PRESETS["rdma"].base_latency_ns == 2000.0  # untouched


def test_fabric_rejects_bad_params():
    with pytest.raises(ValueError):
        FabricModel("x", -1, 0, 0, 1)
    with pytest.raises(ValueError):
        FabricModel("x", 0, 0, 0, 0)
    with pytest.raises(ValueError, match="unknown fabric preset"):
        get_fabric_preset("infiniband")


@settings(max_examples=100, deadline=None)
@given(
    preset=st.sampled_from(sorted(FABRIC_PRESETS)),
    messages=st.integers(1, 10**6),
    extra_messages=st.integers(0, 10**6),
    bytes_moved=st.integers(0, 10**9),
    extra_bytes=st.integers(0, 10**9),
)
def test_modeled_ns_monotone(preset, messages, extra_messages, bytes_moved,
                             extra_bytes):
    model = FABRIC_PRESETS[preset]
    base = model.service_ns(messages, bytes_moved)
    assert model.service_ns(messages + extra_messages, bytes_moved) >= base
    assert model.service_ns(messages, bytes_moved + extra_bytes) >= base


@settings(max_examples=100, deadline=None)
@given(
    preset=st.sampled_from(sorted(FABRIC_PRESETS)),
    messages=st.integers(1, 10**6),
    message_bytes=st.integers(1, 10**6),
    extra=st.integers(0, 10**6),
)
def test_effective_bandwidth_monotone_in_message_size(
    preset, messages, message_bytes, extra
):
    model = FABRIC_PRESETS[preset]
    small = effective_bandwidth(model, message_bytes, messages)
    large = effective_bandwidth(model, message_bytes + extra, messages)
    assert large >= small * (1 - 1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_tokens=st.integers(1, 64),
       workers=st.integers(1, 16))
def test_oracle_equivalence_property(seed, n_tokens, workers):
    cfg = EngramConfig(
        num_rows=1024, emb_dim=64, num_heads=8, ngram_orders=(2, 3), hash_seed=42
    )
    rng = np.random.default_rng(seed)
    payload = rng.integers(0, 256, size=table_bytes(cfg), dtype=np.uint8)
    backend = LocalMemoryBackend(payload.copy())
    plan = _plan(cfg, n_tokens=n_tokens, seed=seed)
    dest = np.empty(plan.total_bytes, dtype=np.uint8)
    read_segments(backend, plan, dest, workers=workers)
    assert np.array_equal(dest, gather_oracle(payload, plan))
