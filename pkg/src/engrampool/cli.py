"""Command-line harness: table builder, latency sweeps, simulation, reports."""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis
from .backends import (
    FABRIC_PRESETS,
    FabricModel,
    ModeledBackend,
    get_fabric_preset,
    load_table,
    read_segments,
)
from .config import (
    EngramConfig,
    TableFileHeader,
    config_from_mapping,
    fabric_overrides_from_mapping,
    load_config_file,
    payload_bytes_per_token_layer,
    table_bytes,
    validate_config,
)
from .engine import StepTimeline, simulate_decode_step
from .indexer import GatherPlan, TokenContext, plan_gather

CONFIG_ENV_VAR = "ENGRAM_POOL_CONFIG"

DEFAULT_BATCH_SIZES = "1,2,4,8,16,32,64,128,256,512"

# Case-study defaults: 70k tokens/s, 5 KB/token/layer, 2 Engram layers at
# k=2 and k=15, 3.6 ms decode step over 64 layers, batch 256.
CASE_THROUGHPUT_TPS = 70_000.0
CASE_PAYLOAD_BYTES = 5_120
CASE_N_ENG = 2
CASE_N_TOKEN = 256
CASE_STEP_NS = 3_600_000.0
CASE_TOTAL_LAYERS = 64
CASE_LAYER_K = 2

# Table-4 unit costs (dram_per_gb is always explicit; see cmd_cost).
COST_SWITCH = 5_800.0
COST_ADAPTER = 210.0
COST_CONTROLLER = 300.0


def _int_list(raw: str) -> list[int]:
    return [int(p) for p in raw.replace(",", " ").split()]


def _float_list(raw: str) -> list[float]:
    return [float(p) for p in raw.replace(",", " ").split()]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def _write_csv(path, schema: str, preamble: dict, header: list[str], rows) -> None:
    lines = [f"# engrampool {schema} csv v1"]
    for key in sorted(preamble):
        lines.append(f"# {key}={preamble[key]}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _config_preamble(cfg: EngramConfig) -> dict:
    return {
        "num_rows": cfg.num_rows,
        "emb_dim": cfg.emb_dim,
        "num_heads": cfg.num_heads,
        "ngram_orders": " ".join(map(str, cfg.ngram_orders)),
        "elem_bytes": cfg.elem_bytes,
        "engram_layers": " ".join(map(str, cfg.engram_layers)),
        "total_layers": cfg.total_layers,
        "hash_seed": cfg.hash_seed,
    }


def _fabric_preamble(model: FabricModel) -> dict:
    return {
        "fabric_name": model.name,
        "fabric_base_latency_ns": model.base_latency_ns,
        "fabric_per_message_ns": model.per_message_ns,
        "fabric_per_byte_ns": model.per_byte_ns,
        "fabric_max_inflight": model.max_inflight,
    }


# --- config resolution ------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"key=value config file (or ${CONFIG_ENV_VAR})")
    p.add_argument("--num-rows", type=int)
    p.add_argument("--emb-dim", type=int)
    p.add_argument("--num-heads", type=int)
    p.add_argument("--ngram-orders", type=_int_list, metavar="LIST")
    p.add_argument("--elem-bytes", type=int)
    p.add_argument("--engram-layers", type=_int_list, metavar="LIST")
    p.add_argument("--total-layers", type=int)
    p.add_argument("--hash-seed", type=int)


def resolve_config(args) -> tuple[EngramConfig, dict[str, dict[str, float]]]:
    """Merge config file (flag or env var) with CLI flag overrides."""
    values: dict[str, str] = {}
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if path:
        values.update(load_config_file(path))
    for key in (
        "num_rows",
        "emb_dim",
        "num_heads",
        "elem_bytes",
        "total_layers",
        "hash_seed",
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    for key in ("ngram_orders", "engram_layers"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = ",".join(map(str, flag))
    cfg = config_from_mapping(values)
    return cfg, fabric_overrides_from_mapping(values)


def _make_backend(spec: str, cfg: EngramConfig, path, overrides):
    if spec.startswith("modeled:"):
        preset = spec.split(":", 1)[1]
        fabric = get_fabric_preset(preset, overrides)
        return load_table(cfg, kind="modeled", path=path, fabric=fabric)
    return load_table(cfg, kind=spec, path=path)


def _backend_label(spec: str) -> str:
    return spec


def _synthetic_batch(batch: int, cfg: EngramConfig, seed: int) -> TokenContext:
    # Uniform random token IDs: worst-case, cache-unfriendly addresses.
    rng = np.random.default_rng([seed, batch])
    ids = rng.integers(0, 2**32 - 1, size=batch, dtype=np.uint32)
    return TokenContext(token_ids=tuple(int(t) for t in ids),
                        positions=tuple(range(batch)))


# --- subcommands ------------------------------------------------------------


def cmd_build_table(args) -> int:
    cfg, _ = resolve_config(args)
    validate_config(cfg)
    payload = table_bytes(cfg)
    out = Path(args.out)
    with out.open("wb") as fh:
        fh.write(TableFileHeader.from_config(cfg).pack())
        if args.fill == "zeros":
            chunk = bytes(1 << 24)
            remaining = payload
            while remaining > 0:
                n = min(remaining, len(chunk))
                fh.write(chunk[:n])
                remaining -= n
        else:
            rng = np.random.Generator(np.random.PCG64(cfg.hash_seed))
            remaining = payload
            while remaining > 0:
                n = min(remaining, 1 << 24)
                fh.write(rng.bytes(n))
                remaining -= n
    print(f"wrote {out} ({out.stat().st_size} bytes, fill={args.fill})")
    return 0


def _export_plan_csv(plan: GatherPlan, path, preamble: dict) -> None:
    rows = (
        (a.row, a.head, a.order_idx, a.byte_offset, a.length)
        for a in plan.addresses()
    )
    _write_csv(
        path,
        "gather-trace",
        preamble,
        ["row", "head", "order_idx", "byte_offset", "length"],
        rows,
    )


def cmd_bench_gather(args) -> int:
    cfg, overrides = resolve_config(args)
    if any(b <= 0 for b in args.batch_sizes):
        raise SystemExit("batch sizes must be positive")
    backend = _make_backend(args.backend, cfg, args.table, overrides)
    modeled = isinstance(backend, ModeledBackend)

    rows = []
    for batch in args.batch_sizes:
        ctx = _synthetic_batch(batch, cfg, args.seed)
        plan = plan_gather(ctx, cfg)
        dest = np.empty(plan.total_bytes, dtype=np.uint8)
        if args.trace and batch == args.batch_sizes[0]:
            _export_plan_csv(plan, args.trace, _config_preamble(cfg))

        if modeled:
            report = read_segments(backend, plan, dest, workers=args.workers)
            p50 = p99 = mean = report.modeled_ns
            modeled_ns = report.modeled_ns
        else:
            for _ in range(args.warmup):
                read_segments(backend, plan, dest, workers=args.workers)
            samples = []
            for _ in range(args.repetitions):
                t0 = time.perf_counter_ns()
                inner = 1
                read_segments(backend, plan, dest, workers=args.workers)
                elapsed = time.perf_counter_ns() - t0
                if elapsed < 1_000:
                    # Sub-microsecond point: repeat in an inner loop and divide.
                    inner = 100
                    t0 = time.perf_counter_ns()
                    for _ in range(inner):
                        read_segments(backend, plan, dest, workers=args.workers)
                    elapsed = time.perf_counter_ns() - t0
                samples.append(elapsed / inner)
            samples.sort()
            p50 = float(np.percentile(samples, 50))
            p99 = float(np.percentile(samples, 99))
            mean = statistics.fmean(samples)
            modeled_ns = p50
        rows.append(
            (batch, _backend_label(args.backend), p50, p99, mean,
             plan.total_bytes, modeled_ns)
        )

    preamble = _config_preamble(cfg)
    preamble.update(
        backend=args.backend,
        seed=args.seed,
        workers=args.workers,
        repetitions=args.repetitions,
        warmup=args.warmup,
    )
    if modeled:
        preamble.update(_fabric_preamble(backend.model))
    header = ["batch", "backend", "p50_ns", "p99_ns", "mean_ns", "bytes", "modeled_ns"]
    if args.out:
        _write_csv(args.out, "bench-gather", preamble, header, rows)
        print(f"wrote {args.out}")
    print(",".join(header))
    for row in rows:
        print(",".join(_fmt(v) for v in row))
    return 0


def cmd_simulate(args) -> int:
    cfg, overrides = resolve_config(args)
    if args.batch <= 0:
        raise SystemExit("batch must be positive")
    timeline = StepTimeline.from_config(cfg, args.step_ns)
    payload = payload_bytes_per_token_layer(cfg)

    summary = []
    step_rows = []
    baseline_total_ns = timeline.compute_ns * args.steps
    baseline_tps = args.batch * args.steps / (baseline_total_ns * 1e-9)
    summary.append(("baseline", args.steps, args.batch, baseline_total_ns,
                    baseline_tps, 0.0, 0.0))

    for spec in args.backend:
        backend = _make_backend(spec, cfg, args.table, overrides)
        total_ns = 0.0
        stall_total = 0.0
        for step in range(args.steps):
            ctx = _synthetic_batch(args.batch, cfg, args.seed + step)
            rec = simulate_decode_step(cfg, backend, ctx, timeline,
                                       workers=args.workers)
            total_ns += rec.step_ns
            stall_total += rec.stall_total_ns
            for k in sorted(rec.stalls_ns):
                step_rows.append(
                    (args.batch, spec, k, rec.deadlines_ns[k],
                     rec.completions_ns[k], rec.stalls_ns[k], rec.step_ns)
                )
        tps = args.batch * args.steps / (total_ns * 1e-9)
        overhead_pct = 100.0 * (baseline_tps - tps) / baseline_tps
        summary.append((spec, args.steps, args.batch, total_ns, tps,
                        stall_total, overhead_pct))

    preamble = _config_preamble(cfg)
    preamble.update(
        backends=" ".join(args.backend),
        seed=args.seed,
        workers=args.workers,
        steps=args.steps,
        batch=args.batch,
        step_ns=args.step_ns,
        payload_bytes_per_token_layer=payload,
    )
    header = ["backend", "steps", "batch", "total_ns", "tokens_per_s",
              "stall_total_ns", "overhead_pct"]
    if args.out:
        out = Path(args.out)
        _write_csv(out, "simulate", preamble, header, summary)
        steps_path = out.with_suffix(".steps.csv")
        _write_csv(
            steps_path,
            "simulate-steps",
            preamble,
            ["batch", "backend", "layer", "deadline_ns", "completion_ns",
             "stall_ns", "step_ns"],
            step_rows,
        )
        print(f"wrote {out} and {steps_path}")

    print("| backend | tokens/s | stall total (ns) | overhead vs baseline |")
    print("|---|---|---|---|")
    for name, _, _, _, tps, stall, overhead in summary:
        print(f"| {name} | {tps:,.1f} | {stall:,.1f} | {overhead:.2f}% |")
    return 0


def cmd_requirements(args) -> int:
    inp = analysis.RequirementsInput.uniform_layers(
        step_ns=args.step_ns,
        total_layers=args.total_layers,
        throughput_tps=args.throughput_tps,
        s_layer_bytes=args.payload_bytes,
        n_eng=args.n_eng,
        n_token=args.n_token,
        engram_layer=args.layer_k,
        pool_latency_ns=args.pool_latency_ns,
    )
    need = analysis.required_bandwidth(inp)
    window = analysis.prefetch_window_ns(inp)

    print("# Pool requirements")
    print(f"- required bandwidth: {int(round(need)):,} B/s "
          f"(~ {need / 1e9:.1f} GB/s)")
    print(f"- prefetch window (k={args.layer_k}): {int(round(window)):,} ns "
          f"(~ {window / 1e3:.0f} us)")
    rows = [("required_bandwidth_bps", need), ("prefetch_window_ns", window)]
    if args.pool_bandwidth is not None:
        report = analysis.check_constraints(inp, args.pool_bandwidth)
        print(f"- bandwidth_ok: {report.bandwidth_ok} "
              f"(margin {report.bandwidth_margin_bps:,.0f} B/s)")
        print(f"- latency_ok: {report.latency_ok} "
              f"(margin {report.latency_margin_ns:,.0f} ns)")
        rows += [
            ("bandwidth_ok", int(report.bandwidth_ok)),
            ("latency_ok", int(report.latency_ok)),
            ("bandwidth_margin_bps", report.bandwidth_margin_bps),
            ("latency_margin_ns", report.latency_margin_ns),
        ]
    if args.out:
        preamble = {
            "throughput_tps": args.throughput_tps,
            "payload_bytes": args.payload_bytes,
            "n_eng": args.n_eng,
            "n_token": args.n_token,
            "step_ns": args.step_ns,
            "total_layers": args.total_layers,
            "layer_k": args.layer_k,
            "pool_latency_ns": args.pool_latency_ns,
            "pool_bandwidth_bps": args.pool_bandwidth,
        }
        _write_csv(args.out, "requirements", preamble,
                   ["quantity", "value"], rows)
        print(f"wrote {args.out}")
    return 0


def _dollars(v: float) -> str:
    sign = "-" if v < 0 else ""
    return f"{sign}${abs(v):,.0f}"


def cmd_cost(args) -> int:
    rows = []
    for params_b in args.engram_sizes_b:
        gb = analysis.table_gb_for_params(params_b, args.bytes_per_param)
        for nodes in args.nodes:
            c = analysis.CostInput(
                dram_per_gb=args.dram_per_gb,
                switch_cost=args.switch_cost,
                adapter_cost=args.adapter_cost,
                controller_cost=args.controller_cost,
                nodes=nodes,
                table_gb=gb,
            )
            rows.append(
                (f"{params_b:g}B", gb, nodes, analysis.local_cost(c),
                 analysis.pool_cost(c), analysis.savings(c))
            )

    print("| Engram | Nodes | Local | CXL Pool | Savings |")
    print("|---|---|---|---|---|")
    for label, _, nodes, local, pool, diff in rows:
        print(f"| {label} | {nodes} | {_dollars(local)} | {_dollars(pool)} "
              f"| {_dollars(diff)} |")
    if args.out:
        preamble = {
            "dram_per_gb": args.dram_per_gb,
            "switch_cost": args.switch_cost,
            "adapter_cost": args.adapter_cost,
            "controller_cost": args.controller_cost,
            "bytes_per_param": args.bytes_per_param,
            "nodes": " ".join(map(str, args.nodes)),
            "engram_sizes_b": " ".join(f"{s:g}" for s in args.engram_sizes_b),
        }
        _write_csv(
            args.out,
            "cost",
            preamble,
            ["engram", "table_gb", "nodes", "local_cost", "pool_cost", "savings"],
            rows,
        )
        print(f"wrote {args.out}")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engrampool",
        description="Hashed n-gram embedding retrieval over pooled-memory "
        "backends: benchmarks, simulation, and requirement/cost reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-table", help="write a table file")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--fill", choices=["zeros", "random"], default="zeros")
    p.set_defaults(func=cmd_build_table)

    p = sub.add_parser("bench-gather", help="latency sweep over batch sizes")
    _add_config_flags(p)
    p.add_argument("--backend", default="local",
                   help="local | mapped | modeled:PRESET "
                   f"(presets: {', '.join(sorted(FABRIC_PRESETS))})")
    p.add_argument("--table", help="table file path (mapped/modeled backends)")
    p.add_argument("--batch-sizes", type=_int_list, default=_int_list(DEFAULT_BATCH_SIZES))
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--trace", help="export the first gather plan as CSV")
    p.set_defaults(func=cmd_bench_gather)

    p = sub.add_parser("simulate", help="simulated decode-step throughput")
    _add_config_flags(p)
    p.add_argument("--backend", action="append", default=None,
                   help="repeatable; local | mapped | modeled:PRESET")
    p.add_argument("--table")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--batch", type=int, default=CASE_N_TOKEN)
    p.add_argument("--step-ns", type=float, default=CASE_STEP_NS)
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("requirements", help="bandwidth/latency requirement report")
    p.add_argument("--throughput-tps", type=float, default=CASE_THROUGHPUT_TPS)
    p.add_argument("--payload-bytes", type=int, default=CASE_PAYLOAD_BYTES)
    p.add_argument("--n-eng", type=int, default=CASE_N_ENG)
    p.add_argument("--n-token", type=int, default=CASE_N_TOKEN)
    p.add_argument("--step-ns", type=float, default=CASE_STEP_NS)
    p.add_argument("--total-layers", type=int, default=CASE_TOTAL_LAYERS)
    p.add_argument("--layer-k", type=int, default=CASE_LAYER_K)
    p.add_argument("--pool-bandwidth", type=float, default=None,
                   help="pool bandwidth in bytes/sec to check against")
    p.add_argument("--pool-latency-ns", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_requirements)

    p = sub.add_parser("cost", help="local-DRAM vs pooled-memory cost sweep")
    p.add_argument("--dram-per-gb", type=float, required=True,
                   help="DRAM cost per decimal GB")
    p.add_argument("--switch-cost", type=float, default=COST_SWITCH)
    p.add_argument("--adapter-cost", type=float, default=COST_ADAPTER)
    p.add_argument("--controller-cost", type=float, default=COST_CONTROLLER)
    p.add_argument("--nodes", type=_int_list, default=[2, 4, 8, 16])
    p.add_argument("--engram-sizes-b", type=_float_list, default=[100.0, 400.0],
                   help="parameter counts in billions")
    p.add_argument("--bytes-per-param", type=float,
                   default=analysis.DEFAULT_BYTES_PER_PARAM)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "simulate" and not args.backend:
        args.backend = ["modeled:dram", "modeled:cxl"]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
