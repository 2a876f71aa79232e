#!/usr/bin/env python3
"""Batch-size latency sweep across local, mapped, and modeled backends.

Builds a desk-scale table (27B-style geometry truncated to ~128 MB), then
runs the gather benchmark for each backend and writes one CSV per backend
under results/.
"""

import sys
from pathlib import Path

from engrampool.cli import main

RESULTS = Path(__file__).resolve().parent.parent / "results"

FLAGS = [
    "--num-rows", "50000",
    "--emb-dim", "1280",
    "--num-heads", "8",
    "--ngram-orders", "2,3",
    "--elem-bytes", "2",
    "--hash-seed", "7",
]

BACKENDS = ["local", "mapped", "modeled:dram", "modeled:cxl", "modeled:rdma"]


def run() -> int:
    RESULTS.mkdir(exist_ok=True)
    table = RESULTS / "sweep_table.engt"
    if not table.exists():
        main(["build-table", *FLAGS, "--out", str(table), "--fill", "random"])
    for backend in BACKENDS:
        out = RESULTS / f"gather_{backend.replace(':', '_')}.csv"
        main([
            "bench-gather", *FLAGS,
            "--backend", backend,
            "--table", str(table),
            "--batch-sizes", "1,2,4,8,16,32,64,128,256,512",
            "--workers", "8",
            "--out", str(out),
        ])
    return 0


if __name__ == "__main__":
    sys.exit(run())
