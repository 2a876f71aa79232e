#!/usr/bin/env python3
"""Simulated decode throughput: baseline vs each fabric preset.

Uses the case-study timeline (3.6 ms step over 64 layers, retrieval at
layers 2 and 15, batch 256) and writes summary plus per-step CSVs under
results/.
"""

import sys
from pathlib import Path

from engrampool.cli import main

RESULTS = Path(__file__).resolve().parent.parent / "results"

FLAGS = [
    "--num-rows", "65536",
    "--emb-dim", "1280",
    "--num-heads", "8",
    "--ngram-orders", "2,3",
    "--elem-bytes", "2",
    "--engram-layers", "2,15",
    "--total-layers", "64",
]


def run() -> int:
    RESULTS.mkdir(exist_ok=True)
    main([
        "simulate", *FLAGS,
        "--backend", "modeled:dram",
        "--backend", "modeled:cxl",
        "--backend", "modeled:rdma",
        "--steps", "100",
        "--batch", "256",
        "--out", str(RESULTS / "simulate.csv"),
    ])
    main(["requirements", "--pool-bandwidth", "12.5e9",
          "--out", str(RESULTS / "requirements.csv")])
    main(["cost", "--dram-per-gb", "15", "--out", str(RESULTS / "cost.csv")])
    return 0


if __name__ == "__main__":
    sys.exit(run())
