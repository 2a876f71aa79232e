"""Pool bandwidth/latency requirement checks and the hardware cost model."""

from __future__ import annotations

from dataclasses import dataclass

GB = 10**9  # cost model uses decimal GB; the data path uses exact bytes

# Dollars per GB of parameters at 2 bytes each (100B params -> 200 GB).
DEFAULT_BYTES_PER_PARAM = 2


@dataclass(frozen=True)
class RequirementsInput:
    throughput_tps: float            # tokens/sec across the system
    s_layer_bytes: int               # bytes retrieved per token per layer
    n_eng: int                       # layers hosting retrieval modules
    n_token: int                     # tokens triggering retrieval per step
    layer_exec_ns: tuple[float, ...]
    engram_layer: int                # 1-based layer index under analysis
    pool_latency_ns: float = 0.0     # measured or modeled gather latency

    def __post_init__(self):
        object.__setattr__(
            self, "layer_exec_ns", tuple(float(t) for t in self.layer_exec_ns)
        )
        if self.throughput_tps < 0 or self.s_layer_bytes < 0 or self.n_eng < 0:
            raise ValueError("throughput, payload, and layer count must be >= 0")
        if self.n_token < 1:
            raise ValueError(f"n_token must be >= 1, got {self.n_token}")
        if not 1 <= self.engram_layer <= len(self.layer_exec_ns):
            raise ValueError(
                f"engram_layer {self.engram_layer} outside "
                f"1..{len(self.layer_exec_ns)}"
            )

    @classmethod
    def uniform_layers(
        cls, step_ns: float, total_layers: int, **kwargs
    ) -> "RequirementsInput":
        per_layer = step_ns / total_layers
        return cls(layer_exec_ns=(per_layer,) * total_layers, **kwargs)


def required_bandwidth(inp: RequirementsInput) -> float:
    """Average pool read bandwidth the workload demands, bytes/sec."""
    return inp.throughput_tps * inp.s_layer_bytes * inp.n_eng


def prefetch_window_ns(inp: RequirementsInput) -> float:
    """Compute time of all layers before the retrieval layer."""
    return float(sum(inp.layer_exec_ns[: inp.engram_layer - 1]))


@dataclass(frozen=True)
class ConstraintReport:
    bandwidth_ok: bool
    latency_ok: bool
    bandwidth_margin_bps: float   # pool bandwidth minus requirement
    latency_margin_ns: float      # window minus pool latency


def check_constraints(
    inp: RequirementsInput, pool_bandwidth_bps: float
) -> ConstraintReport:
    """Both inequalities are strict: equality fails."""
    need = required_bandwidth(inp)
    window = prefetch_window_ns(inp)
    return ConstraintReport(
        bandwidth_ok=pool_bandwidth_bps > need,
        latency_ok=inp.pool_latency_ns < window,
        bandwidth_margin_bps=pool_bandwidth_bps - need,
        latency_margin_ns=window - inp.pool_latency_ns,
    )


@dataclass(frozen=True)
class CostInput:
    dram_per_gb: float
    switch_cost: float
    adapter_cost: float
    controller_cost: float
    nodes: int
    table_gb: float

    def __post_init__(self):
        if min(
            self.dram_per_gb,
            self.switch_cost,
            self.adapter_cost,
            self.controller_cost,
            self.table_gb,
        ) < 0:
            raise ValueError("costs and capacity must be >= 0")
        if self.nodes < 1:
            raise ValueError(f"nodes must be >= 1, got {self.nodes}")


def table_gb_for_params(
    params_billion: float, bytes_per_param: float = DEFAULT_BYTES_PER_PARAM
) -> float:
    """Table footprint in decimal GB for a parameter count in billions."""
    return params_billion * bytes_per_param


def local_cost(c: CostInput) -> float:
    """Every node provisions the full table in its own DRAM."""
    return c.nodes * c.table_gb * c.dram_per_gb


def pool_cost(c: CostInput) -> float:
    """One shared pool: switch, per-node adapter+controller pair, one table."""
    return (
        c.switch_cost
        + c.nodes * (c.adapter_cost + c.controller_cost)
        + c.table_gb * c.dram_per_gb
    )


def savings(c: CostInput) -> float:
    """Local minus pooled cost; negative when pooling loses at small scale."""
    return local_cost(c) - pool_cost(c)
