"""Asynchronous prefetch against a simulated per-layer decode clock."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .backends import GatherReport, ModeledBackend, StorageBackend, read_segments
from .config import EngramConfig, validate_config
from .indexer import GatherPlan, TokenContext, plan_gather


@dataclass
class StepTimeline:
    """Per-layer compute clock for one decode step.

    Deadlines are prefix sums: retrieval for Engram layer ``k`` must land
    before the first ``k-1`` layers finish computing.
    """

    layer_exec_ns: tuple[float, ...]
    engram_layers: tuple[int, ...]
    completions_ns: dict[int, float] = field(default_factory=dict)
    stalls_ns: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.layer_exec_ns = tuple(float(t) for t in self.layer_exec_ns)
        self.engram_layers = tuple(int(k) for k in self.engram_layers)
        for k in self.engram_layers:
            if not 1 <= k <= len(self.layer_exec_ns):
                raise ValueError(f"engram layer {k} outside 1..{len(self.layer_exec_ns)}")

    @classmethod
    def uniform(
        cls, step_ns: float, total_layers: int, engram_layers: tuple[int, ...]
    ) -> "StepTimeline":
        per_layer = step_ns / total_layers
        return cls(
            layer_exec_ns=(per_layer,) * total_layers, engram_layers=engram_layers
        )

    @classmethod
    def from_config(cls, cfg: EngramConfig, step_ns: float) -> "StepTimeline":
        return cls.uniform(step_ns, cfg.total_layers, cfg.engram_layers)

    def deadline_ns(self, k: int) -> float:
        if not 1 <= k <= len(self.layer_exec_ns):
            raise ValueError(f"layer {k} outside 1..{len(self.layer_exec_ns)}")
        return float(sum(self.layer_exec_ns[: k - 1]))

    @property
    def compute_ns(self) -> float:
        return float(sum(self.layer_exec_ns))

    def record(self, k: int, completion_ns: float) -> float:
        stall = max(0.0, completion_ns - self.deadline_ns(k))
        self.completions_ns[k] = completion_ns
        self.stalls_ns[k] = stall
        return stall


class PrefetchHandle:
    """In-flight gather; the destination is readable only after completion."""

    def __init__(self, backend: StorageBackend, plan: GatherPlan, destination,
                 workers: int):
        self.plan = plan
        self.destination = destination
        self._backend = backend
        self._workers = workers
        self._report: GatherReport | None = None
        self._error: BaseException | None = None
        self._issue_ns = time.perf_counter_ns()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self) -> None:
        try:
            report = read_segments(
                self._backend, self.plan, self.destination, workers=self._workers
            )
            # Wall completion is measured from issue, including thread startup;
            # modeled backends keep the analytic service time instead.
            if not isinstance(self._backend, ModeledBackend):
                report.modeled_ns = float(time.perf_counter_ns() - self._issue_ns)
            self._report = report
        except BaseException as exc:  # surfaced at await time
            self._error = exc

    @property
    def state(self) -> str:
        return "complete" if not self._thread.is_alive() else "issued"

    def wait(self) -> GatherReport:
        self._thread.join()
        if self._error is not None:
            raise self._error
        assert self._report is not None
        return self._report

    @property
    def completion_ns(self) -> float:
        """Service time of the gather: modeled for Modeled backends, else wall."""
        return self.wait().modeled_ns


def issue_prefetch(
    backend: StorageBackend, plan: GatherPlan, destination=None, workers: int = 1
) -> PrefetchHandle:
    """Start a gather without blocking the caller."""
    if destination is None:
        destination = np.empty(plan.total_bytes, dtype=np.uint8)
    return PrefetchHandle(backend, plan, destination, workers)


def await_before_layer(handle: PrefetchHandle, timeline: StepTimeline, k: int) -> float:
    """Block until the gather lands; return and record the stall at layer ``k``."""
    if k not in timeline.engram_layers:
        raise ValueError(f"layer {k} is not an Engram layer ({timeline.engram_layers})")
    handle.wait()
    return timeline.record(k, handle.completion_ns)


@dataclass
class StepRecord:
    step_ns: float
    compute_ns: float
    bytes_moved: int
    deadlines_ns: dict[int, float]
    completions_ns: dict[int, float]
    stalls_ns: dict[int, float]

    @property
    def stall_total_ns(self) -> float:
        return float(sum(self.stalls_ns.values()))


def simulate_decode_step(
    cfg: EngramConfig,
    backend: StorageBackend,
    batch: TokenContext | None,
    timeline: StepTimeline,
    workers: int = 1,
) -> StepRecord:
    """One decode step: prefetch per Engram layer at step start, stalls added.

    Stall accounting is additive (a conservative upper bound). An empty batch
    runs the compute clock with no gathers.
    """
    validate_config(cfg)
    timeline = StepTimeline(timeline.layer_exec_ns, timeline.engram_layers)
    if batch is None or not batch.positions:
        return StepRecord(
            step_ns=timeline.compute_ns,
            compute_ns=timeline.compute_ns,
            bytes_moved=0,
            deadlines_ns={},
            completions_ns={},
            stalls_ns={},
        )

    handles = {
        k: issue_prefetch(backend, plan_gather(batch, cfg), workers=workers)
        for k in timeline.engram_layers
    }
    bytes_moved = 0
    for k in timeline.engram_layers:
        await_before_layer(handles[k], timeline, k)
        bytes_moved += handles[k].wait().bytes_moved

    step_ns = timeline.compute_ns + sum(timeline.stalls_ns.values())
    return StepRecord(
        step_ns=step_ns,
        compute_ns=timeline.compute_ns,
        bytes_moved=bytes_moved,
        deadlines_ns={k: timeline.deadline_ns(k) for k in timeline.engram_layers},
        completions_ns=dict(timeline.completions_ns),
        stalls_ns=dict(timeline.stalls_ns),
    )
