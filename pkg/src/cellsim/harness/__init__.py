"""Simulation driver, outputs, snapshots, scaling and the CLI."""

from .config import ConfigError, RunConfig
from .outputs import RunOutputs, TickRecord, TICKS_HEADER
from .runner import (
    InfeasibleWorkloadError,
    MetaheuristicEngine,
    ReplayEngine,
    SimulationRunner,
    TraceError,
)
from .scaling import IdCollisionError, clone_id, compaction_events, scale_cell
from .snapshot import SnapshotError, load_snapshot, save_snapshot
from .tracewriter import write_synthetic_trace

__all__ = [
    "ConfigError", "RunConfig", "RunOutputs", "TickRecord", "TICKS_HEADER",
    "InfeasibleWorkloadError", "MetaheuristicEngine", "ReplayEngine",
    "SimulationRunner", "TraceError",
    "IdCollisionError", "clone_id", "compaction_events", "scale_cell",
    "SnapshotError", "load_snapshot", "save_snapshot",
    "write_synthetic_trace",
]
