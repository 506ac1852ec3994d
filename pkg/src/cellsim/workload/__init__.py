"""Workload ingestion: trace parsing, events, constraints, anomaly handling,
synthetic generation and the shared-state store."""

from .anomalies import AnomalyKind, AnomalyReport, AnomalySink, filter_anomalies
from .constraints import (
    ConstraintOperator,
    TaskConstraint,
    check_constraint,
    matches_attributes,
    matches_node,
)
from .events import EventBatch, EventKind, WorkloadEvent, sort_events
from .parsers import ColumnLayout, ParserConfig, map_task_action, open_trace_directory, parse_trace_file
from .state import CellState
from .store import StateStore
from .synth import SynthConfig, synth_generate
from .window import BufferedEventSource, WindowCollector

__all__ = [
    "AnomalyKind", "AnomalyReport", "AnomalySink", "filter_anomalies",
    "ConstraintOperator", "TaskConstraint", "check_constraint",
    "matches_attributes", "matches_node",
    "EventBatch", "EventKind", "WorkloadEvent", "sort_events",
    "ColumnLayout", "ParserConfig", "map_task_action",
    "open_trace_directory", "parse_trace_file",
    "CellState", "StateStore",
    "SynthConfig", "synth_generate",
    "BufferedEventSource", "WindowCollector",
]
