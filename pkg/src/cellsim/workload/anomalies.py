"""Trace irregularity detection and reporting.

Real traces contain corrupt records, tasks whose constraints no machine can
ever satisfy, and windows where reported global usage exceeds global
capacity.  The first two are dropped and counted; over-usage windows are only
flagged so metrics can exclude them, since the underlying events are real.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

from . import events as ev
from .constraints import matches_attributes


class AnomalyKind(enum.Enum):
    UNMATCHABLE_CONSTRAINTS = "UnmatchableConstraints"
    OVER_USAGE_WINDOW = "OverUsageWindow"
    CORRUPT_RECORD = "CorruptRecord"


@dataclass(frozen=True)
class AnomalyReport:
    kind: AnomalyKind
    detail: str
    count: int = 1

    def as_line(self) -> str:
        return f"{self.kind.value}\t{self.count}\t{self.detail}"


class AnomalySink:
    """Collects anomaly reports; optionally forwards each to a writer."""

    def __init__(self, writer: Optional[Callable[[str], None]] = None):
        self.reports: list[AnomalyReport] = []
        self.counts: dict[AnomalyKind, int] = {kind: 0 for kind in AnomalyKind}
        self._writer = writer

    def report(self, kind: AnomalyKind, detail: str, count: int = 1) -> None:
        record = AnomalyReport(kind, detail, count)
        self.reports.append(record)
        self.counts[kind] += count
        if self._writer is not None:
            self._writer(record.as_line())

    def count(self, kind: AnomalyKind) -> int:
        return self.counts[kind]

    def drain(self) -> list[AnomalyReport]:
        out = self.reports
        self.reports = []
        return out


def filter_anomalies(cell_state, batch: ev.EventBatch,
                     memory_index: Optional[int] = None) -> tuple[ev.EventBatch, list[AnomalyReport]]:
    """Drop unmatchable task additions; flag over-usage windows.

    A task whose constraints match no node in the current cell can never be
    placed, so its AddTask is dropped and reported.  Node events are never
    dropped.  When the summed used memory of all tasks exceeds total cell
    memory within this window, the batch is flagged (events retained).
    """
    reports: list[AnomalyReport] = []
    node_attributes = [node.attributes for node in cell_state.nodes.values()]
    kept: list[ev.WorkloadEvent] = []
    dropped = 0
    for event in batch:
        if isinstance(event, ev.AddTaskEvent) and event.constraints:
            if not any(matches_attributes(event.constraints, attrs) for attrs in node_attributes):
                dropped += 1
                reports.append(AnomalyReport(
                    AnomalyKind.UNMATCHABLE_CONSTRAINTS,
                    f"task {event.task_id} matches no node; dropped",
                ))
                continue
        kept.append(event)

    if memory_index is None and "memory" in cell_state.catalog.names:
        memory_index = cell_state.catalog.index("memory")
    if memory_index is not None and cell_state.nodes:
        capacity = sum(node.total[memory_index] for node in cell_state.nodes.values())
        used = sum(task.used[memory_index] for task in cell_state.tasks.values())
        if capacity > 0 and used > capacity:
            reports.append(AnomalyReport(
                AnomalyKind.OVER_USAGE_WINDOW,
                f"window [{batch.window_start},{batch.window_end}): "
                f"used memory {used:.4f} exceeds capacity {capacity:.4f}",
            ))

    filtered = ev.EventBatch(batch.window_start, batch.window_end, tuple(kept))
    return filtered, reports
