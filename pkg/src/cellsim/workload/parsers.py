"""CSV trace parsers producing workload event streams.

Traces arrive as six directories of (optionally gzipped) ``part-*.csv``
files.  The exact column layout is configuration, not code: a declarative
column map ships with a default matching the public cluster-trace v2 format,
so schema drift never requires code changes.  Malformed lines are counted and
skipped; a parser must never crash the simulation.
"""

from __future__ import annotations

import csv
import gzip
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from . import events as ev
from .anomalies import AnomalyKind, AnomalySink
from .constraints import ConstraintOperator, TaskConstraint

TRACE_KINDS = (
    "machine_events",
    "machine_attributes",
    "job_events",
    "task_events",
    "task_usage",
    "task_constraints",
)

#: Ten-minute shift: trace timestamps below this describe pre-existing cell
#: state, so the default offset re-bases them to simulation time zero.
GCD_TIME_SHIFT_US = 600 * 1_000_000

# Machine event codes.
MACHINE_ADD, MACHINE_REMOVE, MACHINE_UPDATE = 0, 1, 2

# Task event codes.
TASK_ACTIONS = {
    0: "SUBMIT",
    1: "SCHEDULE",
    2: "EVICT",
    3: "FAIL",
    4: "FINISH",
    5: "KILL",
    6: "LOST",
    7: "UPDATE_PENDING",
    8: "UPDATE_RUNNING",
}

CONSTRAINT_OPERATORS = {
    0: ConstraintOperator.EQUAL,
    1: ConstraintOperator.NOT_EQUAL,
    2: ConstraintOperator.LESS_THAN,
    3: ConstraintOperator.GREATER_THAN,
}


@dataclass(frozen=True)
class ColumnLayout:
    """Column indices per trace file kind (cluster-trace v2 defaults)."""

    machine_events: dict = field(default_factory=lambda: {
        "timestamp": 0, "machine_id": 1, "event_type": 2,
        "platform_id": 3, "cpus": 4, "memory": 5,
    })
    machine_attributes: dict = field(default_factory=lambda: {
        "timestamp": 0, "machine_id": 1, "attribute_name": 2,
        "attribute_value": 3, "deleted": 4,
    })
    task_events: dict = field(default_factory=lambda: {
        "timestamp": 0, "job_id": 2, "task_index": 3, "machine_id": 4,
        "event_type": 5, "scheduling_class": 7, "priority": 8,
        "cpu_request": 9, "memory_request": 10,
    })
    task_usage: dict = field(default_factory=lambda: {
        "start_time": 0, "end_time": 1, "job_id": 2, "task_index": 3,
        "machine_id": 4, "cpu_rate": 5, "canonical_memory": 6,
        "assigned_memory": 7,
    })
    task_constraints: dict = field(default_factory=lambda: {
        "timestamp": 0, "job_id": 1, "task_index": 2,
        "comparison_operator": 3, "attribute_name": 4, "attribute_value": 5,
    })
    job_events: dict = field(default_factory=lambda: {
        "timestamp": 0, "job_id": 2, "event_type": 3, "user": 4,
        "scheduling_class": 5,
    })

    @classmethod
    def from_dict(cls, raw: dict) -> "ColumnLayout":
        base = cls()
        merged = {}
        for kind in TRACE_KINDS:
            layout = dict(getattr(base, kind))
            layout.update(raw.get(kind, {}))
            merged[kind] = layout
        return cls(**merged)


@dataclass
class ParserConfig:
    layout: ColumnLayout = field(default_factory=ColumnLayout)
    time_offset_us: int = GCD_TIME_SHIFT_US
    #: Priority at or above this marks a production task (trace convention:
    #: the top priority band is production).
    production_priority: int = 9
    #: Pending task-constraint sets are attached to the matching AddTask.
    attach_pending_constraints: bool = True


class Row:
    """One CSV record with typed, error-checked field access."""

    __slots__ = ("values", "columns")

    def __init__(self, values: list[str], columns: dict):
        self.values = values
        self.columns = columns

    def get(self, name: str, default: str = "") -> str:
        index = self.columns[name]
        if index >= len(self.values):
            return default
        return self.values[index]

    def require(self, name: str) -> str:
        value = self.get(name)
        if value == "":
            raise ValueError(f"missing required field {name!r}")
        return value

    def int_field(self, name: str) -> int:
        return int(self.require(name))

    def float_field(self, name: str, default: float | None = None) -> float:
        raw = self.get(name)
        if raw == "":
            if default is None:
                raise ValueError(f"missing required field {name!r}")
            return default
        return float(raw)


def _open_maybe_gzip(path: Path) -> io.TextIOBase:
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def iter_csv_rows(paths: Iterable[Path], columns: dict, sink: AnomalySink) -> Iterator[Row]:
    for path in paths:
        try:
            handle = _open_maybe_gzip(path)
        except OSError as exc:
            sink.report(AnomalyKind.CORRUPT_RECORD, f"cannot open {path}: {exc}")
            continue
        with handle:
            for line_no, values in enumerate(csv.reader(handle), start=1):
                if not values:
                    continue
                yield Row(values, columns)


def trace_files(trace_dir: Path, kind: str) -> list[Path]:
    directory = Path(trace_dir) / kind
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir()
                  if p.name.startswith("part-") and (p.suffix == ".csv" or p.name.endswith(".csv.gz")))


def map_task_action(action: str, row: Row, config: ParserConfig,
                    sink: AnomalySink, timestamp: int) -> Optional[ev.WorkloadEvent]:
    """Trace action -> event: submit adds, terminal actions remove, updates
    refresh requirements; scheduler-internal actions produce nothing."""
    task_id = f"{row.require('job_id')}-{row.require('task_index')}"
    if action == "SUBMIT":
        priority = int(row.get("priority") or 0)
        machine = row.get("machine_id")
        return ev.AddTaskEvent(
            timestamp=timestamp,
            task_id=task_id,
            required=(row.float_field("cpu_request", 0.0), row.float_field("memory_request", 0.0)),
            priority=priority,
            production=priority >= config.production_priority,
            recorded_node=machine or None,
        )
    if action == "SCHEDULE":
        return None
    if action in ("EVICT", "FAIL", "FINISH", "KILL", "LOST"):
        return ev.RemoveTaskEvent(timestamp=timestamp, task_id=task_id)
    if action in ("UPDATE_PENDING", "UPDATE_RUNNING"):
        return ev.UpdateTaskRequiredEvent(
            timestamp=timestamp,
            task_id=task_id,
            required=(row.float_field("cpu_request", 0.0), row.float_field("memory_request", 0.0)),
            priority=int(row.get("priority") or 0),
        )
    sink.report(AnomalyKind.CORRUPT_RECORD, f"unknown task action {action!r}")
    return None


class EventParser:
    """Base parser: reads rows, emits events in file order, skips bad lines."""

    kind: str = ""

    def __init__(self, paths: Iterable[Path], config: ParserConfig | None = None,
                 sink: AnomalySink | None = None):
        self.config = config or ParserConfig()
        self.sink = sink if sink is not None else AnomalySink()
        self.paths = list(paths)

    @classmethod
    def for_directory(cls, trace_dir: Path, config: ParserConfig | None = None,
                      sink: AnomalySink | None = None) -> "EventParser":
        return cls(trace_files(trace_dir, cls.kind), config, sink)

    def _shift(self, timestamp: int) -> int:
        return max(0, timestamp - self.config.time_offset_us)

    def _columns(self) -> dict:
        return getattr(self.config.layout, self.kind)

    def __iter__(self) -> Iterator[ev.WorkloadEvent]:
        for row in iter_csv_rows(self.paths, self._columns(), self.sink):
            try:
                event = self.parse_row(row)
            except (ValueError, KeyError, IndexError) as exc:
                self.sink.report(AnomalyKind.CORRUPT_RECORD, f"{self.kind}: {exc}")
                continue
            if event is not None:
                yield event

    def parse_row(self, row: Row) -> Optional[ev.WorkloadEvent]:
        raise NotImplementedError


class MachineEventsParser(EventParser):
    kind = "machine_events"

    def parse_row(self, row: Row) -> Optional[ev.WorkloadEvent]:
        timestamp = self._shift(row.int_field("timestamp"))
        machine_id = row.require("machine_id")
        code = row.int_field("event_type")
        if code == MACHINE_ADD:
            return ev.AddNodeEvent(
                timestamp=timestamp, node_id=machine_id,
                total=(row.float_field("cpus", 0.0), row.float_field("memory", 0.0)),
            )
        if code == MACHINE_REMOVE:
            return ev.RemoveNodeEvent(timestamp=timestamp, node_id=machine_id)
        if code == MACHINE_UPDATE:
            return ev.UpdateNodeTotalEvent(
                timestamp=timestamp, node_id=machine_id,
                total=(row.float_field("cpus", 0.0), row.float_field("memory", 0.0)),
            )
        raise ValueError(f"unknown machine event code {code}")


class MachineAttributesParser(EventParser):
    kind = "machine_attributes"

    def parse_row(self, row: Row) -> Optional[ev.WorkloadEvent]:
        timestamp = self._shift(row.int_field("timestamp"))
        machine_id = row.require("machine_id")
        name = row.require("attribute_name")
        if row.get("deleted") == "1":
            return ev.RemoveNodeAttributesEvent(
                timestamp=timestamp, node_id=machine_id, attribute_names=(name,),
            )
        return ev.AddNodeAttributesEvent(
            timestamp=timestamp, node_id=machine_id,
            attributes=((name, row.get("attribute_value")),),
        )


class TaskEventsParser(EventParser):
    kind = "task_events"

    def __init__(self, paths, config=None, sink=None,
                 pending_constraints: Optional[dict] = None):
        super().__init__(paths, config, sink)
        # task_id -> constraint tuple collected by the constraints parser for
        # timestamps at/before the task submission.
        self.pending_constraints = pending_constraints if pending_constraints is not None else {}

    def parse_row(self, row: Row) -> Optional[ev.WorkloadEvent]:
        timestamp = self._shift(row.int_field("timestamp"))
        code = row.int_field("event_type")
        action = TASK_ACTIONS.get(code)
        if action is None:
            self.sink.report(AnomalyKind.CORRUPT_RECORD, f"unknown task event code {code}")
            return None
        event = map_task_action(action, row, self.config, self.sink, timestamp)
        if (
            isinstance(event, ev.AddTaskEvent)
            and self.config.attach_pending_constraints
            and event.task_id in self.pending_constraints
        ):
            return ev.AddTaskEvent(
                timestamp=event.timestamp,
                task_id=event.task_id,
                required=event.required,
                priority=event.priority,
                production=event.production,
                constraints=self.pending_constraints.pop(event.task_id),
                recorded_node=event.recorded_node,
            )
        return event


class TaskUsageParser(EventParser):
    kind = "task_usage"

    def parse_row(self, row: Row) -> Optional[ev.WorkloadEvent]:
        timestamp = self._shift(row.int_field("start_time"))
        task_id = f"{row.require('job_id')}-{row.require('task_index')}"
        canonical = row.float_field("canonical_memory", 0.0)
        assigned = row.float_field("assigned_memory", canonical)
        return ev.UpdateTaskUsedEvent(
            timestamp=timestamp,
            task_id=task_id,
            used=(row.float_field("cpu_rate", 0.0), max(canonical, assigned)),
            canonical_memory=canonical,
        )


class TaskConstraintsParser(EventParser):
    kind = "task_constraints"

    def _parse_constraint(self, row: Row) -> tuple[int, str, TaskConstraint]:
        timestamp = self._shift(row.int_field("timestamp"))
        task_id = f"{row.require('job_id')}-{row.require('task_index')}"
        operator = CONSTRAINT_OPERATORS.get(row.int_field("comparison_operator"))
        if operator is None:
            raise ValueError("unknown constraint operator")
        value = row.get("attribute_value")
        if operator in (ConstraintOperator.LESS_THAN, ConstraintOperator.GREATER_THAN):
            int(value)  # numeric operators require integer values
        return timestamp, task_id, TaskConstraint(operator, row.require("attribute_name"), value)

    def __iter__(self) -> Iterator[ev.WorkloadEvent]:
        # One trace row holds one constraint, but updates replace the whole
        # set: merge consecutive rows sharing (timestamp, task) into one event.
        current: Optional[tuple[int, str]] = None
        collected: list[TaskConstraint] = []
        for row in iter_csv_rows(self.paths, self._columns(), self.sink):
            try:
                timestamp, task_id, constraint = self._parse_constraint(row)
            except (ValueError, KeyError, IndexError) as exc:
                self.sink.report(AnomalyKind.CORRUPT_RECORD, f"{self.kind}: {exc}")
                continue
            key = (timestamp, task_id)
            if key != current:
                if current is not None:
                    yield ev.UpdateTaskConstraintsEvent(
                        timestamp=current[0], task_id=current[1], constraints=tuple(collected),
                    )
                current, collected = key, []
            collected.append(constraint)
        if current is not None:
            yield ev.UpdateTaskConstraintsEvent(
                timestamp=current[0], task_id=current[1], constraints=tuple(collected),
            )


PARSER_CLASSES = {
    "machine_events": MachineEventsParser,
    "machine_attributes": MachineAttributesParser,
    "task_events": TaskEventsParser,
    "task_usage": TaskUsageParser,
    "task_constraints": TaskConstraintsParser,
}


def parse_trace_file(kind: str, paths: Iterable[Path], config: ParserConfig | None = None,
                     sink: AnomalySink | None = None) -> Iterator[ev.WorkloadEvent]:
    """Stream events from trace files of one kind (job_events carries no
    per-task state, so it yields nothing and is parsed only for linkage)."""
    if kind == "job_events":
        return iter(())
    try:
        parser_cls = PARSER_CLASSES[kind]
    except KeyError:
        raise ValueError(f"unknown trace kind {kind!r}") from None
    return iter(parser_cls(paths, config, sink))


def open_trace_directory(trace_dir: Path, config: ParserConfig | None = None,
                         sink: AnomalySink | None = None) -> list[EventParser]:
    """All parsers with files present under the standard directory names."""
    config = config or ParserConfig()
    sink = sink if sink is not None else AnomalySink()
    parsers = []
    for kind, parser_cls in PARSER_CLASSES.items():
        paths = trace_files(trace_dir, kind)
        if paths:
            parsers.append(parser_cls(paths, config, sink))
    return parsers
