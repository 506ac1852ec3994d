"""Simulation driver: tick loop, engine dispatch, metrics, snapshots.

Per tick: collect the event window, filter anomalies, apply events to the
engine, let the engine act, then emit one tick record.  Everything is
deterministic for a (config, seed) pair; resuming from a snapshot replays
the already-consumed windows from the deterministic sources and continues
bit-identically.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .. import model
from ..agents.engine import AgentEngine, TickMetrics
from ..agents.scoring import AllocationClass, classify_vec
from ..livemigration import ProfileCatalog, TraceCostModel
from ..metaheuristics.strategies import STRATEGIES
from ..workload.anomalies import AnomalySink, filter_anomalies
from ..workload.events import AddTaskEvent
from ..workload.parsers import ParserConfig, open_trace_directory
from ..workload.state import CellState
from ..workload.synth import synth_generate
from ..workload.window import WindowCollector
from .config import ConfigError, RunConfig
from .outputs import RunOutputs, TickRecord
from .scaling import compaction_events, scale_cell
from .snapshot import load_snapshot, save_snapshot

UNPLACED = "@unplaced"


class TraceError(RuntimeError):
    """Trace source cannot be read (CLI exit code 2)."""


class InfeasibleWorkloadError(RuntimeError):
    """Total demand exceeds total capacity (CLI exit code 3)."""


def _usage_rows(table, classes):
    node_ids, totals, used, required, counts = table
    rows = []
    for i, node_id in enumerate(node_ids):
        rows.append((node_id, classes[i].value,
                     used[i][0], used[i][1] if used.shape[1] > 1 else 0.0,
                     required[i][0], required[i][1] if required.shape[1] > 1 else 0.0))
    return rows


class ReplayEngine:
    """Mirrors recorded placements; does no scheduling of its own."""

    def __init__(self, cell: CellState):
        self.cell = cell

    def apply_events(self, events: Iterable) -> None:
        for event in events:
            self.cell.apply(event)
            if isinstance(event, AddTaskEvent) and event.recorded_node is not None:
                if event.recorded_node in self.cell.nodes:
                    self.cell.place(event.task_id, event.recorded_node)

    def run_tick(self) -> TickMetrics:
        return TickMetrics()

    def node_table(self):
        return cell_node_table(self.cell)


class MetaheuristicEngine:
    """Runs one centralized strategy whenever the cell needs re-balancing."""

    def __init__(self, cell: CellState, config: RunConfig):
        self.cell = cell
        self.config = config
        self.tick_index = 0

    def apply_events(self, events: Iterable) -> None:
        for event in events:
            self.cell.apply(event)

    def _current_state(self) -> model.SystemState:
        cell = self.cell
        assignment = {tid: cell.placement.get(tid, UNPLACED) for tid in cell.tasks}
        return model.SystemState(
            catalog=cell.catalog,
            nodes=tuple(n.to_spec() for n in sorted(cell.nodes.values(), key=lambda n: n.node_id)),
            tasks=tuple(t.to_spec() for t in sorted(cell.tasks.values(), key=lambda t: t.task_id)),
            assignment=model.Assignment(assignment),
        )

    def _check_feasible(self, state: model.SystemState) -> None:
        if not state.tasks or not state.nodes:
            if state.tasks and not state.nodes:
                raise InfeasibleWorkloadError("tasks exist but the cell has no nodes")
            return
        demand = np.sum([t.required for t in state.tasks], axis=0)
        capacity = np.sum([n.total for n in state.nodes], axis=0)
        if np.any(demand > capacity):
            raise InfeasibleWorkloadError(
                f"aggregate demand {demand.tolist()} exceeds capacity {capacity.tolist()}")

    def run_tick(self) -> TickMetrics:
        self.tick_index += 1
        metrics = TickMetrics()
        state = self._current_state()
        if not state.tasks:
            return metrics
        needs_balancing = (not state.placement_complete()
                           or not model.is_system_stable(state))
        if not needs_balancing:
            return metrics
        self._check_feasible(state)
        cfg = self.config.strategy_config(seed=self.config.seed * 1_000_003 + self.tick_index)
        result = STRATEGIES[self.config.strategy](state, cfg)
        if not result.stable:
            return metrics
        before = dict(self.cell.placement)
        assignment = result.best.to_assignment()
        for task_id, node_id in sorted(assignment.items()):
            if before.get(task_id) != node_id:
                self.cell.place(task_id, node_id)
                if task_id in before:
                    # a true migration, not an initial placement
                    metrics.migrations_attempted += 1
                    metrics.migrations_completed += 1
                    metrics.stc_mb += self.cell.tasks[task_id].migration_cost_mb
                else:
                    metrics.placements += 1
        return metrics

    def node_table(self):
        return cell_node_table(self.cell)


def cell_node_table(cell: CellState):
    """Per-node (totals, used, required, task count) arrays from the fold."""
    node_ids = sorted(cell.nodes)
    dim = cell.catalog.dimension
    index = {nid: i for i, nid in enumerate(node_ids)}
    totals = np.array([cell.nodes[nid].total for nid in node_ids], dtype=np.float64).reshape(
        len(node_ids), dim)
    used = np.zeros_like(totals)
    required = np.zeros_like(totals)
    counts = np.zeros(len(node_ids), dtype=np.int64)
    for task_id, node_id in cell.placement.items():
        i = index.get(node_id)
        if i is None:
            continue
        task = cell.tasks[task_id]
        used[i] += task.used
        required[i] += task.required
        counts[i] += 1
    return node_ids, totals, used, required, counts


def agent_node_table(engine: AgentEngine):
    node_ids = sorted(engine.agents)
    dim = engine.dimension
    if not node_ids:
        zeros = np.zeros((0, dim))
        return node_ids, zeros, zeros.copy(), zeros.copy(), np.zeros(0, dtype=np.int64)
    totals = np.stack([engine.agents[nid].total for nid in node_ids])
    used = np.stack([engine.agents[nid].used_sum for nid in node_ids])
    required = np.stack([engine.agents[nid].required_sum for nid in node_ids])
    counts = np.array([len(engine.agents[nid].resident) for nid in node_ids])
    return node_ids, totals, used, required, counts


class SimulationRunner:
    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.catalog = model.ResourceTypeCatalog(("cpu", "memory"))
        profiles = (ProfileCatalog.from_file(config.profile_file)
                    if config.profile_file else ProfileCatalog())
        profile = profiles.get(config.migration_profile)
        self.cost_model = TraceCostModel(profile, config.node_memory_mb)
        self.sink = AnomalySink()
        self.tick = 0
        self.accumulated_stc = 0.0
        self.cell: CellState = CellState(self.catalog, self.cost_model)
        self.engine = self._build_engine()
        self.collector = self._build_collector()
        if config.resume_from is not None:
            self._resume(config.resume_from)

    # -- construction ----------------------------------------------------------

    def _build_engine(self):
        mode = self.config.mode
        if mode == "replay":
            return ReplayEngine(self.cell)
        if mode == "metaheuristic":
            return MetaheuristicEngine(self.cell, self.config)
        return AgentEngine(self.cell, self.config.agent_config(), seed=self.config.seed)

    def _build_collector(self) -> WindowCollector:
        config = self.config
        if config.trace_dir is not None:
            trace_dir = Path(config.trace_dir)
            if not trace_dir.is_dir():
                raise TraceError(f"trace directory {trace_dir} does not exist")
            parser_config = ParserConfig(
                time_offset_us=600_000_000 if config.gcd_time_shift else 0)
            parsers = open_trace_directory(trace_dir, parser_config, self.sink)
            if not parsers:
                raise TraceError(f"no trace files found under {trace_dir}")
            sources = parsers
        else:
            sources = [synth_generate(config.synth)]
        if config.scale_factor > 1:
            sources = [scale_cell(src, config.scale_factor) for src in sources]
        return WindowCollector(sources)

    # -- snapshots ---------------------------------------------------------------

    def save_snapshot_file(self, path: Path) -> None:
        # engine callbacks (log/trace writers) are process-local: strip them
        # for the duration of the pickling
        engine = self.engine
        stripped = None
        if isinstance(engine, AgentEngine):
            stripped = (engine.config.message_trace, engine.config.log)
            engine.config.message_trace = None
            engine.config.log = None
        try:
            payload = {
                "tick": self.tick,
                "cell": self.cell,
                "engine": engine,
                "accumulated_stc": self.accumulated_stc,
                "seed": self.config.seed,
                "mode": self.config.mode,
            }
            save_snapshot(path, payload)
        finally:
            if stripped is not None:
                engine.config.message_trace, engine.config.log = stripped

    def _resume(self, path: Path) -> None:
        data = load_snapshot(path)
        if data["mode"] != self.config.mode or data["seed"] != self.config.seed:
            raise ConfigError("snapshot was produced by a different mode or seed")
        self.tick = data["tick"]
        self.cell = data["cell"]
        self.engine = data["engine"]  # shares the unpickled cell reference
        self.accumulated_stc = data["accumulated_stc"]
        # fast-forward the deterministic sources past the consumed windows
        for index in range(self.tick):
            start = index * self.config.tick_length_us
            self.collector.collect_window(start, start + self.config.tick_length_us)

    # -- main loop -----------------------------------------------------------------

    def _tick_record(self, metrics: TickMetrics) -> tuple[TickRecord, tuple, list]:
        if isinstance(self.engine, AgentEngine):
            table = agent_node_table(self.engine)
        else:
            table = self.engine.node_table()
        node_ids, totals, used, required, counts = table
        classes = list(classify_vec(totals, used, counts)) if len(node_ids) else []
        tally = {cls: 0 for cls in AllocationClass}
        for cls in classes:
            tally[cls] += 1
        capacity = self.cell.capacity_sum
        used_sum = self.cell.placed_used_sum
        required_sum = self.cell.placed_required_sum

        def ratio(values, index):
            return values[index] / capacity[index] if index < len(capacity) and capacity[index] > 0 else 0.0

        record = TickRecord(
            tick=self.tick,
            idle=tally[AllocationClass.IDLE],
            sta=tally[AllocationClass.STA],
            ta=tally[AllocationClass.TA],
            pa=tally[AllocationClass.PA],
            da=tally[AllocationClass.DA],
            overloaded=tally[AllocationClass.OVERLOADED],
            migrations_attempted=metrics.migrations_attempted,
            migrations_completed=metrics.migrations_completed,
            collisions=metrics.collisions,
            cpu_used_ratio=ratio(used_sum, 0),
            mem_used_ratio=ratio(used_sum, 1),
            cpu_req_ratio=ratio(required_sum, 0),
            mem_req_ratio=ratio(required_sum, 1),
            stc_mb=metrics.stc_mb,
        )
        return record, table, classes

    def run(self, outputs: Optional[RunOutputs] = None) -> int:
        config = self.config
        owns_outputs = outputs is None
        if outputs is None:
            outputs = RunOutputs(config.output_dir, config.run_name)
        if config.message_trace and isinstance(self.engine, AgentEngine):
            self.engine.config.message_trace = outputs.message_trace_writer()
        if isinstance(self.engine, AgentEngine):
            self.engine.config.log = outputs.log
        try:
            wall_start = time.monotonic()
            idle_ticks = 0
            while True:
                if config.ticks is not None and self.tick >= config.ticks:
                    break
                if config.ticks is None and self.collector.exhausted:
                    # drain pending placements, but never spin forever on
                    # unschedulable leftovers
                    if not self.cell.pending or idle_ticks >= 5:
                        break
                pending_before = len(self.cell.pending)
                self._run_one_tick(outputs)
                if self.collector.exhausted and len(self.cell.pending) >= pending_before:
                    idle_ticks += 1
                else:
                    idle_ticks = 0
                if config.speed_factor > 0:
                    target_wall = (self.tick * config.tick_length_us / 1e6) / config.speed_factor
                    lag = target_wall - (time.monotonic() - wall_start)
                    if lag > 0:
                        time.sleep(lag)
            outputs.log(f"run complete at tick {self.tick}; accumulated STC "
                        f"{self.accumulated_stc:.3f} MB")
            return 0
        finally:
            if owns_outputs:
                outputs.close()

    def _run_one_tick(self, outputs: RunOutputs) -> None:
        config = self.config
        start = self.tick * config.tick_length_us
        batch = self.collector.collect_window(start, start + config.tick_length_us)
        batch, reports = filter_anomalies(self.cell, batch)
        for report in reports:
            outputs.error(report.as_line())
            self.sink.report(report.kind, report.detail)
        if config.compaction_fraction > 0 and self.tick == config.compaction_tick:
            removals = compaction_events(self.cell, config.compaction_fraction,
                                         seed=config.seed, timestamp=start)
            outputs.log(f"compaction at tick {self.tick}: removing {len(removals)} nodes")
            self.engine.apply_events(removals)
        self.engine.apply_events(batch)
        metrics = self.engine.run_tick()
        self.accumulated_stc += metrics.stc_mb
        record, table, classes = self._tick_record(metrics)
        outputs.write_tick(record)
        if config.audit and not self.cell.conservation_holds():
            outputs.error(f"CONSERVATION tick {self.tick}: task accounting mismatch")
        self.tick += 1
        if config.usage_dump_every and self.tick % config.usage_dump_every == 0:
            outputs.dump_usage(self.tick, _usage_rows(table, classes))
        if config.snapshot_every and self.tick % config.snapshot_every == 0:
            path = Path(config.output_dir) / f"{config.run_name}-{self.tick}.snapshot"
            self.save_snapshot_file(path)
            outputs.log(f"snapshot saved: {path.name}")
