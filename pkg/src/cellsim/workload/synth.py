"""Deterministic synthetic workload generation for desk-scale runs.

Generates an event stream with the empirical shape of large-cluster traces:
a high churn of short batch jobs (~80% of tasks, 12-20 minutes) plus a
smaller population of long-running services that hold the majority of the
resources.  Everything is driven by one seed, so identical configs produce
byte-identical streams.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterator, Optional

from ..livemigration import ProfileCatalog, lmdt_estimate
from . import events as ev
from .constraints import ConstraintOperator, TaskConstraint

MINUTE_US = 60 * 1_000_000


@dataclass
class SynthConfig:
    seed: int
    node_count: int = 20
    #: Mean new tasks per simulated minute (Poisson arrivals).
    task_arrival_rate: float = 10.0
    duration_minutes: float = 60.0
    #: When set, arrivals stop after this many minutes (burst-shaped load).
    arrival_window_minutes: float | None = None
    #: Fraction of tasks that are short batch jobs.
    batch_fraction: float = 0.8
    batch_duration_min: tuple[float, float] = (12.0, 20.0)
    #: Service durations are open-ended; drawn uniform in this range.
    service_duration_min: tuple[float, float] = (120.0, 2400.0)
    node_capacity: tuple[float, float] = (1.0, 1.0)
    #: Requirement ranges per resource, as a fraction of node capacity.
    batch_required: tuple[float, float] = (0.005, 0.03)
    service_required: tuple[float, float] = (0.05, 0.20)
    #: Usage reported as this fraction band of the requirement.
    usage_ratio: tuple[float, float] = (0.4, 0.95)
    usage_interval_minutes: float = 5.0
    #: Number of usage reports over which a task ramps from a small initial
    #: footprint up to its drawn usage level (1 = constant from the start).
    usage_ramp_updates: int = 1
    production_fraction: float = 0.25
    #: Fraction of tasks carrying one attribute constraint.
    constraint_rate: float = 0.0
    #: When >0, this many distinct attribute values are spread over nodes so
    #: every constrained task matches a controllable node subset.
    attribute_groups: int = 4
    migration_profile: str = "apache"
    #: Scale from required memory to estimator MB input.
    memory_scale_mb: float = 2048.0
    #: Record a first-fit placement in AddTask events for replay mode.
    record_placements: bool = True

    def validate(self) -> None:
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if self.task_arrival_rate < 0:
            raise ValueError("task_arrival_rate must be >= 0")
        if not (0 <= self.batch_fraction <= 1):
            raise ValueError("batch_fraction must be in [0, 1]")
        for lo, hi in (self.batch_duration_min, self.service_duration_min,
                       self.batch_required, self.service_required, self.usage_ratio):
            if lo < 0 or hi < lo:
                raise ValueError("distribution ranges must satisfy 0 <= lo <= hi")
        if not (0 <= self.constraint_rate <= 1):
            raise ValueError("constraint_rate must be in [0, 1]")

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        raw = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        for key in ("batch_duration_min", "service_duration_min", "node_capacity",
                    "batch_required", "service_required", "usage_ratio"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


@dataclass
class _PlannedTask:
    task_id: str
    arrival_us: int
    end_us: Optional[int]
    required: tuple[float, float]
    usage: tuple[float, float]
    production: bool
    is_batch: bool
    constraints: tuple[TaskConstraint, ...]
    recorded_node: Optional[str]
    migration_cost_mb: float


def _node_attributes(config: SynthConfig, index: int) -> tuple[tuple[str, str], ...]:
    if config.attribute_groups <= 0:
        return ()
    group = index % config.attribute_groups
    return (("group", str(group)), ("slot", str(index)))


def synth_generate(config: SynthConfig,
                   profiles: ProfileCatalog | None = None) -> Iterator[ev.WorkloadEvent]:
    """Yield a reproducible, timestamp-sorted workload event stream."""
    config.validate()
    rng = random.Random(config.seed)
    profile = (profiles or ProfileCatalog()).get(config.migration_profile)
    horizon_us = int(config.duration_minutes * MINUTE_US)

    events: list[ev.WorkloadEvent] = []
    node_ids = [f"n{index:05d}" for index in range(config.node_count)]
    for index, node_id in enumerate(node_ids):
        events.append(ev.AddNodeEvent(
            timestamp=0, node_id=node_id, total=config.node_capacity,
            attributes=_node_attributes(config, index),
        ))

    # First-fit headroom tracker for recorded placements.
    headroom = {nid: list(config.node_capacity) for nid in node_ids}

    def record_placement(task: _PlannedTask) -> Optional[str]:
        if not config.record_placements:
            return None
        for nid in node_ids:
            if task.constraints:
                group = dict(_node_attributes(config, node_ids.index(nid))).get("group")
                wanted = next((c.value for c in task.constraints if c.attribute_name == "group"), None)
                if wanted is not None and group != wanted:
                    continue
            room = headroom[nid]
            if all(room[i] >= task.required[i] for i in range(len(room))):
                for i in range(len(room)):
                    room[i] -= task.required[i]
                return nid
        return None

    def release_placement(node_id: Optional[str], required) -> None:
        if node_id is None:
            return
        room = headroom[node_id]
        for i in range(len(room)):
            room[i] += required[i]

    # Poisson arrivals over the horizon (optionally front-loaded).
    arrivals: list[int] = []
    arrival_stop_us = horizon_us
    if config.arrival_window_minutes is not None:
        arrival_stop_us = min(horizon_us, int(config.arrival_window_minutes * MINUTE_US))
    if config.task_arrival_rate > 0:
        t = 0.0
        while True:
            t += rng.expovariate(config.task_arrival_rate / MINUTE_US)
            if t >= arrival_stop_us:
                break
            arrivals.append(int(t))

    planned: list[_PlannedTask] = []
    for seq, arrival in enumerate(arrivals):
        is_batch = rng.random() < config.batch_fraction
        if is_batch:
            duration = rng.uniform(*config.batch_duration_min) * MINUTE_US
            required = tuple(rng.uniform(*config.batch_required) * cap
                             for cap in config.node_capacity)
        else:
            duration = rng.uniform(*config.service_duration_min) * MINUTE_US
            required = tuple(rng.uniform(*config.service_required) * cap
                             for cap in config.node_capacity)
        end = arrival + int(duration)
        usage = tuple(req * rng.uniform(*config.usage_ratio) for req in required)
        constraints: tuple[TaskConstraint, ...] = ()
        if config.constraint_rate > 0 and rng.random() < config.constraint_rate:
            group = rng.randrange(max(1, config.attribute_groups))
            constraints = (TaskConstraint(ConstraintOperator.EQUAL, "group", str(group)),)
        mem = required[1] if len(required) > 1 else required[0]
        cost = lmdt_estimate(profile, mem * config.memory_scale_mb)
        planned.append(_PlannedTask(
            task_id=f"t{seq:07d}",
            arrival_us=arrival,
            end_us=end if end < horizon_us else None,
            required=required,
            usage=usage,
            production=rng.random() < config.production_fraction,
            is_batch=is_batch,
            constraints=constraints,
            recorded_node=None,
            migration_cost_mb=cost,
        ))

    for task in planned:
        task.recorded_node = record_placement(task)
        events.append(ev.AddTaskEvent(
            timestamp=task.arrival_us,
            task_id=task.task_id,
            required=task.required,
            priority=9 if task.production else 2,
            production=task.production,
            constraints=task.constraints,
            recorded_node=task.recorded_node,
        ))
        interval = int(config.usage_interval_minutes * MINUTE_US)
        report = task.arrival_us + interval // 2
        stop = task.end_us if task.end_us is not None else horizon_us
        ramp = max(1, config.usage_ramp_updates)
        step = 0
        while report < stop:
            step += 1
            scale = min(1.0, step / ramp)
            events.append(ev.UpdateTaskUsedEvent(
                timestamp=report,
                task_id=task.task_id,
                used=tuple(u * scale for u in task.usage),
                migration_cost_mb=task.migration_cost_mb,
            ))
            report += interval
        if task.end_us is not None:
            events.append(ev.RemoveTaskEvent(timestamp=task.end_us, task_id=task.task_id))
            release_placement(task.recorded_node, task.required)

    yield from ev.sort_events(events)
