"""Cell multiplication and compaction.

Multiplication clones every node and task (with their full event histories)
a power-of-two number of times, deriving clone ids deterministically from
the original id, so workload shape is preserved while the cell grows.
Compaction removes a random fraction of the nodes; their resident tasks
re-enter the pending queue through ordinary node-removal events.
"""

from __future__ import annotations

import dataclasses
import random
from typing import Iterable, Iterator

from ..workload import events as ev

CLONE_SEPARATOR = "~"
ALLOWED_FACTORS = (1, 2, 4, 8)


class IdCollisionError(RuntimeError):
    """Clone-id derivation would collide with an existing id."""


def clone_id(original: str, replica: int) -> str:
    if CLONE_SEPARATOR in original:
        raise IdCollisionError(
            f"id {original!r} already contains {CLONE_SEPARATOR!r}; "
            "clone derivation would not be injective")
    return f"{original}{CLONE_SEPARATOR}{replica}"


def _clone_event(event: ev.WorkloadEvent, replica: int) -> ev.WorkloadEvent:
    changes = {}
    if hasattr(event, "node_id"):
        changes["node_id"] = clone_id(event.node_id, replica)
    if hasattr(event, "task_id"):
        changes["task_id"] = clone_id(event.task_id, replica)
    if isinstance(event, ev.AddTaskEvent) and event.recorded_node is not None:
        changes["recorded_node"] = clone_id(event.recorded_node, replica)
    return dataclasses.replace(event, **changes)


def scale_cell(events: Iterable[ev.WorkloadEvent], factor: int) -> Iterator[ev.WorkloadEvent]:
    """Each node/task is cloned factor-1 times with derived ids and cloned
    event histories; factor 1 is the identity."""
    if factor not in ALLOWED_FACTORS:
        raise ValueError(f"scale factor must be one of {ALLOWED_FACTORS}, got {factor}")
    for event in events:
        yield event
        for replica in range(1, factor):
            yield _clone_event(event, replica)


def compaction_events(cell_state, fraction: float, seed: int,
                      timestamp: int) -> list[ev.RemoveNodeEvent]:
    """Node-removal events for a uniformly random floor(fraction*N) subset."""
    if not (0.0 <= fraction < 1.0):
        raise ValueError("compaction fraction must be in [0, 1)")
    node_ids = sorted(cell_state.nodes)
    count = int(fraction * len(node_ids))
    if count == 0:
        return []
    rng = random.Random(seed)
    removed = rng.sample(node_ids, count)
    return [ev.RemoveNodeEvent(timestamp=timestamp, node_id=node_id)
            for node_id in sorted(removed)]
