"""Core resource model shared by both load-balancing engines.

Nodes offer fixed resource capacities, tasks demand resource vectors, and an
assignment maps every task to a node.  A node is *stable* when no resource is
over-committed; moving a task between nodes costs its migration size in MB.
All types are immutable values: transformations build new states, which makes
states safe to share across threads and cheap to cache by identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

Vector = tuple[float, ...]


class UnknownIdError(KeyError):
    """Raised when an operation references a node or task id not in the state."""


def as_vector(values: Iterable[float]) -> Vector:
    return tuple(float(v) for v in values)


def vec_add(a: Vector, b: Vector) -> Vector:
    return tuple(x + y for x, y in zip(a, b))


def vec_sub(a: Vector, b: Vector) -> Vector:
    return tuple(x - y for x, y in zip(a, b))


def zero_vector(dimension: int) -> Vector:
    return (0.0,) * dimension


@dataclass(frozen=True)
class ResourceTypeCatalog:
    """Ordered catalog of the resource types tracked in one simulation."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise ValueError("catalog needs at least one resource type")
        if len(set(self.names)) != len(self.names):
            raise ValueError("resource type names must be unique")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


DEFAULT_CATALOG = ResourceTypeCatalog(("cpu", "memory"))


@dataclass(frozen=True)
class NodeSpec:
    """A node: capacity vector plus free-form attributes used for constraint matching."""

    id: str
    total: Vector
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "total", as_vector(self.total))
        if any(v < 0 for v in self.total):
            raise ValueError(f"node {self.id}: capacities must be non-negative")
        object.__setattr__(self, "attributes", dict(self.attributes))


@dataclass(frozen=True)
class TaskSpec:
    """A task: user-declared requirements, monitored usage and migration cost."""

    id: str
    required: Vector
    used: Vector
    migration_cost_mb: float
    priority: int = 0
    production: bool = False
    constraints: tuple = ()
    unstarted: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "required", as_vector(self.required))
        object.__setattr__(self, "used", as_vector(self.used))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if any(v < 0 for v in self.required) or any(v < 0 for v in self.used):
            raise ValueError(f"task {self.id}: resource vectors must be non-negative")
        if not self.migration_cost_mb > 0:
            raise ValueError(f"task {self.id}: migration cost must be positive")
        if self.unstarted and any(v != 0 for v in self.used):
            raise ValueError(f"task {self.id}: unstarted tasks cannot report usage")


@dataclass(frozen=True)
class Assignment:
    """Total task-id -> node-id mapping.

    Node ids are not restricted to live nodes: an origin assignment may point
    at nodes that have since been disabled or retired.  Such tasks simply load
    no live node and always pay their migration cost when re-placed.
    """

    mapping: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mapping", dict(self.mapping))

    def __getitem__(self, task_id: str) -> str:
        try:
            return self.mapping[task_id]
        except KeyError:
            raise UnknownIdError(f"task {task_id!r} not in assignment") from None

    def __contains__(self, task_id: str) -> bool:
        return task_id in self.mapping

    def __len__(self) -> int:
        return len(self.mapping)

    def items(self):
        return self.mapping.items()

    def moved(self, moves: Iterable[tuple[str, str]]) -> "Assignment":
        new = dict(self.mapping)
        for task_id, node_id in moves:
            if task_id not in new:
                raise UnknownIdError(f"task {task_id!r} not in assignment")
            new[task_id] = node_id
        return Assignment(new)

    def __eq__(self, other) -> bool:
        return isinstance(other, Assignment) and self.mapping == other.mapping

    def __hash__(self) -> int:
        return hash(frozenset(self.mapping.items()))


@dataclass(frozen=True)
class SystemState:
    """The full system: catalog, nodes, tasks and the current assignment."""

    catalog: ResourceTypeCatalog
    nodes: tuple[NodeSpec, ...]
    tasks: tuple[TaskSpec, ...]
    assignment: Assignment

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        dim = self.catalog.dimension
        node_ids = [n.id for n in self.nodes]
        task_ids = [t.id for t in self.tasks]
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("duplicate node ids")
        if len(set(task_ids)) != len(task_ids):
            raise ValueError("duplicate task ids")
        for node in self.nodes:
            if len(node.total) != dim:
                raise ValueError(f"node {node.id}: vector dimension mismatch")
        for task in self.tasks:
            if len(task.required) != dim or len(task.used) != dim:
                raise ValueError(f"task {task.id}: vector dimension mismatch")
        for task_id in task_ids:
            if task_id not in self.assignment:
                raise ValueError(f"task {task_id} has no assignment")

    @cached_property
    def node_by_id(self) -> dict[str, NodeSpec]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def task_by_id(self) -> dict[str, TaskSpec]:
        return {t.id: t for t in self.tasks}

    @cached_property
    def tasks_by_node(self) -> dict[str, tuple[TaskSpec, ...]]:
        grouped: dict[str, list[TaskSpec]] = {n.id: [] for n in self.nodes}
        for task in self.tasks:
            node_id = self.assignment[task.id]
            if node_id in grouped:
                grouped[node_id].append(task)
        return {nid: tuple(ts) for nid, ts in grouped.items()}

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self.node_by_id[node_id]
        except KeyError:
            raise UnknownIdError(f"unknown node {node_id!r}") from None

    def task(self, task_id: str) -> TaskSpec:
        try:
            return self.task_by_id[task_id]
        except KeyError:
            raise UnknownIdError(f"unknown task {task_id!r}") from None

    def placement_complete(self) -> bool:
        """True when every task is mapped to a live node of this state."""
        return all(nid in self.node_by_id for nid in self.assignment.mapping.values())


def _demand(task: TaskSpec, usage: str) -> Vector:
    if usage == "required":
        return task.required
    if usage == "used":
        return task.used
    raise ValueError(f"usage selector must be 'required' or 'used', got {usage!r}")


def available_resources(state: SystemState, node_id: str, usage: str = "required") -> Vector:
    """Capacity minus the summed demand of resident tasks; may go negative.

    The ``usage`` selector picks which task vector counts against the node:
    the centralized balancer works from declared requirements, the agents
    track monitored usage.
    """
    node = state.node(node_id)
    levels = list(node.total)
    for task in state.tasks_by_node.get(node_id, ()):
        demand = _demand(task, usage)
        for i, value in enumerate(demand):
            levels[i] -= value
    return tuple(levels)


def is_node_stable(state: SystemState, node_id: str, usage: str = "required") -> bool:
    """Exact comparison on purpose: trace values are finite decimals."""
    return all(v >= 0 for v in available_resources(state, node_id, usage))


def is_system_stable(state: SystemState, usage: str = "required") -> bool:
    return all(is_node_stable(state, node.id, usage) for node in state.nodes)


def migration_cost(task: TaskSpec, from_assignment: Assignment, to_assignment: Assignment) -> float:
    """Zero when the task stays put, otherwise the task's full transfer size."""
    if task.id not in from_assignment or task.id not in to_assignment:
        raise UnknownIdError(f"task {task.id!r} missing from an assignment")
    if from_assignment[task.id] == to_assignment[task.id]:
        return 0.0
    return task.migration_cost_mb


def transformation_cost(
    from_assignment: Assignment,
    to_assignment: Assignment,
    tasks: Sequence[TaskSpec],
) -> float:
    return sum(migration_cost(t, from_assignment, to_assignment) for t in tasks)


def is_neighbor(a: Assignment, b: Assignment) -> bool:
    """True when exactly one task changed node between the two assignments."""
    if set(a.mapping) != set(b.mapping):
        raise UnknownIdError("assignments cover different task sets")
    changed = sum(1 for task_id, node_id in a.items() if b[task_id] != node_id)
    return changed == 1


def apply_moves(state: SystemState, moves: Sequence[tuple[str, str]]) -> SystemState:
    """Return a new state with the listed (task, target-node) moves applied."""
    for task_id, node_id in moves:
        state.task(task_id)
        state.node(node_id)
    return SystemState(
        catalog=state.catalog,
        nodes=state.nodes,
        tasks=state.tasks,
        assignment=state.assignment.moved(moves),
    )
