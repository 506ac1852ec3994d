"""Packed search-space representation for the centralized balancer.

A candidate solution is a task-indexed array of node indices.  Deciding
stability dominates runtime, so derived values (loads, stability, cost from
origin) are computed lazily and memoized, and whole solutions are cached so
no assignment is ever evaluated twice within a run.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .. import model

DEFAULT_CACHE_CAPACITY = 500_000


class InfeasibleError(RuntimeError):
    """No stable assignment could be produced within the iteration cap."""


@dataclass(frozen=True)
class PackedProblem:
    """Arrays-of-structs view of one balancing instance.

    ``origin`` holds the node index each task starts on, or -1 when the
    recorded origin is not part of the live cell (such tasks pay their
    migration cost in every candidate).
    """

    task_ids: tuple[str, ...]
    node_ids: tuple[str, ...]
    required: np.ndarray      # (T, d)
    capacity: np.ndarray      # (N, d)
    costs: np.ndarray         # (T,)
    origin: np.ndarray        # (T,) int

    @classmethod
    def from_state(cls, state: model.SystemState, usage: str = "required") -> "PackedProblem":
        tasks = sorted(state.tasks, key=lambda t: t.id)
        nodes = sorted(state.nodes, key=lambda n: n.id)
        node_index = {n.id: i for i, n in enumerate(nodes)}
        demand = [t.required if usage == "required" else t.used for t in tasks]
        return cls(
            task_ids=tuple(t.id for t in tasks),
            node_ids=tuple(n.id for n in nodes),
            required=np.array(demand, dtype=np.float64).reshape(len(tasks), state.catalog.dimension),
            capacity=np.array([n.total for n in nodes], dtype=np.float64).reshape(
                len(nodes), state.catalog.dimension),
            costs=np.array([t.migration_cost_mb for t in tasks], dtype=np.float64),
            origin=np.array([node_index.get(state.assignment[t.id], -1) for t in tasks],
                            dtype=np.int64),
        )

    @property
    def task_count(self) -> int:
        return len(self.task_ids)

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    def loads(self, assign: np.ndarray) -> np.ndarray:
        out = np.zeros_like(self.capacity)
        np.add.at(out, assign, self.required)
        return out

    def is_stable(self, assign: np.ndarray) -> bool:
        return bool(np.all(self.loads(assign) <= self.capacity))

    def stc(self, assign: np.ndarray) -> float:
        return float(self.costs[assign != self.origin].sum())

    def moved_count(self, assign: np.ndarray) -> int:
        return int(np.count_nonzero(assign != self.origin))

    def origin_in_cell(self) -> bool:
        return bool(np.all(self.origin >= 0))

    def assignment_of(self, assign: np.ndarray) -> model.Assignment:
        return model.Assignment({
            self.task_ids[t]: self.node_ids[int(assign[t])] for t in range(self.task_count)
        })

    def key(self, assign: np.ndarray) -> bytes:
        return assign.tobytes()


class CandidateSolution:
    """One assignment with lazily derived stability, loads and origin cost."""

    __slots__ = ("problem", "assign", "_loads", "_stable", "_stc", "_moved")

    def __init__(self, problem: PackedProblem, assign: np.ndarray):
        self.problem = problem
        self.assign = assign
        self._loads: Optional[np.ndarray] = None
        self._stable: Optional[bool] = None
        self._stc: Optional[float] = None
        self._moved: Optional[int] = None

    @property
    def loads(self) -> np.ndarray:
        if self._loads is None:
            self._loads = self.problem.loads(self.assign)
        return self._loads

    @property
    def stable(self) -> bool:
        if self._stable is None:
            self._stable = bool(np.all(self.loads <= self.problem.capacity))
        return self._stable

    @property
    def stc_from_origin(self) -> float:
        if self._stc is None:
            self._stc = self.problem.stc(self.assign)
        return self._stc

    @property
    def moved_count(self) -> int:
        if self._moved is None:
            self._moved = self.problem.moved_count(self.assign)
        return self._moved

    def rank_key(self) -> tuple:
        """Stable-first ordering: lower cost, fewer moves, lexicographic."""
        return (not self.stable, self.stc_from_origin, self.moved_count,
                tuple(int(v) for v in self.assign))

    def to_assignment(self) -> model.Assignment:
        return self.problem.assignment_of(self.assign)

    def __repr__(self) -> str:
        return (f"CandidateSolution(stable={self.stable}, "
                f"stc={self.stc_from_origin:.2f}, moved={self.moved_count})")


class SolutionCache:
    """Bounded LRU cache keyed by canonical assignment encoding.

    Safe for concurrent lookup_or_insert: a racing builder may run twice for
    the same key, but only one result is retained.
    """

    def __init__(self, capacity: int = DEFAULT_CACHE_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self._lock = threading.RLock()
        self._entries: OrderedDict[bytes, CandidateSolution] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def lookup_or_insert(self, key: bytes,
                         builder: Callable[[], CandidateSolution]) -> CandidateSolution:
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                self.hits += 1
                self._entries.move_to_end(key)
                return entry
        built = builder()
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                self.hits += 1
                self._entries.move_to_end(key)
                return entry
            self.misses += 1
            self._entries[key] = built
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
                self.evictions += 1
            return built


def neighbors(solution: CandidateSolution,
              problem: Optional[PackedProblem] = None) -> Iterator[CandidateSolution]:
    """All assignments differing in exactly one task's node:
    |tasks| * (|nodes| - 1) of them, in deterministic (task, node) order."""
    problem = problem or solution.problem
    base = solution.assign
    for t in range(problem.task_count):
        current = int(base[t])
        for n in range(problem.node_count):
            if n == current:
                continue
            assign = base.copy()
            assign[t] = n
            yield CandidateSolution(problem, assign)


def random_stable_solution(problem: PackedProblem, rng,
                           max_iters: int = 10_000) -> np.ndarray:
    """Draw a random assignment, then repeatedly re-home a tenth of the tasks
    sitting on overloaded nodes (at least one) until the system is stable.

    Raises InfeasibleError when the iteration cap is hit, so callers never
    loop forever on instances without a stable assignment.
    """
    n_nodes, n_tasks = problem.node_count, problem.task_count
    if n_nodes == 0:
        raise InfeasibleError("no nodes")
    assign = np.array([rng.randrange(n_nodes) for _ in range(n_tasks)], dtype=np.int64)
    if n_tasks == 0:
        return assign
    loads = problem.loads(assign)
    for _ in range(max_iters):
        overloaded = np.any(loads > problem.capacity, axis=1)
        if not overloaded.any():
            return assign
        if n_nodes == 1:
            raise InfeasibleError("single overloaded node, nowhere to move")
        over_tasks = np.flatnonzero(overloaded[assign])
        count = max(1, len(over_tasks) // 10)
        picked = rng.sample(list(over_tasks), count)
        for t in picked:
            old = int(assign[t])
            new = rng.randrange(n_nodes - 1)
            if new >= old:
                new += 1
            assign[t] = new
            loads[old] -= problem.required[t]
            loads[new] += problem.required[t]
    raise InfeasibleError(f"no stable assignment found in {max_iters} iterations")
