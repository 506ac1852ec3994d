"""Choosing which tasks an overloaded node offers up for migration.

Tasks the node can no longer host at all (constraint or total-capacity
mismatch) are compulsory.  Beyond those, a small tabu search picks a subset
whose removal de-overloads the node while maximizing

    fitness = node allocation score after removal / total migration cost

so cheap-to-move tasks whose departure most improves the node win.  The
search is restart-based and shallow: a handful of toggle steps per restart,
stopping early once restarts stop improving the best subset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .scoring import REALLOC_PARAMS, allocation_score


@dataclass(frozen=True)
class SelectionConfig:
    restarts: int = 25
    depth: int = 5
    stall_limit: int = 6


@dataclass
class RemovalCandidate:
    task_id: str
    used: np.ndarray
    migration_cost_mb: float
    production: bool


@dataclass
class SelectionResult:
    task_ids: list[str]
    compulsory: list[str]
    fitness: float
    feasible: bool       # removal de-overloads the node
    alert: bool          # nothing de-overloads: operator attention needed
    examined: int = 0


def _fitness(node_total: np.ndarray, used_after: np.ndarray, cost: float) -> float:
    score = allocation_score(REALLOC_PARAMS, node_total, used_after)
    if cost <= 0.0:
        return float("inf")
    return score / cost


def select_candidate_services(
    node_total: Sequence[float],
    used_sum: Sequence[float],
    removable: Sequence[RemovalCandidate],
    compulsory_ids: Sequence[str],
    rng,
    config: SelectionConfig = SelectionConfig(),
) -> SelectionResult:
    """Pick the compulsory tasks plus a de-overloading subset of removables.

    ``used_sum`` must already include every listed task.  Compulsory tasks
    are removed unconditionally; the tabu search then works on what remains.
    """
    total = np.asarray(node_total, dtype=np.float64)
    remaining = np.asarray(used_sum, dtype=np.float64).copy()

    compulsory = list(compulsory_ids)
    by_id = {c.task_id: c for c in removable}
    for task_id in compulsory:
        candidate = by_id.pop(task_id, None)
        if candidate is not None:
            remaining = remaining - candidate.used
    pool = [by_id[k] for k in sorted(by_id)]

    def overloaded(load: np.ndarray) -> bool:
        return bool(np.any(load > total))

    if not overloaded(remaining):
        return SelectionResult(task_ids=list(compulsory), compulsory=compulsory,
                               fitness=0.0, feasible=True, alert=False)

    if not pool:
        return SelectionResult(task_ids=list(compulsory), compulsory=compulsory,
                               fitness=0.0, feasible=False, alert=True)

    usages = np.stack([c.used for c in pool])
    costs = np.array([c.migration_cost_mb for c in pool])
    n = len(pool)
    examined = 0

    def evaluate(mask: np.ndarray) -> tuple[bool, float]:
        nonlocal examined
        examined += 1
        load = remaining - usages[mask].sum(axis=0) if mask.any() else remaining
        feasible = not overloaded(load)
        if not feasible:
            return False, -1.0
        return True, _fitness(total, load, float(costs[mask].sum()))

    # Everything-out is the feasibility ceiling: if even that overloads, no
    # subset works and the caller must be alerted.
    all_mask = np.ones(n, dtype=bool)
    all_feasible, _ = evaluate(all_mask)
    if not all_feasible:
        fallback = compulsory + [c.task_id for c in pool if not c.production]
        return SelectionResult(task_ids=fallback, compulsory=compulsory,
                               fitness=0.0, feasible=False, alert=True,
                               examined=examined)

    def greedy_start() -> np.ndarray:
        """Shed usage-heavy-per-MB tasks first, in randomized order."""
        mask = np.zeros(n, dtype=bool)
        weights = usages.max(axis=1) / np.maximum(costs, 1e-9)
        order = sorted(range(n), key=lambda i: (-weights[i] * rng.uniform(0.5, 1.5), i))
        for index in order:
            if not overloaded(remaining - usages[mask].sum(axis=0) if mask.any() else remaining):
                break
            mask[index] = True
        return mask

    best_mask: Optional[np.ndarray] = None
    best_fitness = -1.0
    stall = 0
    for _ in range(config.restarts):
        if stall >= config.stall_limit:
            break
        mask = greedy_start()
        feasible, fitness = evaluate(mask)
        if not feasible:
            mask = all_mask.copy()
            feasible, fitness = evaluate(mask)
        local_best, local_fit = mask.copy(), fitness
        visited = {mask.tobytes()}
        for _ in range(config.depth):
            step_mask, step_fit = None, local_fit
            for index in range(n):
                probe = local_best.copy()
                probe[index] = not probe[index]
                key = probe.tobytes()
                if key in visited:
                    continue
                feasible, fitness = evaluate(probe)
                if feasible and fitness > step_fit:
                    step_mask, step_fit = probe, fitness
            if step_mask is None:
                break
            visited.add(step_mask.tobytes())
            local_best, local_fit = step_mask, step_fit
        if local_fit > best_fitness:
            best_fitness, best_mask = local_fit, local_best
            stall = 0
        else:
            stall += 1

    assert best_mask is not None
    selected = compulsory + [pool[i].task_id for i in range(n) if best_mask[i]]
    return SelectionResult(task_ids=selected, compulsory=compulsory,
                           fitness=best_fitness, feasible=True, alert=False,
                           examined=examined)
