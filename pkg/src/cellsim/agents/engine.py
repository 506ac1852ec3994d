"""Decentralized load balancing: node agents, broker agents, negotiation.

Every node runs an agent that keeps the node stable; brokers cache reported
node state and quote candidate targets.  An overloaded node picks tasks to
shed, asks a broker for up to fifteen scored candidate nodes, negotiates
acceptance directly with their agents, and commits the migration against a
final suitability check at the target.  Forced recommendations bypass the
availability check (never the constraint or total-capacity checks) so a
task with restrictive constraints cannot starve.

Execution is deterministic: a seeded single-threaded scheduler splits each
tick into rounds, delivering messages sent in one round at the start of the
next, and processing agents in sorted-id order.  Wall-clock never enters the
simulation.
"""

from __future__ import annotations

import random
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..workload.constraints import matches_attributes
from ..workload.state import CellState
from ..workload import events as ev
from ..workload.store import StateStore
from .messages import (
    FORCED_FITNESS,
    ZERO_SCORE_FITNESS,
    CandidateNodeRecommendation,
    Message,
    MessageKind,
    NodeStats,
    TaskSnapshot,
)
from .scoring import (
    INITIAL_PARAMS,
    REALLOC_PARAMS,
    allocation_score_vec,
    asr_metrics,
    classify_vec,
    rus_fits,
)
from .selection import RemovalCandidate, SelectionConfig, select_candidate_services

MINUTE_US = 60 * 1_000_000


@dataclass
class AgentConfig:
    tick_length_us: int = MINUTE_US
    rounds_per_tick: int = 6
    broker_count: int = 1
    recommendation_count: int = 15
    initial_scan_limit: int = 200
    realloc_scan_limit: int = 2000
    recommendation_ttl_us: int = 3 * MINUTE_US
    cache_entry_ttl_us: int = 5 * MINUTE_US
    acceptance_wait_us: int = 30 * 1_000_000
    #: Scorer names: initial in {sias, sias_gain}, realloc in {sras, sras_gain}.
    initial_scorer: str = "sias_gain"
    realloc_scorer: str = "sras"
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    placements_per_round: int = 50_000
    #: Transfer duration for one live migration, in rounds.
    transfer_rounds: int = 1
    sample_selection_rate: int = 50
    sample_quote_rate: int = 5000
    sample_target_rate: int = 5000
    rus_spike_threshold: float = 0.10
    audit: bool = False
    message_trace: Optional[Callable[[str], None]] = None
    log: Optional[Callable[[str], None]] = None


@dataclass(slots=True)
class BrokerCacheEntry:
    node_id: str
    available: tuple
    attributes: dict
    last_update: int


@dataclass(slots=True)
class InMigration:
    snapshot: TaskSnapshot
    source: Optional[str]
    forced: bool
    complete_at: int
    rec_age_us: int
    #: What the admission check established; audited against these because
    #: task attributes may legitimately change while the transfer runs.
    constraints_ok: bool = True
    capacity_ok: bool = True


@dataclass(slots=True)
class Negotiation:
    task_id: str
    state: str                      # quote | accepts | confirm
    recommendations: list = field(default_factory=list)
    accepted: dict = field(default_factory=dict)    # node_id -> NodeStats
    rejected: set = field(default_factory=set)
    attempted: set = field(default_factory=set)
    deadline_us: int = 0
    quote_corr: int = -1


@dataclass(slots=True)
class PlacementFlow:
    task_id: str
    recommendations: list
    next_index: int = 0


@dataclass
class TickMetrics:
    migrations_attempted: int = 0
    migrations_completed: int = 0
    collisions: int = 0
    stc_mb: float = 0.0
    placements: int = 0
    unschedulable: int = 0
    scs_runs: int = 0
    rus_spikes: int = 0
    san_restarts: int = 0


def _stable_seed(*parts) -> int:
    return zlib.crc32(":".join(str(p) for p in parts).encode())


class NodeAgent:
    """Keeps one node stable; negotiates migrations for overloading tasks."""

    def __init__(self, node_id: str, engine: "AgentEngine"):
        self.id = node_id
        self.engine = engine
        dim = engine.dimension
        self.total = np.array(engine.cell.nodes[node_id].total, dtype=np.float64)
        self.resident: set[str] = set()
        self.used_sum = np.zeros(dim)
        self.required_sum = np.zeros(dim)
        self.prod_req_sum = np.zeros(dim)
        self.in_migrations: dict[str, InMigration] = {}
        self.incoming_used = np.zeros(dim)
        self.incoming_prod_req = np.zeros(dim)
        self.out_migrations: set[str] = set()
        self.negotiations: dict[str, Negotiation] = {}
        self.rng = random.Random(_stable_seed(engine.seed, "na", node_id))

    # -- node-side accounting ---------------------------------------------------

    @property
    def attributes(self) -> dict:
        return self.engine.cell.nodes[self.id].attributes

    def overloaded(self) -> bool:
        return bool(np.any(self.used_sum > self.total))

    def add_resident(self, task_id: str) -> None:
        task = self.engine.cell.tasks[task_id]
        self.resident.add(task_id)
        self.used_sum += np.asarray(task.used)
        self.required_sum += np.asarray(task.required)
        if task.production:
            self.prod_req_sum += np.asarray(task.required)

    def remove_resident(self, task_id: str) -> None:
        if task_id not in self.resident:
            return
        task = self.engine.cell.tasks.get(task_id)
        self.resident.discard(task_id)
        self.out_migrations.discard(task_id)
        if task is not None:
            self.used_sum -= np.asarray(task.used)
            self.required_sum -= np.asarray(task.required)
            if task.production:
                self.prod_req_sum -= np.asarray(task.required)
        self.drop_negotiation(task_id)

    def drop_negotiation(self, task_id: str) -> None:
        # A finished or dead task invalidates all its recommendations.
        if self.negotiations.pop(task_id, None) is not None:
            if self.engine.negotiation_source.get(task_id) == self.id:
                self.engine.negotiation_source.pop(task_id, None)

    def reserve(self, snapshot: TaskSnapshot, source: Optional[str], forced: bool,
                complete_at: int, rec_age_us: int) -> None:
        self.in_migrations[snapshot.task_id] = InMigration(
            snapshot=snapshot, source=source, forced=forced,
            complete_at=complete_at, rec_age_us=rec_age_us,
            constraints_ok=matches_attributes(snapshot.constraints, self.attributes),
            capacity_ok=bool(np.all(np.asarray(snapshot.required) <= self.total)))
        self.engine.reservation_target[snapshot.task_id] = self.id
        self.incoming_used += np.asarray(snapshot.used)
        if snapshot.production:
            self.incoming_prod_req += np.asarray(snapshot.required)

    def release_reservation(self, task_id: str) -> Optional[InMigration]:
        reservation = self.in_migrations.pop(task_id, None)
        if reservation is not None:
            if self.engine.reservation_target.get(task_id) == self.id:
                self.engine.reservation_target.pop(task_id, None)
            self.incoming_used -= np.asarray(reservation.snapshot.used)
            if reservation.snapshot.production:
                self.incoming_prod_req -= np.asarray(reservation.snapshot.required)
        return reservation

    # -- admission checks ---------------------------------------------------------

    def projected_used(self, extra: np.ndarray) -> np.ndarray:
        return self.used_sum + self.incoming_used + extra

    def admission_ok(self, snapshot: TaskSnapshot, forced: bool) -> bool:
        if not matches_attributes(snapshot.constraints, self.attributes):
            return False
        if np.any(np.asarray(snapshot.required) > self.total):
            return False  # total capacity must suffice even when forced
        if forced:
            return True
        projected = self.projected_used(np.asarray(snapshot.used))
        if np.any(projected > self.total):
            return False
        prod = self.prod_req_sum + self.incoming_prod_req
        if snapshot.production:
            prod = prod + np.asarray(snapshot.required)
        return rus_fits(self.total, prod)

    def stats(self) -> NodeStats:
        return NodeStats(
            node_id=self.id,
            total=tuple(self.total),
            used=tuple(self.used_sum),
            projected_used=tuple(self.used_sum + self.incoming_used),
        )

    # -- protocol ------------------------------------------------------------------

    def handle(self, message: Message) -> None:
        kind = message.kind
        if kind is MessageKind.TASK_MIGRATION_REQUEST:
            self._handle_migration_request(message)
        elif kind is MessageKind.TASK_MIGRATION_PROCESS_REQUEST:
            self._handle_process_request(message)
        elif kind is MessageKind.GET_CANDIDATE_NODES_RESPONSE:
            self._handle_quote_response(message)
        elif kind in (MessageKind.TASK_MIGRATION_ACCEPTANCE_RESPONSE,
                      MessageKind.TASK_MIGRATION_REJECTION_RESPONSE):
            self._handle_accept_reject(message)
        elif kind is MessageKind.TASK_MIGRATION_PROCESS_CONFIRMATION_RESPONSE:
            self._handle_process_confirmation(message)
        elif kind is MessageKind.TASK_MIGRATION_PROCESS_ERROR_RESPONSE:
            self._handle_process_error(message)

    def _handle_migration_request(self, message: Message) -> None:
        # Acceptance only signals readiness; nothing is reserved yet.
        snapshot = message.task
        if self.admission_ok(snapshot, forced=False):
            kind = MessageKind.TASK_MIGRATION_ACCEPTANCE_RESPONSE
        else:
            kind = MessageKind.TASK_MIGRATION_REJECTION_RESPONSE
        self.engine.send(Message(
            kind=kind, sender=self.id, recipient=message.sender,
            correlation_id=message.correlation_id, task=snapshot,
            node_stats=self.stats()))

    def _handle_process_request(self, message: Message) -> None:
        snapshot = message.task
        engine = self.engine
        rec_age = engine.pending_rec_age.pop(message.correlation_id, 0)
        task = engine.cell.tasks.get(snapshot.task_id)
        duplicate = (snapshot.task_id in self.in_migrations
                     or snapshot.task_id in self.resident)
        if task is None or duplicate or not self.admission_ok(snapshot, message.forced):
            engine.send(Message(
                kind=MessageKind.TASK_MIGRATION_PROCESS_ERROR_RESPONSE,
                sender=self.id, recipient=message.sender,
                correlation_id=message.correlation_id, task=snapshot))
            return
        # Final check passed: resources are reserved and the transfer starts.
        complete_at = engine.now_us + engine.config.transfer_rounds * engine.round_us
        self.reserve(snapshot, source=message.sender if not message.initial else None,
                     forced=message.forced, complete_at=complete_at, rec_age_us=rec_age)
        engine.schedule_completion(self.id, snapshot.task_id, complete_at)
        engine.send(Message(
            kind=MessageKind.TASK_MIGRATION_PROCESS_CONFIRMATION_RESPONSE,
            sender=self.id, recipient=message.sender,
            correlation_id=message.correlation_id, task=snapshot))

    def _handle_quote_response(self, message: Message) -> None:
        task_id = message.task.task_id if message.task else None
        negotiation = self.negotiations.get(task_id)
        if negotiation is None or negotiation.quote_corr != message.correlation_id:
            return
        negotiation.recommendations = list(message.recommendations)
        negotiation.state = "accepts"
        negotiation.deadline_us = self.engine.now_us + self.engine.config.acceptance_wait_us
        live = [r for r in negotiation.recommendations if not r.force_migration]
        if not live:
            self._select_target(negotiation)
            return
        for rec in live:
            corr = self.engine.next_correlation()
            self.engine.send(Message(
                kind=MessageKind.TASK_MIGRATION_REQUEST, sender=self.id,
                recipient=rec.node_id, correlation_id=corr, task=message.task))

    def _handle_accept_reject(self, message: Message) -> None:
        task_id = message.task.task_id if message.task else None
        negotiation = self.negotiations.get(task_id)
        if negotiation is None or negotiation.state != "accepts":
            return
        if message.kind is MessageKind.TASK_MIGRATION_ACCEPTANCE_RESPONSE:
            negotiation.accepted[message.sender] = message.node_stats
        else:
            negotiation.rejected.add(message.sender)
        expected = sum(1 for r in negotiation.recommendations if not r.force_migration)
        if len(negotiation.accepted) + len(negotiation.rejected) >= expected:
            self._select_target(negotiation)

    def _rescore(self, rec: CandidateNodeRecommendation, stats: NodeStats,
                 snapshot: TaskSnapshot) -> float:
        engine = self.engine
        before = np.asarray(stats.projected_used)
        after = before + np.asarray(snapshot.used)
        return engine.score_single(engine.config.realloc_scorer, np.asarray(stats.total),
                                   before, after)

    def _select_target(self, negotiation: Negotiation) -> None:
        engine = self.engine
        task = engine.cell.tasks.get(negotiation.task_id)
        if task is None:
            self.drop_negotiation(negotiation.task_id)
            return
        snapshot = engine.snapshot_task(negotiation.task_id)
        now = engine.now_us
        ttl = engine.config.recommendation_ttl_us
        live = [r for r in negotiation.recommendations
                if not r.expired(now, ttl) and r.node_id not in negotiation.attempted]
        regular = [r for r in live if not r.force_migration and r.node_id in negotiation.accepted]
        forced = [r for r in live if r.force_migration]

        choice: Optional[CandidateNodeRecommendation] = None
        if regular:
            weights = [self._rescore(r, negotiation.accepted[r.node_id], snapshot)
                       for r in regular]
            positive = [(r, w) for r, w in zip(regular, weights) if w > 0]
            if positive:
                recs, ws = zip(*positive)
                choice = self.rng.choices(recs, weights=ws, k=1)[0]
            else:
                choice = self.rng.choice(regular)
        elif forced:
            # forced candidates only once every regular attempt failed
            choice = self.rng.choice(forced)
        if choice is None:
            # Nothing left: negotiation dies; the overload check next tick
            # restarts the whole selection from scratch.
            self.drop_negotiation(negotiation.task_id)
            engine.metrics.san_restarts += 1
            return
        negotiation.attempted.add(choice.node_id)
        negotiation.state = "confirm"
        negotiation.deadline_us = now + engine.config.acceptance_wait_us
        corr = engine.next_correlation()
        engine.pending_rec_age[corr] = now - choice.created_at
        engine.metrics.migrations_attempted += 1
        engine.sample_target_selection(self, negotiation, snapshot, live, choice)
        engine.send(Message(
            kind=MessageKind.TASK_MIGRATION_PROCESS_REQUEST, sender=self.id,
            recipient=choice.node_id, correlation_id=corr, task=snapshot,
            forced=choice.force_migration))

    def _handle_process_confirmation(self, message: Message) -> None:
        task_id = message.task.task_id
        negotiation = self.negotiations.get(task_id)
        if negotiation is None:
            return
        self.out_migrations.add(task_id)
        # ownership stays here until the transfer completes

    def _handle_process_error(self, message: Message) -> None:
        task_id = message.task.task_id
        negotiation = self.negotiations.get(task_id)
        self.engine.metrics.collisions += 1
        if negotiation is None or negotiation.state != "confirm":
            return
        negotiation.state = "accepts"
        self._select_target(negotiation)

    # -- per-round behavior ---------------------------------------------------------

    def on_round(self, round_index: int) -> None:
        engine = self.engine
        if round_index == 0:
            self._report_status()
            self._run_selection_if_needed()
        if round_index > 0 and self.negotiations:
            for negotiation in list(self.negotiations.values()):
                if engine.now_us < negotiation.deadline_us:
                    continue
                if negotiation.state == "accepts":
                    self._select_target(negotiation)
                else:
                    # quote or confirm never answered: give up, the next
                    # overload check restarts the whole flow
                    self.drop_negotiation(negotiation.task_id)
                    engine.metrics.san_restarts += 1

    def _report_status(self) -> None:
        engine = self.engine
        broker = engine.broker_for(self.rng)
        engine.send(Message(
            kind=MessageKind.STATUS_REPORT, sender=self.id, recipient=broker,
            correlation_id=engine.next_correlation(), node_stats=self.stats()))

    def _compulsory_tasks(self) -> list[str]:
        out = []
        for task_id in self.resident:
            task = self.engine.cell.tasks[task_id]
            if task.constraints and not matches_attributes(task.constraints, self.attributes):
                out.append(task_id)
            elif np.any(np.asarray(task.required) > self.total):
                out.append(task_id)
        return sorted(out)

    def _run_selection_if_needed(self) -> None:
        engine = self.engine
        if self.negotiations or self.out_migrations:
            return  # let in-flight departures resolve before selecting more
        compulsory = self._compulsory_tasks()
        if not self.overloaded() and not compulsory:
            return
        movable = sorted(self.resident)
        removable = []
        for task_id in movable:
            task = engine.cell.tasks[task_id]
            removable.append(RemovalCandidate(
                task_id=task_id,
                used=np.asarray(task.used, dtype=np.float64),
                migration_cost_mb=task.migration_cost_mb,
                production=task.production,
            ))
        if not removable:
            return
        result = select_candidate_services(
            node_total=self.total,
            used_sum=self.used_sum,
            removable=removable,
            compulsory_ids=compulsory,
            rng=self.rng,
            config=engine.config.selection,
        )
        engine.metrics.scs_runs += 1
        if result.alert and engine.config.log is not None:
            engine.config.log(f"ALERT node {self.id}: no removable subset de-overloads")
        engine.sample_selection(self, result, removable)
        for task_id in result.task_ids:
            self._start_negotiation(task_id)

    def _start_negotiation(self, task_id: str) -> None:
        if task_id in self.negotiations or task_id in self.out_migrations:
            return
        engine = self.engine
        corr = engine.next_correlation()
        negotiation = Negotiation(
            task_id=task_id, state="quote", quote_corr=corr,
            deadline_us=engine.now_us + engine.config.acceptance_wait_us)
        self.negotiations[task_id] = negotiation
        engine.negotiation_source[task_id] = self.id
        broker = engine.broker_for(self.rng)
        engine.send(Message(
            kind=MessageKind.GET_CANDIDATE_NODES_REQUEST, sender=self.id,
            recipient=broker, correlation_id=corr,
            task=engine.snapshot_task(task_id), initial=False))


class BrokerAgent:
    """Caches reported node state; quotes candidates; places new tasks."""

    def __init__(self, broker_id: str, engine: "AgentEngine"):
        self.id = broker_id
        self.engine = engine
        self.cache: StateStore[str, BrokerCacheEntry] = StateStore()
        self.pending: deque[str] = deque()
        #: failed placements wait here until the next tick, so one stuck task
        #: cannot spin the whole per-round budget on itself
        self.retry_queue: list[str] = []
        self.in_flight: dict[int, PlacementFlow] = {}
        self.rng = random.Random(_stable_seed(engine.seed, "ba", broker_id))
        self.np_rng = np.random.Generator(np.random.PCG64(_stable_seed(engine.seed, "ba-np", broker_id)))
        self._index_dirty = True
        self._index: Optional[tuple] = None

    # -- cache ------------------------------------------------------------------

    def update_cache(self, stats: NodeStats, now: int) -> None:
        entry = BrokerCacheEntry(
            node_id=stats.node_id,
            available=tuple(t - u for t, u in zip(stats.total, stats.used)),
            attributes=self.engine.cell.nodes[stats.node_id].attributes
            if stats.node_id in self.engine.cell.nodes else {},
            last_update=now,
        )
        self.cache.put(stats.node_id, entry)
        self._index_dirty = True

    def evict_stale(self, now: int) -> None:
        ttl = self.engine.config.cache_entry_ttl_us
        for node_id, entry in self.cache.items():
            if now - entry.last_update > ttl or node_id not in self.engine.cell.nodes:
                self.cache.remove(node_id)
                self._index_dirty = True

    def _rebuild_index(self) -> None:
        entries = sorted(self.cache.items())
        ids = [node_id for node_id, _ in entries]
        if ids:
            totals = np.array([self.engine.node_total(node_id) for node_id in ids])
            avail = np.array([entry.available for _, entry in entries])
        else:
            dim = self.engine.dimension
            totals = np.zeros((0, dim))
            avail = np.zeros((0, dim))
        attrs = [entry.attributes for _, entry in entries]
        id_pos = {node_id: i for i, node_id in enumerate(ids)}
        self._index = (ids, totals, np.maximum(totals - avail, 0.0), attrs, id_pos)
        self._index_dirty = False

    # -- quoting -----------------------------------------------------------------

    def compute_recommendations(self, snapshot: TaskSnapshot, initial: bool,
                                exclude: Optional[str]) -> Optional[list]:
        engine = self.engine
        config = engine.config
        if self._index_dirty:
            self._rebuild_index()
        ids, totals, used, attrs, id_pos = self._index
        count = len(ids)
        if count == 0:
            return None
        scan_limit = config.initial_scan_limit if initial else config.realloc_scan_limit
        order = self.np_rng.permutation(count)  # fresh shuffle per request
        exclude_pos = id_pos.get(exclude, -1) if exclude is not None else -1
        required = np.asarray(snapshot.required)

        if snapshot.constraints:
            matching: list[int] = []
            any_match = False
            for index in order:
                if index == exclude_pos:
                    continue
                if not matches_attributes(snapshot.constraints, attrs[index]):
                    continue
                any_match = True
                matching.append(int(index))
                if len(matching) >= scan_limit:
                    break
            if not any_match:
                return None
        else:
            window = order[order != exclude_pos][:scan_limit] if exclude_pos >= 0 else order[:scan_limit]
            matching = [int(i) for i in window]
            if not matching:
                return None

        def capable_indices(needed: int, skip: set) -> list[int]:
            """Matching nodes whose total capacity fits the task, in shuffled
            order; computed lazily because padding is the uncommon path."""
            cap_ok = np.all(required <= totals, axis=1)
            out = []
            for index in order:
                if len(out) >= needed:
                    break
                index = int(index)
                if index == exclude_pos or index in skip or not cap_ok[index]:
                    continue
                if snapshot.constraints and not matches_attributes(snapshot.constraints, attrs[index]):
                    continue
                out.append(index)
            return out

        recommendations: list[CandidateNodeRecommendation] = []
        chosen: set[int] = set()

        def recommend(index: int, fitness: float, forced: bool) -> None:
            chosen.add(index)
            recommendations.append(CandidateNodeRecommendation(
                node_id=ids[index],
                node_available_resources=tuple(totals[index] - used[index]),
                fitness_value=fitness,
                force_migration=forced,
                created_at=engine.now_us,
            ))

        task_vec = required if initial else np.asarray(snapshot.used)
        pool = np.array(matching)
        after = used[pool] + task_vec
        scores = engine.score_vec(
            config.initial_scorer if initial else config.realloc_scorer,
            totals[pool], used[pool], after)
        positive = scores > 0.0
        scored_pool, pos_scores = pool[positive], scores[positive]
        take = min(config.recommendation_count, len(scored_pool))
        if take > 0:
            picked = self.np_rng.choice(len(scored_pool), size=take, replace=False,
                                        p=pos_scores / pos_scores.sum())
            for i in sorted(picked, key=lambda i: (-pos_scores[i], ids[scored_pool[i]])):
                recommend(int(scored_pool[i]), float(pos_scores[i]), forced=False)
        if len(recommendations) < config.recommendation_count:
            # zero-score nodes with room still beat any forced entry: a flat
            # score never justifies skipping availability checks
            room = np.all(totals[pool] - used[pool] >= task_vec, axis=1)
            for index in pool[~positive & room]:
                if len(recommendations) >= config.recommendation_count:
                    break
                recommend(int(index), ZERO_SCORE_FITNESS, forced=False)
        if len(recommendations) < config.recommendation_count:
            # Last resort: matching nodes with sufficient total capacity whose
            # current availability is insufficient.
            needed = config.recommendation_count - len(recommendations)
            for index in capable_indices(needed, chosen):
                if len(recommendations) >= config.recommendation_count:
                    break
                recommend(index, FORCED_FITNESS, forced=True)
        return recommendations

    # -- protocol ------------------------------------------------------------------

    def handle(self, message: Message) -> None:
        kind = message.kind
        if kind is MessageKind.STATUS_REPORT:
            self.update_cache(message.node_stats, self.engine.now_us)
        elif kind is MessageKind.GET_CANDIDATE_NODES_REQUEST:
            recommendations = self.compute_recommendations(
                message.task, initial=message.initial, exclude=message.sender)
            self.engine.sample_quote(self, message, recommendations)
            if recommendations is None:
                self.engine.report_unschedulable(message.task.task_id)
                recommendations = []
            self.engine.send(Message(
                kind=MessageKind.GET_CANDIDATE_NODES_RESPONSE, sender=self.id,
                recipient=message.sender, correlation_id=message.correlation_id,
                task=message.task, recommendations=tuple(recommendations)))
        elif kind is MessageKind.TASK_MIGRATION_PROCESS_CONFIRMATION_RESPONSE:
            flow = self.in_flight.pop(message.correlation_id, None)
            if flow is not None:
                self.engine.commit_initial_placement(flow.task_id, message.sender)
        elif kind is MessageKind.TASK_MIGRATION_PROCESS_ERROR_RESPONSE:
            flow = self.in_flight.pop(message.correlation_id, None)
            if flow is not None:
                self.engine.metrics.collisions += 1
                flow.next_index += 1
                self._try_placement(flow)

    def enqueue_placement(self, task_id: str) -> None:
        self.pending.append(task_id)

    def flush_retries(self) -> None:
        self.pending.extend(self.retry_queue)
        self.retry_queue.clear()

    def on_round(self, round_index: int) -> None:
        budget = self.engine.config.placements_per_round
        served = 0
        while self.pending and served < budget:
            task_id = self.pending.popleft()
            served += 1
            if task_id not in self.engine.cell.tasks:
                continue
            if task_id in self.engine.cell.placement:
                continue
            snapshot = self.engine.snapshot_task(task_id)
            recommendations = self.compute_recommendations(snapshot, initial=True, exclude=None)
            if recommendations is None:
                self.engine.report_unschedulable(task_id)
                self.engine.retry_placement(task_id, self.rng)
                continue
            if not recommendations:
                self.engine.retry_placement(task_id, self.rng)
                continue
            flow = PlacementFlow(task_id=task_id, recommendations=recommendations)
            self._try_placement(flow)

    def _try_placement(self, flow: PlacementFlow) -> None:
        engine = self.engine
        while flow.next_index < len(flow.recommendations):
            rec = flow.recommendations[flow.next_index]
            if rec.expired(engine.now_us, engine.config.recommendation_ttl_us):
                flow.next_index += 1
                continue
            corr = engine.next_correlation()
            self.in_flight[corr] = flow
            engine.pending_rec_age[corr] = engine.now_us - rec.created_at
            engine.send(Message(
                kind=MessageKind.TASK_MIGRATION_PROCESS_REQUEST, sender=self.id,
                recipient=rec.node_id, correlation_id=corr,
                task=engine.snapshot_task(flow.task_id),
                forced=rec.force_migration, initial=True))
            return
        # every candidate failed: back to the pending queue for fresh quotes
        engine.retry_placement(flow.task_id, self.rng)


@dataclass(slots=True)
class AuditRecord:
    task_id: str
    source: Optional[str]
    target: str
    forced: bool
    initial: bool
    constraints_ok: bool
    capacity_ok: bool
    stable_after: bool
    rus_after: bool
    rec_age_us: int
    ttl_us: int
    cost_mb: float = 0.0


class AgentEngine:
    """Deterministic round-based scheduler for the agent network."""

    def __init__(self, cell: CellState, config: AgentConfig, seed: int,
                 start_us: int = 0):
        self.cell = cell
        self.config = config
        self.seed = seed
        self.dimension = cell.catalog.dimension
        self.now_us = start_us
        self.round_us = config.tick_length_us // config.rounds_per_tick
        self.rng = random.Random(_stable_seed(seed, "engine"))
        self.agents: dict[str, NodeAgent] = {}
        self.brokers: dict[str, BrokerAgent] = {}
        for index in range(config.broker_count):
            broker_id = f"broker-{index:03d}"
            self.brokers[broker_id] = BrokerAgent(broker_id, self)
        self._broker_ids = sorted(self.brokers)
        self._inbox: dict[str, deque] = {}
        self._outbox: list[Message] = []
        self._correlation = 0
        self._completions: list[tuple[int, str, str]] = []  # (due, node, task)
        self.metrics = TickMetrics()
        self.lifetime = TickMetrics()
        self.pending_rec_age: dict[int, int] = {}
        self.audit_log: list[AuditRecord] = []
        self.unschedulable: set[str] = set()
        self._sample_counters = {"selection": 0, "quote": 0, "target": 0}
        #: task -> node indexes so task/node removal is O(1), not O(nodes)
        self.reservation_target: dict[str, str] = {}
        self.negotiation_source: dict[str, str] = {}
        self._agent_order: Optional[list[str]] = None
        for node_id in sorted(cell.nodes):
            self.agents[node_id] = NodeAgent(node_id, self)
            self._bootstrap_cache(node_id)

    def agent_order(self) -> list[str]:
        if self._agent_order is None:
            self._agent_order = sorted(self.agents)
        return self._agent_order

    def _bootstrap_cache(self, node_id: str) -> None:
        # A joining node registers with the brokers right away, so quotes can
        # cover it before its first periodic status report lands.
        agent = self.agents[node_id]
        for broker in self.brokers.values():
            broker.update_cache(agent.stats(), self.now_us)

    # -- plumbing ---------------------------------------------------------------

    def next_correlation(self) -> int:
        self._correlation += 1
        return self._correlation

    def broker_for(self, rng) -> str:
        if len(self._broker_ids) == 1:
            return self._broker_ids[0]
        return rng.choice(self._broker_ids)

    def send(self, message: Message) -> None:
        self._outbox.append(message)
        if self.config.message_trace is not None:
            self.config.message_trace(message.trace_line(self.now_us))

    def node_total(self, node_id: str) -> tuple:
        return self.cell.nodes[node_id].total

    def snapshot_task(self, task_id: str) -> TaskSnapshot:
        task = self.cell.tasks[task_id]
        return TaskSnapshot(
            task_id=task_id,
            required=tuple(task.required),
            used=tuple(task.used) if not task.unstarted else tuple([0.0] * self.dimension),
            production=task.production,
            unstarted=task.unstarted,
            constraints=task.constraints,
            migration_cost_mb=task.migration_cost_mb,
        )

    def score_vec(self, scorer: str, totals, before, after) -> np.ndarray:
        if scorer == "sias":
            return allocation_score_vec(INITIAL_PARAMS, totals, after)
        if scorer == "sras":
            return allocation_score_vec(REALLOC_PARAMS, totals, after)
        if scorer == "sias_gain":
            gain = (allocation_score_vec(INITIAL_PARAMS, totals, after)
                    - allocation_score_vec(INITIAL_PARAMS, totals, before))
            return np.maximum(gain, 0.0)
        if scorer == "sras_gain":
            gain = (allocation_score_vec(REALLOC_PARAMS, totals, after)
                    - allocation_score_vec(REALLOC_PARAMS, totals, before))
            return np.maximum(gain, 0.0)
        raise ValueError(f"unknown scorer {scorer!r}")

    def score_single(self, scorer: str, total, before, after) -> float:
        return float(self.score_vec(scorer, total[None, :], before[None, :], after[None, :])[0])

    def report_unschedulable(self, task_id: str) -> None:
        if task_id not in self.unschedulable:
            self.unschedulable.add(task_id)
            self.metrics.unschedulable += 1
            if self.config.log is not None:
                self.config.log(f"ERROR task {task_id} unschedulable: no matching node in cache")

    def retry_placement(self, task_id: str, rng) -> None:
        broker = self.brokers[self.broker_for(rng)]
        broker.retry_queue.append(task_id)

    # -- state transitions -------------------------------------------------------

    def place_directly(self, task_id: str, node_id: str) -> None:
        """Replay-style placement bypassing negotiation (scenario setup);
        broker caches learn the new load immediately."""
        self.cell.place(task_id, node_id)
        agent = self.agents[node_id]
        agent.add_resident(task_id)
        for broker in self.brokers.values():
            broker.update_cache(agent.stats(), self.now_us)

    def commit_initial_placement(self, task_id: str, node_id: str) -> None:
        agent = self.agents.get(node_id)
        if agent is None or task_id not in self.cell.tasks:
            return
        reservation = agent.release_reservation(task_id)
        self.cell.place(task_id, node_id)
        agent.add_resident(task_id)
        self.metrics.placements += 1
        if self.config.audit:
            self._audit(task_id, None, agent, reservation, initial=True)

    def schedule_completion(self, node_id: str, task_id: str, due_us: int) -> None:
        self._completions.append((due_us, node_id, task_id))

    def _complete_due_migrations(self) -> None:
        due = [c for c in self._completions if c[0] <= self.now_us]
        if not due:
            return
        self._completions = [c for c in self._completions if c[0] > self.now_us]
        for _, node_id, task_id in sorted(due, key=lambda c: (c[0], c[1], c[2])):
            target = self.agents.get(node_id)
            if target is None:
                continue
            reservation = target.in_migrations.get(task_id)
            if reservation is None:
                continue
            if reservation.source is None:
                # initial placements commit on confirmation receipt instead
                continue
            target.release_reservation(task_id)
            if task_id not in self.cell.tasks:
                continue
            source = self.agents.get(reservation.source)
            if source is not None:
                source.remove_resident(task_id)
            self.cell.place(task_id, node_id)
            target.add_resident(task_id)
            task = self.cell.tasks[task_id]
            self.metrics.migrations_completed += 1
            self.metrics.stc_mb += task.migration_cost_mb
            if self.config.audit:
                self._audit(task_id, reservation.source, target, reservation, initial=False)

    def _audit(self, task_id: str, source: Optional[str], target: NodeAgent,
               reservation: Optional[InMigration], initial: bool) -> None:
        forced = reservation.forced if reservation is not None else False
        self.audit_log.append(AuditRecord(
            task_id=task_id,
            source=source,
            target=target.id,
            forced=forced,
            initial=initial,
            constraints_ok=reservation.constraints_ok if reservation is not None else True,
            capacity_ok=reservation.capacity_ok if reservation is not None else True,
            stable_after=not target.overloaded(),
            rus_after=rus_fits(target.total, target.prod_req_sum),
            rec_age_us=reservation.rec_age_us if reservation is not None else 0,
            ttl_us=self.config.recommendation_ttl_us,
            cost_mb=0.0 if initial else self.cell.tasks[task_id].migration_cost_mb,
        ))

    # -- workload events -----------------------------------------------------------

    def apply_events(self, batch) -> None:
        for event in batch:
            self._apply_event(event)

    def _apply_event(self, event) -> None:
        cell = self.cell
        kind = event.kind
        if kind is ev.EventKind.ADD_NODE:
            cell.apply(event)
            self.agents[event.node_id] = NodeAgent(event.node_id, self)
            self._agent_order = None
            self._bootstrap_cache(event.node_id)
        elif kind is ev.EventKind.REMOVE_NODE:
            self._remove_node(event)
        elif kind is ev.EventKind.UPDATE_NODE_TOTAL:
            cell.apply(event)
            agent = self.agents.get(event.node_id)
            if agent is not None:
                agent.total = np.array(event.total, dtype=np.float64)
        elif kind is ev.EventKind.ADD_TASK:
            cell.apply(event)
            broker = self.brokers[self.broker_for(self.rng)]
            broker.enqueue_placement(event.task_id)
        elif kind is ev.EventKind.REMOVE_TASK:
            task_id = event.task_id
            owner = cell.placement.get(task_id)
            if owner is not None and owner in self.agents:
                self.agents[owner].remove_resident(task_id)
            target = self.reservation_target.get(task_id)
            if target is not None:
                if target in self.agents:
                    self.agents[target].release_reservation(task_id)
                self._completions = [c for c in self._completions if c[2] != task_id]
            source = self.negotiation_source.get(task_id)
            if source is not None and source in self.agents:
                self.agents[source].drop_negotiation(task_id)
            cell.apply(event)
        elif kind is ev.EventKind.UPDATE_TASK_USED:
            task = cell.tasks.get(event.task_id)
            before = np.asarray(task.used) if task is not None else None
            was_unstarted = task.unstarted if task is not None else True
            cell.apply(event)
            task = cell.tasks.get(event.task_id)
            if task is None:
                return
            owner = cell.placement.get(event.task_id)
            if owner is not None and owner in self.agents:
                agent = self.agents[owner]
                old = np.zeros(self.dimension) if was_unstarted else before
                delta = np.asarray(task.used) - old
                agent.used_sum += delta
                threshold = self.config.rus_spike_threshold
                with np.errstate(divide="ignore", invalid="ignore"):
                    jump = np.where(agent.total > 0, delta / np.where(agent.total > 0, agent.total, 1.0), 0.0)
                if np.any(jump > threshold):
                    self.metrics.rus_spikes += 1
        elif kind is ev.EventKind.UPDATE_TASK_REQUIRED:
            task = cell.tasks.get(event.task_id)
            before = np.asarray(task.required) if task is not None else None
            production = task.production if task is not None else False
            cell.apply(event)
            task = cell.tasks.get(event.task_id)
            if task is None or before is None:
                return
            owner = cell.placement.get(event.task_id)
            if owner is not None and owner in self.agents:
                agent = self.agents[owner]
                delta = np.asarray(task.required) - before
                agent.required_sum += delta
                if production:
                    agent.prod_req_sum += delta
        else:
            cell.apply(event)

    def _remove_node(self, event) -> None:
        cell = self.cell
        agent = self.agents.pop(event.node_id, None)
        self._agent_order = None
        displaced: list[str] = []
        if agent is not None:
            displaced = sorted(agent.resident)
            # inbound reservations die with the node; their sources retry
            for task_id in list(agent.in_migrations):
                reservation = agent.release_reservation(task_id)
                if reservation and reservation.source in self.agents:
                    source = self.agents[reservation.source]
                    source.out_migrations.discard(task_id)
                    source.drop_negotiation(task_id)
            for task_id in list(agent.negotiations):
                agent.drop_negotiation(task_id)
            self._completions = [c for c in self._completions if c[1] != event.node_id]
        cell.apply(event)
        for broker in self.brokers.values():
            if broker.cache.remove(event.node_id) is not None:
                broker._index_dirty = True
        # displaced tasks re-enter scheduling unless already mid-migration
        for task_id in displaced:
            if task_id in cell.tasks and task_id not in self.reservation_target:
                self.brokers[self.broker_for(self.rng)].enqueue_placement(task_id)

    # -- scheduler -------------------------------------------------------------------

    def run_tick(self) -> TickMetrics:
        """Advance one tick (events must have been applied by the caller)."""
        self.metrics = TickMetrics()
        for broker in self.brokers.values():
            broker.evict_stale(self.now_us)
            broker.flush_retries()
        self._gossip()
        for round_index in range(self.config.rounds_per_tick):
            self._run_round(round_index)
            self.now_us += self.round_us
        self._complete_due_migrations()
        for name in self.lifetime.__dataclass_fields__:
            setattr(self.lifetime, name,
                    getattr(self.lifetime, name) + getattr(self.metrics, name))
        return self.metrics

    def _gossip(self) -> None:
        if len(self.brokers) < 2:
            return
        merged: dict[str, BrokerCacheEntry] = {}
        for broker in self.brokers.values():
            for node_id, entry in broker.cache.items():
                current = merged.get(node_id)
                if current is None or entry.last_update > current.last_update:
                    merged[node_id] = entry
        for broker in self.brokers.values():
            for node_id, entry in merged.items():
                broker.cache.put(node_id, entry)
            broker._index_dirty = True

    def _run_round(self, round_index: int) -> None:
        self._complete_due_migrations()
        # deliver everything sent last round
        for message in self._outbox:
            self._inbox.setdefault(message.recipient, deque()).append(message)
        self._outbox = []
        for recipient in sorted(self._inbox):
            queue = self._inbox[recipient]
            agent = self.brokers.get(recipient) or self.agents.get(recipient)
            if agent is None:
                continue
            # monitoring data is absorbed before any request is answered;
            # per-sender relative order is preserved (stable partition)
            status = [m for m in queue if m.kind is MessageKind.STATUS_REPORT]
            rest = [m for m in queue if m.kind is not MessageKind.STATUS_REPORT]
            for message in status:
                agent.handle(message)
            for message in rest:
                agent.handle(message)
        self._inbox = {}
        for broker_id in self._broker_ids:
            self.brokers[broker_id].on_round(round_index)
        for node_id in self.agent_order():
            agent = self.agents.get(node_id)
            if agent is not None:
                agent.on_round(round_index)

    # -- metrics -----------------------------------------------------------------------

    def classify_nodes(self) -> dict:
        ids = sorted(self.agents)
        if not ids:
            return asr_metrics([])
        totals = np.stack([self.agents[i].total for i in ids])
        used = np.stack([self.agents[i].used_sum for i in ids])
        counts = np.array([len(self.agents[i].resident) for i in ids])
        return asr_metrics(list(classify_vec(totals, used, counts)))

    def overloaded_count(self) -> int:
        return sum(1 for agent in self.agents.values() if agent.overloaded())

    def reservation_invariant_holds(self) -> bool:
        """Every out-migrating task is reserved on exactly one target."""
        reserved: dict[str, int] = {}
        for agent in self.agents.values():
            for task_id in agent.in_migrations:
                reserved[task_id] = reserved.get(task_id, 0) + 1
        for agent in self.agents.values():
            for task_id in agent.out_migrations:
                if reserved.get(task_id, 0) != 1:
                    return False
        return all(count == 1 for count in reserved.values())

    # -- decision sampling ----------------------------------------------------------

    def sample_selection(self, agent: NodeAgent, result, removable) -> None:
        if self.config.log is None:
            return
        self._sample_counters["selection"] += 1
        if self._sample_counters["selection"] % self.config.sample_selection_rate != 1 % self.config.sample_selection_rate:
            return
        lines = [f"SAMPLE: selected overloading tasks for node [{agent.id}]",
                 f"Node total resources = [{', '.join(f'{v:.10f}' for v in agent.total)}]",
                 f"Node used resources (all tasks) = [{', '.join(f'{v:.10f}' for v in agent.used_sum)}]"]
        selected = set(result.task_ids)
        for candidate in removable:
            task = self.cell.tasks.get(candidate.task_id)
            if task is None:
                continue
            star = "* " if candidate.task_id in selected else ""
            flags = " (PROD)" if task.production else ""
            lines.append(
                f"{star}Task [{candidate.task_id}]{flags} Priority={task.priority} "
                f"Required resources=[{', '.join(f'{v:.10f}' for v in task.required)}] "
                f"Used resources=[{', '.join(f'{v:.10f}' for v in task.used)}] "
                f"Migration cost = {task.migration_cost_mb:.2f} [MB]")
        cost = sum(self.cell.tasks[t].migration_cost_mb for t in result.task_ids
                   if t in self.cell.tasks)
        lines.append(f"Total migration cost (selected tasks) = {cost} [MB]")
        self.config.log("\n".join(lines))

    def sample_quote(self, broker: BrokerAgent, message: Message, recommendations) -> None:
        if self.config.log is None:
            return
        self._sample_counters["quote"] += 1
        if self._sample_counters["quote"] % self.config.sample_quote_rate != 1 % self.config.sample_quote_rate:
            return
        lines = [f"SAMPLE: candidate nodes recommendations for migration-out of task:",
                 f"Task [{message.task.task_id}] Required resources="
                 f"[{', '.join(f'{v:.10f}' for v in message.task.required)}] "
                 f"Migration cost = {message.task.migration_cost_mb:.2f} [MB]",
                 f"Source node: [{message.sender}]"]
        for rec in recommendations or ():
            lines.append(rec.log_format())
        self.config.log("\n".join(lines))

    def sample_target_selection(self, agent: NodeAgent, negotiation, snapshot,
                                live, choice) -> None:
        if self.config.log is None:
            return
        self._sample_counters["target"] += 1
        if self._sample_counters["target"] % self.config.sample_target_rate != 1 % self.config.sample_target_rate:
            return
        lines = [f"SAMPLE: accepted recommendations for migration-out of task:",
                 f"Task [{snapshot.task_id}] Migration cost = {snapshot.migration_cost_mb:.2f} [MB]",
                 f"Source node: [{agent.id}]",
                 "All non-expired recommendations (* selected):"]
        for rec in live:
            star = "* " if rec is choice else ""
            lines.append(star + rec.log_format())
        self.config.log("\n".join(lines))
