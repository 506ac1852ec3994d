"""Agent-to-agent message types.

All communication is point-to-point request/response; every response carries
its request's correlation id.  Status reports are the monitoring channel
from node agents to brokers and sit outside the negotiation protocol.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class MessageKind(enum.Enum):
    GET_CANDIDATE_NODES_REQUEST = "GetCandidateNodesRequest"
    GET_CANDIDATE_NODES_RESPONSE = "GetCandidateNodesResponse"
    TASK_MIGRATION_REQUEST = "TaskMigrationRequest"
    TASK_MIGRATION_ACCEPTANCE_RESPONSE = "TaskMigrationAcceptanceResponse"
    TASK_MIGRATION_REJECTION_RESPONSE = "TaskMigrationRejectionResponse"
    TASK_MIGRATION_PROCESS_REQUEST = "TaskMigrationProcessRequest"
    TASK_MIGRATION_PROCESS_CONFIRMATION_RESPONSE = "TaskMigrationProcessConfirmationResponse"
    TASK_MIGRATION_PROCESS_ERROR_RESPONSE = "TaskMigrationProcessErrorResponse"
    STATUS_REPORT = "StatusReport"


PROTOCOL_KINDS = frozenset(kind for kind in MessageKind if kind is not MessageKind.STATUS_REPORT)

RESPONSE_KINDS = frozenset({
    MessageKind.GET_CANDIDATE_NODES_RESPONSE,
    MessageKind.TASK_MIGRATION_ACCEPTANCE_RESPONSE,
    MessageKind.TASK_MIGRATION_REJECTION_RESPONSE,
    MessageKind.TASK_MIGRATION_PROCESS_CONFIRMATION_RESPONSE,
    MessageKind.TASK_MIGRATION_PROCESS_ERROR_RESPONSE,
})


@dataclass(slots=True)
class CandidateNodeRecommendation:
    """Broker quote for one candidate node.

    Forced recommendations carry a sentinel minimal fitness and mark nodes
    with enough total capacity whose current availability is insufficient;
    they are eligible only after every regular candidate has failed.
    """

    node_id: str
    node_available_resources: tuple
    fitness_value: float
    force_migration: bool
    created_at: int

    def expired(self, now_us: int, ttl_us: int) -> bool:
        return now_us - self.created_at > ttl_us

    def log_format(self) -> str:
        avail = ",".join(f"{v:.10f}" for v in self.node_available_resources)
        return (f"CandidateNodeRecommendation[nodeId={self.node_id},"
                f"nodeAvailableResources=[{avail}],"
                f"fitnessValue={self.fitness_value:.12f},"
                f"forceMigration={str(self.force_migration).lower()}]")


FORCED_FITNESS = 1e-12
#: Matching nodes with room but no positive score pad the quote before any
#: forced entry; their sentinel stays distinguishable from the forced one.
ZERO_SCORE_FITNESS = 1e-9


@dataclass(slots=True)
class TaskSnapshot:
    """Enough task state for a remote agent to evaluate a migration."""

    task_id: str
    required: tuple
    used: tuple
    production: bool
    unstarted: bool
    constraints: tuple
    migration_cost_mb: float


@dataclass(slots=True)
class NodeStats:
    """Fresh node-side numbers carried on acceptance responses."""

    node_id: str
    total: tuple
    used: tuple
    projected_used: tuple


@dataclass(slots=True)
class Message:
    kind: MessageKind
    sender: str
    recipient: str
    correlation_id: int
    task: Optional[TaskSnapshot] = None
    recommendations: tuple = ()
    node_stats: Optional[NodeStats] = None
    forced: bool = False
    #: For quote requests: True when quoting an initial placement.
    initial: bool = False

    def is_response(self) -> bool:
        return self.kind in RESPONSE_KINDS

    def trace_line(self, now_us: int) -> str:
        return (f"{now_us}\t{self.kind.value}\t{self.sender}\t{self.recipient}"
                f"\t{self.correlation_id}")
