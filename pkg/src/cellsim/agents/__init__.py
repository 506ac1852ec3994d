"""Decentralized agent-based load balancing."""

from .engine import (
    AgentConfig,
    AgentEngine,
    AuditRecord,
    BrokerAgent,
    BrokerCacheEntry,
    NodeAgent,
    TickMetrics,
)
from .messages import (
    FORCED_FITNESS,
    CandidateNodeRecommendation,
    Message,
    MessageKind,
    NodeStats,
    TaskSnapshot,
)
from .scoring import (
    INITIAL_PARAMS,
    REALLOC_PARAMS,
    STA_CUTOFF,
    AllocationClass,
    ScoringParams,
    allocation_score,
    allocation_score_vec,
    asr_metrics,
    classify_allocation,
    classify_vec,
    rus_fits,
    score_gain,
    sias,
    sras,
)
from .selection import RemovalCandidate, SelectionConfig, SelectionResult, select_candidate_services

__all__ = [
    "AgentConfig", "AgentEngine", "AuditRecord", "BrokerAgent", "BrokerCacheEntry",
    "NodeAgent", "TickMetrics",
    "FORCED_FITNESS", "CandidateNodeRecommendation", "Message", "MessageKind",
    "NodeStats", "TaskSnapshot",
    "INITIAL_PARAMS", "REALLOC_PARAMS", "STA_CUTOFF", "AllocationClass",
    "ScoringParams", "allocation_score", "allocation_score_vec", "asr_metrics",
    "classify_allocation", "classify_vec", "rus_fits", "score_gain", "sias", "sras",
    "RemovalCandidate", "SelectionConfig", "SelectionResult", "select_candidate_services",
]
