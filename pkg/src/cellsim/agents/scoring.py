"""Node allocation scoring and classification.

Two score families drive placement: the initial-allocation score peaks when
a node is lightly and proportionally utilized (spread new tasks out, their
real usage is still unknown), the re-allocation score peaks just under the
90% band (pack running tasks tightly).  Both share one functional form

    steep ^ (prod_i (u_i - bias * cap_i)) - floor

clamped to zero when negative, zero on any resource at or above 90% of
capacity (the super-tight band and overloads), and flattened to the
bias-point value when every resource sits on the far side of the bias from
the function's target region, which keeps the peak where it belongs.  GAIN
variants score the improvement a move brings instead of the absolute level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

#: Any resource at or beyond this fraction of capacity zeroes the score.
STA_CUTOFF = 0.9
#: Class boundaries: tight allocation is [0.7, 0.9) on all resources.
TIGHT_LOWER = 0.7


@dataclass(frozen=True)
class ScoringParams:
    f_bias: float
    f_steep: float
    f_floor: float
    #: True: peak at low utilization (initial allocation); False: peak just
    #: under the cutoff (re-allocation).
    low_biased: bool

    def __post_init__(self) -> None:
        if not (0.0 < self.f_bias < 1.0):
            raise ValueError("f_bias must be in (0, 1)")
        if not self.f_steep > 1.0:
            raise ValueError("f_steep must be > 1")
        if self.f_floor < 0.0:
            raise ValueError("f_floor must be >= 0")


INITIAL_PARAMS = ScoringParams(f_bias=0.3, f_steep=350.0, f_floor=0.8, low_biased=True)
REALLOC_PARAMS = ScoringParams(f_bias=0.6, f_steep=500.0, f_floor=0.8, low_biased=False)


def allocation_score(params: ScoringParams, node_total: Sequence[float],
                     node_used_after: Sequence[float]) -> float:
    """Score one node under the assumption the candidate task has landed."""
    exponent = 1.0
    on_far_side = True
    for total, used in zip(node_total, node_used_after):
        if total <= 0.0:
            if used > 0.0:
                return 0.0
            continue  # zero-capacity resource with no demand: ignored
        if used >= STA_CUTOFF * total:
            return 0.0
        delta = used - params.f_bias * total
        exponent *= delta
        if params.low_biased:
            on_far_side = on_far_side and delta > 0.0
        else:
            on_far_side = on_far_side and delta < 0.0
    if on_far_side:
        exponent = 0.0
    score = params.f_steep ** exponent - params.f_floor
    return score if score > 0.0 else 0.0


def sias(node_total: Sequence[float], node_used_after: Sequence[float],
         params: ScoringParams = INITIAL_PARAMS) -> float:
    """Initial-allocation score; computed from declared requirements."""
    return allocation_score(params, node_total, node_used_after)


def sras(node_total: Sequence[float], node_used_after: Sequence[float],
         params: ScoringParams = REALLOC_PARAMS) -> float:
    """Re-allocation score; computed from monitored usage."""
    return allocation_score(params, node_total, node_used_after)


def score_gain(base_scorer: Callable[..., float], node_total: Sequence[float],
               used_before: Sequence[float], used_after: Sequence[float]) -> float:
    """Improvement the move brings to the node; never negative."""
    gain = base_scorer(node_total, used_after) - base_scorer(node_total, used_before)
    return gain if gain > 0.0 else 0.0


def allocation_score_vec(params: ScoringParams, totals: np.ndarray,
                         used_after: np.ndarray) -> np.ndarray:
    """Vectorized scorer over (N, d) capacity/usage matrices."""
    totals = np.asarray(totals, dtype=np.float64)
    used_after = np.asarray(used_after, dtype=np.float64)
    positive_cap = totals > 0.0
    zero_cap_demand = np.any(~positive_cap & (used_after > 0.0), axis=1)
    cutoff = np.any(positive_cap & (used_after >= STA_CUTOFF * totals), axis=1)

    deltas = used_after - params.f_bias * totals
    masked = np.where(positive_cap, deltas, 1.0)
    exponent = np.prod(masked, axis=1)
    if params.low_biased:
        far = np.all(~positive_cap | (deltas > 0.0), axis=1)
    else:
        far = np.all(~positive_cap | (deltas < 0.0), axis=1)
    exponent = np.where(far, 0.0, exponent)

    scores = np.power(params.f_steep, exponent) - params.f_floor
    scores = np.where(zero_cap_demand | cutoff, 0.0, scores)
    return np.maximum(scores, 0.0)


class AllocationClass(enum.Enum):
    IDLE = "idle"
    STA = "sta"          # super tight: something at or above 90%
    TA = "ta"            # tight: everything in [70%, 90%)
    PA = "pa"            # proportional: everything below 70%
    DA = "da"            # disproportional: mixed high/low
    OVERLOADED = "overloaded"


def classify_allocation(node_total: Sequence[float], node_used: Sequence[float],
                        task_count: int) -> AllocationClass:
    """Total function of the per-resource utilization ratios."""
    ratios = []
    for total, used in zip(node_total, node_used):
        if total <= 0.0:
            if used > 0.0:
                return AllocationClass.OVERLOADED
            continue  # ignored dimension
        ratios.append(used / total)
    if any(r > 1.0 for r in ratios):
        return AllocationClass.OVERLOADED
    if any(r >= STA_CUTOFF for r in ratios):
        return AllocationClass.STA
    if ratios and all(TIGHT_LOWER <= r < STA_CUTOFF for r in ratios):
        return AllocationClass.TA
    if task_count == 0:
        return AllocationClass.IDLE
    if all(r < TIGHT_LOWER for r in ratios):
        return AllocationClass.PA
    return AllocationClass.DA


def classify_vec(totals: np.ndarray, used: np.ndarray,
                 task_counts: np.ndarray) -> np.ndarray:
    """Vectorized classification; returns an array of AllocationClass."""
    totals = np.asarray(totals, dtype=np.float64)
    used = np.asarray(used, dtype=np.float64)
    positive = totals > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(positive, used / np.where(positive, totals, 1.0), 0.0)
    zero_cap_demand = np.any(~positive & (used > 0.0), axis=1)
    overloaded = zero_cap_demand | np.any(positive & (ratios > 1.0), axis=1)
    sta = np.any(positive & (ratios >= STA_CUTOFF), axis=1)
    has_dim = np.any(positive, axis=1)
    ta = has_dim & np.all(~positive | ((ratios >= TIGHT_LOWER) & (ratios < STA_CUTOFF)), axis=1)
    pa = np.all(~positive | (ratios < TIGHT_LOWER), axis=1)
    idle = np.asarray(task_counts) == 0

    out = np.full(len(totals), AllocationClass.DA, dtype=object)
    out[pa] = AllocationClass.PA
    out[idle] = AllocationClass.IDLE
    out[ta] = AllocationClass.TA
    out[sta] = AllocationClass.STA
    out[overloaded] = AllocationClass.OVERLOADED
    return out


def rus_fits(node_total: Sequence[float], production_required_sum: Sequence[float]) -> bool:
    """Production tasks must fit at their full declared requirements, so a
    usage spike never forces an immediate migration of production work."""
    return all(req <= total for total, req in zip(node_total, production_required_sum))


def asr_metrics(classes: Sequence[AllocationClass]) -> dict:
    """Counts per class plus ratios normalized over the four balance classes
    (idle and overloaded nodes are tracked but excluded from the ratios)."""
    counts = {cls: 0 for cls in AllocationClass}
    for cls in classes:
        counts[cls] += 1
    balance_total = sum(counts[c] for c in
                        (AllocationClass.STA, AllocationClass.TA,
                         AllocationClass.PA, AllocationClass.DA))
    ratios = {}
    for cls in (AllocationClass.STA, AllocationClass.TA, AllocationClass.PA, AllocationClass.DA):
        ratios[cls.value] = counts[cls] / balance_total if balance_total else 0.0
    return {
        "counts": {cls.value: counts[cls] for cls in AllocationClass},
        "ratios": ratios,
        "degenerate": balance_total == 0,
    }
