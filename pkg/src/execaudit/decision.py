"""Audit outcomes and the reason codes carried by REJECT."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class Reason(str, Enum):
    UNBALANCED = "unbalanced"
    CYCLE = "cycle"
    LOG_UNKNOWN_RID = "log-unknown-rid"
    LOG_OPNUM_RANGE = "log-opnum-range"
    LOG_DUPLICATE_OP = "log-duplicate-op"
    LOG_MISSING_OP = "log-missing-op"
    LOG_OPNUM_ORDER = "log-opnum-order"
    BAD_OP_COUNT = "bad-op-count"
    MALFORMED_REPORT = "malformed-report"
    OP_NOT_IN_MAP = "op-not-in-map"
    OP_MISMATCH = "op-mismatch"
    NO_PRIOR_WRITE = "no-prior-write"
    DIVERGENCE = "divergence"
    OP_COUNT_SHORTFALL = "op-count-shortfall"
    NONDET_MISMATCH = "nondet-mismatch"
    NONDET_NONMONOTONIC = "nondet-nonmonotonic"
    TRAP = "trap"
    UNEXPECTED_EVENT = "unexpected-event"
    OUTPUT_MISMATCH = "output-mismatch"

    def __str__(self):
        return self.value


# checks that run before any re-execution
GRAPH_REASONS = frozenset({
    Reason.CYCLE, Reason.LOG_UNKNOWN_RID, Reason.LOG_OPNUM_RANGE,
    Reason.LOG_DUPLICATE_OP, Reason.LOG_MISSING_OP, Reason.LOG_OPNUM_ORDER,
    Reason.BAD_OP_COUNT,
})


class Reject(Exception):
    def __init__(self, reason: Reason, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else str(reason))
        self.reason = reason
        self.detail = detail


@dataclass
class AuditDecision:
    accepted: bool
    reason: Optional[Reason] = None
    detail: str = ""
    stats: list = field(default_factory=list, compare=False)

    @classmethod
    def accept(cls, stats=None) -> "AuditDecision":
        return cls(True, stats=stats or [])

    @classmethod
    def reject(cls, reason: Reason, detail: str = "", stats=None) -> "AuditDecision":
        return cls(False, reason, detail, stats=stats or [])

    @classmethod
    def from_reject(cls, r: Reject, stats=None) -> "AuditDecision":
        return cls.reject(r.reason, r.detail, stats)

    @property
    def verdict(self) -> str:
        return "ACCEPT" if self.accepted else "REJECT"

    def __str__(self):
        if self.accepted:
            return "ACCEPT"
        return f"REJECT({self.reason})" + (f": {self.detail}" if self.detail else "")
