"""Auditing an untrusted concurrent server from a trusted trace and its reports."""

from .decision import AuditDecision, Reason, Reject
from .executor import Arrival, ExecutorConfig, Workload, run, serve
from .graph import create_time_precedence_graph, process_op_reports
from .lang import parse_program
from .oracle import exhaustive_validity, ooo_audit, ooo_exec
from .replay import AuditConfig, ssco_audit
from .tamper import MUTATIONS, tamper
from .trace import Reports, Trace, format_reports, format_trace, parse_reports, parse_trace

__all__ = [
    "AuditConfig", "AuditDecision", "Arrival", "ExecutorConfig", "MUTATIONS", "Reason",
    "Reject", "Reports", "Trace", "Workload", "create_time_precedence_graph",
    "exhaustive_validity", "format_reports", "format_trace", "ooo_audit", "ooo_exec",
    "parse_program", "parse_reports", "parse_trace", "process_op_reports", "run",
    "serve", "ssco_audit", "tamper",
]
