"""Checkers for the list: sequential oracle, linearizability, structure probes and reclamation audits."""

from .audit import AuditReport, ShadowAuditor, audit_shadow_log
from .history import HistoryEvent, MalformedHistory, Recorder
from .linearize import Verdict, check_linearizable
from .oracle import OracleMap
from .probe import probe_structural_invariants, snapshot

__all__ = [
    "AuditReport", "ShadowAuditor", "audit_shadow_log", "HistoryEvent", "MalformedHistory",
    "Recorder", "Verdict", "check_linearizable", "OracleMap", "probe_structural_invariants",
    "snapshot",
]
