"""Executable agent-auditability metrics, policies and evidence logs."""

from .auditability import (
    AuditabilityCard,
    AuditabilityReport,
    ThresholdVector,
    Verdict,
    assemble_verdict,
    generate_card,
    is_auditable,
)
from .evidence import EvidenceLog, VerificationReport, integrity_level, seal, tamper, verify
from .metrics import GapBurden, GBUnit, MetricsBundle, ac, acd, acr, gb, lpc, measure, rf
from .model import (
    ActionType,
    AuditRecord,
    Component,
    ComponentKind,
    Execution,
    FieldRequirements,
    IntegrityDescriptor,
    RecordEntry,
    Step,
    recovered_fields,
    validate_execution,
)
from .policy import PolicyKind, PolicyOutcome, PolicyVerdict, Selector, StructuralPolicy, adl, evaluate, evidence_steps, spdr

__version__ = "0.1.0"
