"""Reading and writing the on-disk formats.

========================  ==========================================================
file                      layout
========================  ==========================================================
trace                     line 1: manifest (components, phase_of, responsibility_of,
                          interaction_graph); every further line: one Step
record                    one RecordEntry per line, or an evidence log (see
                          :mod:`audita.evidence`) whose payloads are RecordEntries
policies                  ``{"policies": [StructuralPolicy, ...]}``
requirements              ``{action_type: [field, ...], ...}``
thresholds                ThresholdVector; ratios as decimal strings such as ``"0.9"``
descriptor                ``{"q1": text, ..., "q6": text}``
generation spec           GenerationSpec; probabilities as decimal strings
degradation op            ``{"kind": ..., "params": {...}}``
========================  ==========================================================

Every document is canonical JSON (sorted keys, no whitespace, no floats).
Loading problems raise :class:`InputError` naming the offending path.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Callable, TypeVar

from .auditability import ThresholdVector
from .canonical import canonical_dumps, canonical_loads
from .evidence import EvidenceLog, is_log_header, parse_log_lines
from .lab import DegradationOp, GenerationSpec
from .model import AuditRecord, Execution, FieldRequirements, RecordEntry, Step
from .policy import StructuralPolicy

PathLike = str | os.PathLike
T = TypeVar("T")


class InputError(ValueError):
    pass


def _read_lines(path: PathLike) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return [ln for ln in text.splitlines() if ln.strip()]


def _parse(path: PathLike, fn: Callable[[], T]) -> T:
    try:
        return fn()
    except InputError:
        raise
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _doc(path: PathLike) -> Any:
    lines = _read_lines(path)
    return _parse(path, lambda: canonical_loads("\n".join(lines)))


def _write_lines(path: PathLike, docs: list[Any]) -> None:
    Path(path).write_text("".join(canonical_dumps(d) + "\n" for d in docs), encoding="utf-8")


def dump_trace(execution: Execution, path: PathLike) -> None:
    _write_lines(path, [execution.manifest()] + [s.to_dict() for s in execution.steps])


def load_trace(path: PathLike) -> Execution:
    lines = _read_lines(path)
    if not lines:
        raise InputError(f"{path}: empty trace file")

    def build() -> Execution:
        manifest = canonical_loads(lines[0])
        steps = [Step.from_dict(canonical_loads(ln)) for ln in lines[1:]]
        return Execution.from_manifest(manifest, steps)
    return _parse(path, build)


def dump_record(record: AuditRecord, path: PathLike) -> None:
    _write_lines(path, [e.to_dict() for e in record.entries])


def load_record(path: PathLike, signing_key: Any = None) -> tuple[AuditRecord, EvidenceLog | None]:
    """Load a plain record file or an evidence log.

    Returns the record and, for evidence logs, the log itself.
    """
    lines = _read_lines(path)

    def build() -> tuple[AuditRecord, EvidenceLog | None]:
        if lines and is_log_header(canonical_loads(lines[0])):
            log = parse_log_lines(lines, signing_key)
            return log.record(), log
        return AuditRecord(tuple(RecordEntry.from_dict(canonical_loads(ln)) for ln in lines)), None
    return _parse(path, build)


def load_log(path: PathLike, signing_key: Any = None) -> EvidenceLog:
    lines = _read_lines(path)
    if not lines or not _parse(path, lambda: is_log_header(canonical_loads(lines[0]))):
        raise InputError(f"{path}: not an evidence log")
    return _parse(path, lambda: parse_log_lines(lines, signing_key))


def dump_policies(policies: list[StructuralPolicy], path: PathLike) -> None:
    _write_lines(path, [{"policies": [p.to_dict() for p in policies]}])


def load_policies(path: PathLike) -> list[StructuralPolicy]:
    doc = _doc(path)

    def build() -> list[StructuralPolicy]:
        policies = [StructuralPolicy.from_dict(p) for p in doc["policies"]]
        ids = [p.policy_id for p in policies]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate policy ids")
        return policies
    return _parse(path, build)


def dump_requirements(reqs: FieldRequirements, path: PathLike) -> None:
    _write_lines(path, [reqs.to_dict()])


def load_requirements(path: PathLike) -> FieldRequirements:
    doc = _doc(path)
    return _parse(path, lambda: FieldRequirements.from_dict(doc))


def dump_thresholds(thresholds: ThresholdVector, path: PathLike) -> None:
    _write_lines(path, [thresholds.to_dict()])


def load_thresholds(path: PathLike) -> ThresholdVector:
    doc = _doc(path)
    return _parse(path, lambda: ThresholdVector.from_dict(doc))


def load_descriptor(path: PathLike) -> dict[str, str]:
    doc = _doc(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: descriptor must be an object")
    return doc


def load_generation_spec(path: PathLike) -> GenerationSpec:
    doc = _doc(path)
    return _parse(path, lambda: GenerationSpec.from_dict(doc))


def load_degradation_op(path: PathLike) -> DegradationOp:
    doc = _doc(path)
    return _parse(path, lambda: DegradationOp.from_dict(doc))
