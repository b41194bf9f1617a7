"""Tamper-evident evidence logs.

Integrity levels:

0. mutable store; entries may be overwritten or deleted
1. append-only; sequence numbers are contiguous and the API refuses edits
2. hash-chained; ``digest = SHA-256(prev_digest || payload)`` with 32 zero
   bytes as the genesis ``prev_digest``
3. signed; each digest additionally carries an Ed25519 signature

Payloads are the canonical JSON bytes of a :class:`~audita.model.RecordEntry`.

File format: a header line ``{"format": "audita-evidence/1", "integrity": ...}``
followed by one canonical JSON line per sealed entry with hex-encoded byte
fields (``null`` where a level does not use the field).
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .canonical import canonical_bytes, canonical_dumps, canonical_loads
from .model import AuditRecord, IntegrityDescriptor, RecordEntry

__all__ = [
    "AppendOnlyError",
    "ByteEdit",
    "ClosedLogError",
    "EvidenceLog",
    "GENESIS",
    "IntegrityDescriptor",
    "MalformedLogError",
    "SealedEntry",
    "VerificationReport",
    "dump_log",
    "generate_key_file",
    "integrity_level",
    "load_log",
    "load_signing_key",
    "seal",
    "swap_entries",
    "tamper",
    "verify",
]

FORMAT = "audita-evidence/1"
GENESIS = bytes(32)


class ClosedLogError(RuntimeError):
    pass


class AppendOnlyError(RuntimeError):
    pass


class MalformedLogError(ValueError):
    pass


@dataclass(frozen=True)
class SealedEntry:
    seq: int
    payload: bytes
    prev_digest: bytes | None = None
    digest: bytes | None = None
    signature: bytes | None = None

    def to_dict(self) -> dict[str, Any]:
        def hx(b: bytes | None) -> str | None:
            return None if b is None else b.hex()
        return {
            "seq": self.seq,
            "payload": self.payload.hex(),
            "prev_digest": hx(self.prev_digest),
            "digest": hx(self.digest),
            "signature": hx(self.signature),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SealedEntry":
        def bx(s: str | None) -> bytes | None:
            return None if s is None else bytes.fromhex(s)
        return cls(
            seq=int(d["seq"]),
            payload=bytes.fromhex(d["payload"]),
            prev_digest=bx(d.get("prev_digest")),
            digest=bx(d.get("digest")),
            signature=bx(d.get("signature")),
        )

    def record_entry(self) -> RecordEntry:
        return RecordEntry.from_dict(canonical_loads(self.payload))


def chain_digest(prev_digest: bytes, payload: bytes) -> bytes:
    return hashlib.sha256(prev_digest + payload).digest()


def _public_bytes(key: Ed25519PrivateKey) -> bytes:
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def descriptor_for(level: int, signing_key: Ed25519PrivateKey | None = None,
                   attested_from: int = 1) -> IntegrityDescriptor:
    if level == 3 and signing_key is None:
        raise ValueError("level 3 needs a signing key")
    return IntegrityDescriptor(
        level=level,
        hash_algorithm="SHA-256" if level >= 2 else None,
        signature_scheme="Ed25519" if level == 3 else None,
        public_key=_public_bytes(signing_key) if level == 3 else None,
        attested_from=attested_from,
    )


class EvidenceLog:
    """Single-writer evidence log at a fixed integrity level.

    Appends are serialized by an internal lock; readers work on snapshots.
    """

    def __init__(self, descriptor: IntegrityDescriptor, entries: Iterable[SealedEntry] = (),
                 signing_key: Ed25519PrivateKey | None = None):
        self.descriptor = descriptor
        self._entries: list[SealedEntry] = list(entries)
        self._key = signing_key
        self._lock = threading.Lock()
        self.closed = False
        self._last_entry_id: int | None = None
        if self._entries:
            try:
                self._last_entry_id = canonical_loads(self._entries[-1].payload).get("entry_id")
            except (ValueError, AttributeError):
                pass
        if descriptor.level == 3 and signing_key is not None:
            if _public_bytes(signing_key) != descriptor.public_key:
                raise ValueError("signing key does not match the descriptor's public key")

    @classmethod
    def create(cls, level: int, signing_key: Ed25519PrivateKey | None = None) -> "EvidenceLog":
        return cls(descriptor_for(level, signing_key), signing_key=signing_key)

    @property
    def level(self) -> int:
        return self.descriptor.level

    @property
    def entries(self) -> tuple[SealedEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def close(self) -> None:
        self.closed = True

    def append(self, entry: RecordEntry) -> SealedEntry:
        payload = canonical_bytes(entry.to_dict())
        with self._lock:
            if self.closed:
                raise ClosedLogError("log is closed for writing")
            last_id = self._last_entry_id
            if isinstance(last_id, int) and entry.entry_id <= last_id:
                raise AppendOnlyError(f"entry_id {entry.entry_id} does not follow {last_id}")
            seq = self._entries[-1].seq + 1 if self._entries else 1
            sealed = SealedEntry(seq=seq, payload=payload)
            if self.level >= 2:
                prev = self._entries[-1].digest if self._entries else GENESIS
                digest = chain_digest(prev, payload)
                signature = None
                if self.level == 3:
                    if self._key is None:
                        raise ValueError("level-3 log opened without a signing key is read-only")
                    signature = self._key.sign(digest)
                sealed = replace(sealed, prev_digest=prev, digest=digest, signature=signature)
            self._entries.append(sealed)
            self._last_entry_id = entry.entry_id
            return sealed

    def extend(self, entries: Iterable[RecordEntry]) -> None:
        for e in entries:
            self.append(e)

    def _mutable_index(self, seq: int) -> int:
        if self.level >= 1:
            raise AppendOnlyError(f"level-{self.level} log refuses edits")
        for i, e in enumerate(self._entries):
            if e.seq == seq:
                return i
        raise IndexError(f"no entry with seq {seq}")

    def overwrite(self, seq: int, entry: RecordEntry) -> None:
        """Replace an entry in place; only a level-0 store allows this."""
        with self._lock:
            i = self._mutable_index(seq)
            self._entries[i] = SealedEntry(seq=seq, payload=canonical_bytes(entry.to_dict()))

    def delete(self, seq: int) -> None:
        with self._lock:
            del self._entries[self._mutable_index(seq)]

    def record(self) -> AuditRecord:
        """Decode the payloads back into an :class:`AuditRecord`."""
        return AuditRecord(tuple(e.record_entry() for e in self.entries), self.descriptor)

    def copy(self, entries: Iterable[SealedEntry] | None = None) -> "EvidenceLog":
        clone = EvidenceLog(self.descriptor, self.entries if entries is None else entries, self._key)
        clone.closed = self.closed
        return clone


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of :func:`verify`.

    ``ok`` is ``True`` for an intact chain, ``False`` on tampering and
    ``None`` when the log's level offers no cryptographic check.
    """

    ok: bool | None
    first_bad_seq: int | None
    checked_entries: int
    vc: int
    level: int
    unattested: tuple[int, ...] = ()
    reason: str = ""

    @property
    def status(self) -> str:
        return {True: "ok", False: "tampered", None: "unverifiable"}[self.ok]

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "first_bad_seq": self.first_bad_seq,
            "checked_entries": self.checked_entries,
            "vc_micros": self.vc,
            "level": self.level,
            "unattested": list(self.unattested),
            "reason": self.reason,
        }


def _check_chain(entries: tuple[SealedEntry, ...], descriptor: IntegrityDescriptor) -> tuple[int | None, int, str]:
    pk = None
    if descriptor.level == 3:
        pk = Ed25519PublicKey.from_public_bytes(descriptor.public_key)
    prev = GENESIS
    for i, e in enumerate(entries, start=1):
        if e.seq != i:
            return i, i - 1, f"seq {e.seq} at position {i}"
        if e.prev_digest != prev:
            return i, i - 1, "prev_digest does not match predecessor"
        if e.digest != chain_digest(prev, e.payload):
            return i, i - 1, "digest does not match payload"
        if pk is not None:
            if e.signature is None:
                return i, i - 1, "signature missing"
            try:
                pk.verify(e.signature, e.digest)
            except InvalidSignature:
                return i, i - 1, "signature invalid"
        prev = e.digest
    return None, len(entries), ""


def verify(log: EvidenceLog) -> VerificationReport:
    """Recompute the chain (and signatures at level 3).

    Stops at the first failing entry, whose seq is reported. Levels 0-1
    report ``ok=None``, except that a sequence gap or reordering in a level-1
    log is reported as tampering.
    """
    entries = log.entries
    desc = log.descriptor
    start = time.perf_counter_ns()
    unattested = tuple(e.seq for e in entries if e.seq < desc.attested_from)
    if desc.level <= 1:
        bad = None
        if desc.level == 1:
            for i, e in enumerate(entries, start=1):
                if e.seq != i:
                    bad = i
                    break
        vc = (time.perf_counter_ns() - start) // 1000
        if bad is not None:
            return VerificationReport(False, bad, bad - 1, vc, desc.level, unattested, "sequence gap or reorder")
        return VerificationReport(None, None, 0, vc, desc.level, unattested, "no cryptographic mechanism")
    bad, checked, reason = _check_chain(entries, desc)
    vc = (time.perf_counter_ns() - start) // 1000
    return VerificationReport(bad is None, bad, checked, vc, desc.level, unattested, reason)


def integrity_level(log: EvidenceLog) -> int:
    """Highest level whose structural obligations the log actually meets."""
    entries = log.entries
    desc = log.descriptor
    met = 0
    if all(e.seq == i for i, e in enumerate(entries, start=1)):
        met = 1
        if desc.hash_algorithm == "SHA-256" and all(
            e.prev_digest is not None and len(e.prev_digest) == 32
            and e.digest is not None and len(e.digest) == 32 for e in entries
        ):
            met = 2
            if desc.signature_scheme == "Ed25519" and desc.public_key is not None and all(
                e.signature is not None and len(e.signature) == 64 for e in entries
            ):
                met = 3
    return min(desc.level, met)


def seal(log: EvidenceLog, level: int, signing_key: Ed25519PrivateKey | None = None) -> EvidenceLog:
    """Raise a log to ``level`` after the fact.

    Existing payloads are chained as they stand, so any edit made before
    sealing goes undetected; those entries are reported as unattested.
    """
    if level < 2:
        raise ValueError("post-hoc sealing targets level 2 or 3")
    entries = log.entries
    out = EvidenceLog(descriptor_for(level, signing_key, attested_from=len(entries) + 1), signing_key=signing_key)
    prev = GENESIS
    for i, e in enumerate(entries, start=1):
        digest = chain_digest(prev, e.payload)
        sig = signing_key.sign(digest) if level == 3 else None
        out._entries.append(SealedEntry(i, e.payload, prev, digest, sig))
        prev = digest
    return out


@dataclass(frozen=True)
class ByteEdit:
    """Overwrite one byte of a sealed field.

    ``field`` is ``payload``, ``prev_digest``, ``digest``, ``signature`` or
    ``seq`` (edited as an 8-byte big-endian integer).
    """

    field: str
    offset: int
    value: int


def _edit(data: bytes, offset: int, value: int) -> bytes:
    if not 0 <= offset < len(data):
        raise ValueError(f"offset {offset} outside field of {len(data)} bytes")
    return data[:offset] + bytes([value & 0xFF]) + data[offset + 1:]


def tamper(log: EvidenceLog, seq: int, mutation: ByteEdit) -> EvidenceLog:
    """Return a copy of ``log`` with one byte of entry ``seq`` replaced.

    Bypasses every append-path check. Test instrument only.
    """
    entries = list(log.entries)
    idx = next((i for i, e in enumerate(entries) if e.seq == seq), None)
    if idx is None:
        raise IndexError(f"no entry with seq {seq}")
    e = entries[idx]
    if mutation.field == "seq":
        raw = _edit(e.seq.to_bytes(8, "big"), mutation.offset, mutation.value)
        entries[idx] = replace(e, seq=int.from_bytes(raw, "big"))
    elif mutation.field in ("payload", "prev_digest", "digest", "signature"):
        current = getattr(e, mutation.field)
        if current is None:
            raise ValueError(f"entry {seq} has no {mutation.field}")
        entries[idx] = replace(e, **{mutation.field: _edit(current, mutation.offset, mutation.value)})
    else:
        raise ValueError(f"unknown field {mutation.field!r}")
    return log.copy(entries)


def swap_entries(log: EvidenceLog, seq_a: int, seq_b: int) -> EvidenceLog:
    """Return a copy with two entries' positions exchanged (reorder attack)."""
    entries = list(log.entries)
    ia = next(i for i, e in enumerate(entries) if e.seq == seq_a)
    ib = next(i for i, e in enumerate(entries) if e.seq == seq_b)
    entries[ia], entries[ib] = entries[ib], entries[ia]
    return log.copy(entries)


def dump_log(log: EvidenceLog, path: str | os.PathLike) -> None:
    lines = [canonical_dumps({"format": FORMAT, "integrity": log.descriptor.to_dict()})]
    lines += [canonical_dumps(e.to_dict()) for e in log.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def is_log_header(doc: Any) -> bool:
    return isinstance(doc, dict) and doc.get("format") == FORMAT


def parse_log_lines(lines: Iterable[str], signing_key: Ed25519PrivateKey | None = None) -> EvidenceLog:
    rows = [ln for ln in lines if ln.strip()]
    if not rows:
        raise MalformedLogError("empty evidence log")
    try:
        header = canonical_loads(rows[0])
        if not is_log_header(header):
            raise MalformedLogError(f"missing {FORMAT} header")
        desc = IntegrityDescriptor.from_dict(header["integrity"])
        entries = [SealedEntry.from_dict(canonical_loads(r)) for r in rows[1:]]
    except MalformedLogError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedLogError(str(exc)) from exc
    return EvidenceLog(desc, entries, signing_key=signing_key)


def load_log(path: str | os.PathLike, signing_key: Ed25519PrivateKey | None = None) -> EvidenceLog:
    return parse_log_lines(Path(path).read_text(encoding="utf-8").splitlines(), signing_key)


def load_signing_key(path: str | os.PathLike) -> Ed25519PrivateKey:
    """Read a hex-encoded 32-byte Ed25519 seed."""
    seed = bytes.fromhex(Path(path).read_text(encoding="ascii").strip())
    if len(seed) != 32:
        raise ValueError(f"key file {path} holds {len(seed)} bytes, expected 32")
    return Ed25519PrivateKey.from_private_bytes(seed)


def generate_key_file(path: str | os.PathLike) -> Ed25519PrivateKey:
    seed = os.urandom(32)
    Path(path).write_text(seed.hex() + "\n", encoding="ascii")
    return Ed25519PrivateKey.from_private_bytes(seed)
