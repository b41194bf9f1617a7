"""
Tamper-evident evidence logs
============================

Level 2 chains SHA-256 digests over each payload. Level 3 also signs every
entry with Ed25519. A single flipped byte is caught at the entry it hits.
"""

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from audita.evidence import ByteEdit, EvidenceLog, integrity_level, seal, tamper, verify
from audita.lab import base_scenario

key = Ed25519PrivateKey.generate()
log = base_scenario(level=3, signing_key=key).log
print(verify(log).status, "level", integrity_level(log), len(log.entries), "entries")

# %%
# Flip one byte of entry 4's payload.

bad = tamper(log, 4, ByteEdit("payload", 0, log.entries[3].payload[0] ^ 1))
rep = verify(bad)
print(rep.status, "first bad seq", rep.first_bad_seq, rep.reason)

# %%
# Sealing after the fact chains whatever is there. The check then passes,
# but the report lists the entries that were written before the seal.

plain = EvidenceLog.create(1)
plain.extend(log.record().entries)
late = seal(plain, 2)
rep = verify(late)
print(rep.status, "unattested", rep.unattested)
