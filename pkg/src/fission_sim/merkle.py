"""Binary Merkle tree root over ordered 32-byte leaves.

Conventions: the empty list hashes to SHA3-256 of the empty string, a layer
with an odd node count duplicates its last node, and a single leaf is hashed
with itself (so every root is the output of at least one combine step).
"""

from __future__ import annotations

from .crypto import sha3

EMPTY_ROOT = sha3(b"")


def merkle_root(leaves: list[bytes]) -> bytes:
    if not leaves:
        return EMPTY_ROOT
    level = list(leaves)
    if len(level) == 1:
        return sha3(level[0] + level[0])
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [sha3(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]
