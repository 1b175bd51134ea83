"""Hashing, canonical byte encoding, and the pluggable signing/VRF schemes.

SHA3-256 is the single hash primitive. The deterministic test schemes below
stand in for curve-based signatures and verifiable random functions: a keyed
hash plays both roles, with public keys derived as ``pk = H(sk)`` and
verification backed by a key registry held by the harness. Swapping in a real
scheme only requires implementing the same four functions against the same
byte contracts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import VerificationFailure

HASH_BYTES = 32
TWO_256 = 1 << 256


def sha3(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def encode_field(data: bytes) -> bytes:
    """Length-prefix a field: 4-byte big-endian length, then the raw bytes."""
    return len(data).to_bytes(4, "big") + data


def encode_fields(*fields: bytes) -> bytes:
    """Canonical encoding: fixed-order concatenation of length-prefixed fields."""
    return b"".join(encode_field(f) for f in fields)


def encode_uint(value: int, width: int = 8) -> bytes:
    return int(value).to_bytes(width, "big")


# ---------------------------------------------------------------------------
# key registry + keyed-hash signatures


class KeyRegistry:
    """Maps public keys to secret keys for the test schemes.

    A real deployment never has this object; it models the fact that each node
    signs with its own secret key while the simulation drives all nodes from
    one process.
    """

    def __init__(self):
        self._sk_by_pk: dict[bytes, bytes] = {}

    def generate(self, seed_material: bytes) -> tuple[bytes, bytes]:
        """Derive an (sk, pk) pair deterministically from seed material."""
        sk = sha3(b"sk" + seed_material)
        pk = sha3(sk)
        self._sk_by_pk[pk] = sk
        return sk, pk

    def register(self, sk: bytes) -> bytes:
        pk = sha3(sk)
        self._sk_by_pk[pk] = sk
        return pk

    def secret_for(self, pk: bytes) -> bytes:
        try:
            return self._sk_by_pk[pk]
        except KeyError:
            raise VerificationFailure(f"unknown public key {pk.hex()[:16]}") from None

    def __contains__(self, pk: bytes) -> bool:
        return pk in self._sk_by_pk


def sign(sk: bytes, message: bytes) -> bytes:
    return sha3(b"sig" + encode_fields(sk, message))


def verify(registry: KeyRegistry, pk: bytes, message: bytes, signature: bytes) -> bool:
    if pk not in registry:
        return False
    return sign(registry.secret_for(pk), message) == signature


# ---------------------------------------------------------------------------
# verifiable random function (deterministic test scheme)


@dataclass(frozen=True)
class VrfOutput:
    """A 256-bit pseudorandom value plus the proof that binds it to (pk, seed, type)."""

    hash: bytes
    proof: bytes

    @property
    def uniform(self) -> float:
        """The hash mapped into [0, 1)."""
        return int.from_bytes(self.hash, "big") / TWO_256


def vrf_eval(sk: bytes, seed: bytes, ctype: str) -> VrfOutput:
    """Deterministic pseudorandom draw for one (secret key, epoch seed, committee type)."""
    material = encode_fields(sk, seed, ctype.encode())
    return VrfOutput(hash=sha3(material), proof=sha3(b"prf" + material))


def vrf_verify(
    registry: KeyRegistry, pk: bytes, seed: bytes, ctype: str, output: VrfOutput
) -> bool:
    """Check that (hash, proof) was honestly produced for pk's secret key."""
    if pk not in registry:
        return False
    expected = vrf_eval(registry.secret_for(pk), seed, ctype)
    return expected.hash == output.hash and expected.proof == output.proof
