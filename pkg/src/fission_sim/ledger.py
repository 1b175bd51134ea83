"""Accounts, two-phase transfers, and the sharded ledger state machine.

Every transfer splits into a debit half and a credit half that are confirmed
in successive blocks. The debit (eager) withdraws from the sender and records
a log entry; the credit (lazy) pays the receiver by consuming that entry.
Accounts live in the shard ``pk mod n_shard`` with the key read as a
big-endian unsigned integer.

Canonical transaction byte layout (all fields length-prefixed, fixed order):
``tx_type, sender, receiver, value(8B BE), nonce(8B BE), data_hash`` is the
signed portion; the transaction id is SHA3-256 over that portion plus the
signature field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto
from .crypto import KeyRegistry, encode_fields, encode_uint, sha3
from .errors import (
    BadNonce,
    DoubleCredit,
    InsufficientBalance,
    InvalidSignature,
    MissingEagerLog,
    NonPositiveValue,
    UnknownAccount,
)

TX_TYPE_TRANSFER = "transfer"
ZERO_HASH = bytes(32)

EAGER = "eager"
LAZY = "lazy"


def shard_of(pk: bytes, n_shard: int) -> int:
    """Home shard of a public key: big-endian integer value mod shard count."""
    if n_shard < 1:
        raise ValueError("n_shard must be >= 1")
    return int.from_bytes(pk, "big") % n_shard


@dataclass
class Account:
    pk: bytes
    balance: int
    nonce: int = 0


@dataclass(frozen=True)
class Transaction:
    tx_type: str
    sender: bytes
    receiver: bytes
    value: int
    nonce: int
    data_hash: bytes
    signature: bytes

    def signing_bytes(self) -> bytes:
        return encode_fields(
            self.tx_type.encode(),
            self.sender,
            self.receiver,
            encode_uint(self.value),
            encode_uint(self.nonce),
            self.data_hash,
        )

    @property
    def id(self) -> bytes:
        return sha3(encode_fields(self.signing_bytes(), self.signature))


def make_transfer(
    registry: KeyRegistry,
    sk: bytes,
    receiver: bytes,
    value: int,
    nonce: int,
    data_hash: bytes = ZERO_HASH,
) -> Transaction:
    """Build and sign a transfer from the holder of ``sk``."""
    sender = sha3(sk)
    unsigned = Transaction(TX_TYPE_TRANSFER, sender, receiver, value, nonce, data_hash, b"")
    sig = crypto.sign(sk, unsigned.signing_bytes())
    return Transaction(TX_TYPE_TRANSFER, sender, receiver, value, nonce, data_hash, sig)


@dataclass(frozen=True)
class SubTransaction:
    kind: str  # EAGER or LAZY
    parent_id: bytes
    sender: bytes
    receiver: bytes
    value: int
    nonce: int

    def encode(self) -> bytes:
        return encode_fields(
            self.kind.encode(),
            self.parent_id,
            self.sender,
            self.receiver,
            encode_uint(self.value),
            encode_uint(self.nonce),
        )

    @property
    def id(self) -> bytes:
        return sha3(self.encode())


def split_transaction(
    tx: Transaction, registry: KeyRegistry
) -> tuple[SubTransaction, SubTransaction]:
    """Split an atomic transfer into its (debit, credit) halves.

    The debit withdraws ``value`` from the sender; the credit deposits the
    same amount to the receiver once the debit is confirmed.
    """
    if tx.value <= 0:
        raise NonPositiveValue(f"transfer value must be positive, got {tx.value}")
    if not crypto.verify(registry, tx.sender, tx.signing_bytes(), tx.signature):
        raise InvalidSignature("transaction signature does not verify against sender key")
    parent = tx.id
    eager = SubTransaction(EAGER, parent, tx.sender, tx.receiver, tx.value, tx.nonce)
    lazy = SubTransaction(LAZY, parent, tx.sender, tx.receiver, tx.value, tx.nonce)
    return eager, lazy


@dataclass(frozen=True)
class TxLogEntry:
    """Record of a confirmed debit awaiting its credit half."""

    parent_id: bytes
    sender: bytes
    receiver: bytes
    value: int
    nonce: int

    def encode(self) -> bytes:
        return encode_fields(
            self.parent_id,
            self.sender,
            self.receiver,
            encode_uint(self.value),
            encode_uint(self.nonce),
        )


@dataclass
class ShardState:
    accounts: dict[bytes, Account] = field(default_factory=dict)
    tx_log: list[TxLogEntry] = field(default_factory=list)


class LedgerState:
    """Per-shard account tables plus the pool of debits awaiting credits.

    Single-writer: one block pipeline mutates a state at a time; clones are
    cheap enough for candidate-then-commit application.
    """

    def __init__(self, n_shard: int):
        if n_shard < 1:
            raise ValueError("n_shard must be >= 1")
        self.n_shard = n_shard
        self.shards = [ShardState() for _ in range(n_shard)]
        # parent_id -> log entry, for debits whose credit has not applied yet
        self.pending: dict[bytes, TxLogEntry] = {}
        self.credited: set[bytes] = set()

    def clone(self) -> "LedgerState":
        other = LedgerState(self.n_shard)
        for dst, src in zip(other.shards, self.shards):
            dst.accounts = {
                pk: Account(pk, acct.balance, acct.nonce) for pk, acct in src.accounts.items()
            }
            dst.tx_log = list(src.tx_log)
        other.pending = dict(self.pending)
        other.credited = set(self.credited)
        return other

    def create_account(self, pk: bytes, balance: int) -> Account:
        acct = Account(pk, balance)
        self.shards[shard_of(pk, self.n_shard)].accounts[pk] = acct
        return acct

    def get_account(self, pk: bytes) -> Account | None:
        return self.shards[shard_of(pk, self.n_shard)].accounts.get(pk)

    def total_balance(self) -> int:
        return sum(a.balance for s in self.shards for a in s.accounts.values())

    def pending_value(self) -> int:
        return sum(entry.value for entry in self.pending.values())

    def account_count(self) -> int:
        return sum(len(s.accounts) for s in self.shards)

    def iter_accounts(self):
        for shard in self.shards:
            yield from shard.accounts.values()


def apply_eager(state: LedgerState, sub: SubTransaction) -> None:
    """Apply a debit: withdraw from the sender and log the pending credit.

    Raises without touching state if the sender is unknown, short on balance,
    or the nonce is not exactly one past the account's.
    """
    assert sub.kind == EAGER
    acct = state.get_account(sub.sender)
    if acct is None:
        raise UnknownAccount(f"no account for sender {sub.sender.hex()[:16]}")
    if sub.nonce != acct.nonce + 1:
        raise BadNonce(f"expected nonce {acct.nonce + 1}, got {sub.nonce}")
    if acct.balance < sub.value:
        raise InsufficientBalance(f"balance {acct.balance} < value {sub.value}")
    acct.balance -= sub.value
    acct.nonce += 1
    entry = TxLogEntry(sub.parent_id, sub.sender, sub.receiver, sub.value, sub.nonce)
    state.shards[shard_of(sub.sender, state.n_shard)].tx_log.append(entry)
    state.pending[sub.parent_id] = entry


def apply_lazy(state: LedgerState, sub: SubTransaction) -> None:
    """Apply a credit: pay the receiver and consume the matching debit log.

    Each log entry is consumable exactly once; an unknown receiver account is
    created with zero starting balance.
    """
    assert sub.kind == LAZY
    if sub.parent_id in state.credited:
        raise DoubleCredit(f"credit already applied for {sub.parent_id.hex()[:16]}")
    entry = state.pending.get(sub.parent_id)
    if entry is None:
        raise MissingEagerLog(f"no debit log for {sub.parent_id.hex()[:16]}")
    acct = state.get_account(sub.receiver)
    if acct is None:
        acct = state.create_account(sub.receiver, 0)
    acct.balance += entry.value
    del state.pending[sub.parent_id]
    state.credited.add(sub.parent_id)
