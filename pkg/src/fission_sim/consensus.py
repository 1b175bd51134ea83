"""Epoch pipeline: partition micro rounds, block assembly, weighted voting.

One epoch appends exactly one block. Odd epochs run partition committees over
the mempool's debit halves, merge the surviving micro blocks into a debit
(interim) block, and put it to a committee vote. Even epochs credit every
outstanding debit log in a credit (main) block. Any failed quorum degrades to
the designated empty block instead of stalling, and unconfirmed transactions
stay in the mempool for the next round.

All committee draws are verifiable-random and non-interactive, so a whole run
is a pure function of (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto
from .chain import (
    INTERIM,
    MAIN,
    ZERO_HASH,
    Block,
    BlockHeader,
    Chain,
    MicroBlock,
    Vote,
    compute_root_arrays,
    kind_for_epoch,
)
from .crypto import KeyRegistry, sha3
from .dists import sample_dist
from .errors import InvalidWeight, InvariantViolation
from .ledger import (
    EAGER,
    LAZY,
    LedgerState,
    SubTransaction,
    Transaction,
    apply_eager,
    apply_lazy,
    make_transfer,
    shard_of,
    split_transaction,
)
from .merkle import merkle_root
from .partitioning import PartitionConfig, next_partition_count, partition_of, reshard_trigger, split_shards
from .seeding import child_bytes, split
from .sortition import (
    BLOCK_INTERIM,
    BLOCK_MAIN,
    SecurityParams,
    SortitionOutcome,
    leader_order,
    leader_ticket,
    partition_committee,
    select_committee,
)

WITHHOLD = "withhold"
VOTE_CONFLICTING = "vote-conflicting"
EQUIVOCATE = "equivocate"
STRATEGIES = (WITHHOLD, VOTE_CONFLICTING, EQUIVOCATE)


def next_seed(seed: bytes, block_hash: bytes) -> bytes:
    """Epoch seed evolution: fold the confirmed block hash into the old seed."""
    return sha3(seed + block_hash)


@dataclass
class EpochConfig:
    security: SecurityParams
    delta_micro: float = 2.0
    delta_interim: float = 5.0
    delta_main: float = 3.0
    delta_leader: float = 1.0
    micro_throughput: float = 500.0  # sub-transactions per second per online member

    def __post_init__(self):
        for name in ("delta_micro", "delta_interim", "delta_main", "delta_leader"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def interim_budget(self) -> float:
        return self.delta_leader + self.delta_micro + self.delta_interim

    @property
    def main_budget(self) -> float:
        return self.delta_leader + self.delta_main


class SimClock:
    def __init__(self, now: float = 0.0):
        self.now = now

    def advance(self, dt: float) -> None:
        self.now += dt


@dataclass
class Timeout:
    reason: str


@dataclass
class TallyResult:
    confirmed: bool
    weight: int
    duplicates: list[bytes] = field(default_factory=list)


def tally(votes: list[Vote], quorum: int, expected_weights: dict[bytes, int] | None = None) -> TallyResult:
    """Sum distinct-voter weights against the quorum.

    Duplicate voters are flagged and counted once; a weight that contradicts
    the voter's sortition outcome raises InvalidWeight.
    """
    seen: dict[bytes, int] = {}
    duplicates = []
    for vote in votes:
        if expected_weights is not None:
            expected = expected_weights.get(vote.voter)
            if expected is None or expected != vote.weight:
                raise InvalidWeight(
                    f"vote weight {vote.weight} does not match sortition for {vote.voter.hex()[:12]}"
                )
        if vote.voter in seen:
            duplicates.append(vote.voter)
            continue
        seen[vote.voter] = vote.weight
    weight = sum(seen.values())
    return TallyResult(confirmed=weight >= quorum, weight=weight, duplicates=duplicates)


# ---------------------------------------------------------------------------
# simulated population


@dataclass
class SimNode:
    sk: bytes
    pk: bytes
    stake: int
    online: bool = True
    byzantine: bool = False
    strategy: str = WITHHOLD


class Population:
    """Nodes with stakes, an online subset, and an adversarial slice of it.

    Online stake approximates alpha * K and adversarial stake approximates
    (1 - h) of the online stake, both as closely as the stake granularity
    allows.
    """

    def __init__(self, nodes: list[SimNode], registry: KeyRegistry):
        self.nodes = nodes
        self.registry = registry
        self.by_pk = {n.pk: n for n in nodes}

    @classmethod
    def build(
        cls,
        n_nodes: int,
        stake_dist: str,
        alpha: float,
        h: float,
        master_seed: int,
    ) -> "Population":
        rng = split(master_seed, "population")
        registry = KeyRegistry()
        nodes = []
        for i in range(n_nodes):
            sk, pk = registry.generate(child_bytes(master_seed, "node", i))
            stake = sample_dist(stake_dist, rng, integer=True, minimum=1)
            nodes.append(SimNode(sk=sk, pk=pk, stake=stake))

        total = sum(n.stake for n in nodes)
        order = list(range(n_nodes))
        rng.shuffle(order)
        online_target = alpha * total
        online_stake = 0
        for idx in order:
            if online_stake >= online_target:
                nodes[idx].online = False
            else:
                online_stake += nodes[idx].stake
        online_nodes = [n for n in nodes if n.online]
        rng.shuffle(online_nodes)
        byz_target = (1.0 - h) * online_stake
        byz_stake = 0
        for node in online_nodes:
            if byz_stake + node.stake <= byz_target:
                node.byzantine = True
                node.strategy = rng.choice(STRATEGIES)
                byz_stake += node.stake
        return cls(nodes, registry)

    @property
    def total_stake(self) -> int:
        return sum(n.stake for n in self.nodes)

    def online_stakes(self) -> dict[bytes, int]:
        return {n.pk: n.stake for n in self.nodes if n.online}


# ---------------------------------------------------------------------------
# voting helpers


def _conflict_hash(proposal: bytes) -> bytes:
    return sha3(b"conflict" + proposal)


def collect_votes(
    members: list[SortitionOutcome],
    population: Population,
    proposal: bytes,
    offline: set[bytes],
) -> tuple[list[Vote], list[Vote]]:
    """Votes cast on a proposal hash: honest members vote for it, Byzantine
    members act out their strategy. Returns (proposal votes, conflicting votes)."""
    votes, conflicting = [], []
    for m in members:
        if m.pk in offline:
            continue
        node = population.by_pk[m.pk]
        if not node.byzantine:
            votes.append(Vote(m.pk, proposal, m.weight, crypto.sign(node.sk, proposal)))
            continue
        if node.strategy == WITHHOLD:
            continue
        other = _conflict_hash(proposal)
        conflicting.append(Vote(m.pk, other, m.weight, crypto.sign(node.sk, other)))
        if node.strategy == EQUIVOCATE:
            votes.append(Vote(m.pk, proposal, m.weight, crypto.sign(node.sk, proposal)))
    return votes, conflicting


def adversary_weight(members: list[SortitionOutcome], population: Population) -> int:
    return sum(m.weight for m in members if population.by_pk[m.pk].byzantine)


# ---------------------------------------------------------------------------
# epoch stages


def micro_round(
    partition_index: int,
    sub_txs: list[SubTransaction],
    committee: list[SortitionOutcome],
    cfg: EpochConfig,
    base_state: LedgerState,
    population: Population,
    offline: set[bytes] | None = None,
) -> tuple[MicroBlock | Timeout, list[SubTransaction], list[SubTransaction]]:
    """One partition's consensus round over its debit sub-transactions.

    Returns (micro block or timeout, deferred sub-txs, invalid sub-txs). The
    processing budget is delta_micro * throughput * online member count;
    overflow is deferred to the next round, and a failed quorum defers
    everything.
    """
    offline = offline or set()
    online_members = [m for m in committee if m.pk not in offline]
    if not online_members:
        return Timeout("no online committee weight"), list(sub_txs), []

    capacity = int(cfg.delta_micro * cfg.micro_throughput * len(online_members))
    scratch = base_state.clone()
    included: list[SubTransaction] = []
    deferred: list[SubTransaction] = []
    invalid: list[SubTransaction] = []
    for sub in sub_txs:
        if len(included) >= capacity:
            deferred.append(sub)
            continue
        try:
            apply_eager(scratch, sub)
        except Exception:
            invalid.append(sub)
            continue
        included.append(sub)

    content = sha3(
        str(partition_index).encode() + merkle_root([s.id for s in included])
    )
    votes, _ = collect_votes(online_members, population, content, offline)
    expected = {m.pk: m.weight for m in committee}
    result = tally(votes, cfg.security.quorum, expected)
    if not result.confirmed:
        return Timeout(f"partition {partition_index} vote weight {result.weight}"), list(sub_txs), []
    return MicroBlock(partition_index, included, votes), deferred, invalid


def _build_block(
    chain: Chain,
    kind: str,
    seed: bytes,
    body: list[SubTransaction],
    n_partition: int,
) -> Block:
    tip = chain.tip
    scratch = chain.state.clone()
    for sub in body:
        if sub.kind == EAGER:
            apply_eager(scratch, sub)
        else:
            apply_lazy(scratch, sub)
    tx_root, account_root, log_root = compute_root_arrays(body, scratch)
    header = BlockHeader(
        epoch=tip.epoch + 1,
        kind=kind,
        parent_hash=tip.hash,
        interim_hash=tip.hash if kind == MAIN else ZERO_HASH,
        tx_root=tx_root,
        account_root=account_root,
        tx_log_root=log_root,
        seed=seed,
        n_shard=chain.state.n_shard,
        n_partition=n_partition,
    )
    return Block(header=header, body=body)


def _empty_block(chain: Chain, kind: str, seed: bytes, n_partition: int) -> Block:
    return _build_block(chain, kind, seed, [], n_partition)


def assemble_interim(
    chain: Chain,
    micros: list[MicroBlock],
    committee: list[SortitionOutcome],
    cfg: EpochConfig,
    seed: bytes,
    population: Population,
    n_partition: int,
    offline: set[bytes] | None = None,
) -> tuple[Block, TallyResult, list[Vote]]:
    """Merge micro blocks into a debit block and put it to the committee vote.

    A failed quorum yields the designated empty block; the caller re-queues
    the micro bodies.
    """
    offline = offline or set()
    for micro in micros:
        for sub in micro.sub_txs:
            home = partition_of(shard_of(sub.sender, chain.state.n_shard), n_partition)
            if home != micro.partition_index:
                raise InvariantViolation(
                    "consensus-engine",
                    "micro-partition",
                    f"sub-transaction of partition {home} inside micro block {micro.partition_index}",
                )
    body = [sub for micro in sorted(micros, key=lambda m: m.partition_index) for sub in micro.sub_txs]
    candidate = _build_block(chain, INTERIM, seed, body, n_partition)
    votes, conflicting = collect_votes(committee, population, candidate.hash, offline)
    expected = {m.pk: m.weight for m in committee}
    result = tally(votes, cfg.security.quorum, expected)
    if not result.confirmed:
        return _empty_block(chain, INTERIM, seed, n_partition), result, conflicting
    candidate.header.votes = votes
    return candidate, result, conflicting


def assemble_main(
    chain: Chain,
    committee: list[SortitionOutcome],
    cfg: EpochConfig,
    seed: bytes,
    population: Population,
    n_partition: int,
    offline: set[bytes] | None = None,
) -> tuple[Block, TallyResult, list[Vote]]:
    """Credit every outstanding debit log (including rolled-forward ones) in a
    credit block, or fall back to the designated empty block."""
    offline = offline or set()
    body = [
        SubTransaction(LAZY, entry.parent_id, entry.sender, entry.receiver, entry.value, entry.nonce)
        for entry in (chain.state.pending[pid] for pid in sorted(chain.state.pending))
    ]
    candidate = _build_block(chain, MAIN, seed, body, n_partition)
    votes, conflicting = collect_votes(committee, population, candidate.hash, offline)
    expected = {m.pk: m.weight for m in committee}
    result = tally(votes, cfg.security.quorum, expected)
    if not result.confirmed:
        return _empty_block(chain, MAIN, seed, n_partition), result, conflicting
    candidate.header.votes = votes
    return candidate, result, conflicting


@dataclass
class EpochResult:
    epoch: int
    kind: str
    block: Block
    confirmed_subtx: int
    committee_weight: int
    adversary_weight: int
    empty: bool
    n_partition: int
    n_shard: int
    proposer: bytes | None
    micro_timeouts: int = 0
    invalid_txs: int = 0


def run_epoch(
    chain: Chain,
    mempool: list[Transaction],
    cfg: EpochConfig,
    clock: SimClock,
    population: Population,
    partition_cfg: PartitionConfig,
    offline: set[bytes] | None = None,
) -> EpochResult:
    """Drive one full epoch: committee draws, micro rounds or credit assembly,
    block vote, and append. Exactly one block lands (possibly empty); the
    mempool is mutated to the still-pending transaction set."""
    offline = offline or set()
    tip = chain.tip
    epoch = tip.epoch + 1
    kind = kind_for_epoch(epoch)
    seed = next_seed(tip.header.seed, tip.hash)
    stakes = population.online_stakes()
    p = cfg.security.p
    n_partition = partition_cfg.n_partition

    block_type = BLOCK_INTERIM if kind == INTERIM else BLOCK_MAIN
    committee = select_committee(stakes, seed, block_type, p, population.registry)
    _assert_adversary_below_quorum(committee, population, cfg, f"{block_type} committee")

    proposer = _elect_proposer(committee, population, seed, offline)

    invalid_count = 0
    micro_timeouts = 0
    if kind == INTERIM:
        routed: dict[int, list[SubTransaction]] = {k: [] for k in range(n_partition)}
        for tx in mempool:
            try:
                eager, _ = split_transaction(tx, population.registry)
            except Exception:
                invalid_count += 1
                continue
            k = partition_of(shard_of(tx.sender, chain.state.n_shard), n_partition)
            routed[k].append(eager)

        micros: list[MicroBlock] = []
        kept_parents: set[bytes] = set()
        for k in range(n_partition):
            pc = select_committee(stakes, seed, partition_committee(k), p, population.registry)
            _assert_adversary_below_quorum(pc, population, cfg, f"partition {k} committee")
            outcome, deferred, invalid = micro_round(
                k, routed[k], pc, cfg, chain.state, population, offline
            )
            invalid_count += len(invalid)
            for sub in deferred:
                kept_parents.add(sub.parent_id)
            if isinstance(outcome, Timeout):
                micro_timeouts += 1
            else:
                micros.append(outcome)

        block, result, conflicting = assemble_interim(
            chain, micros, committee, cfg, seed, population, n_partition, offline
        )
        _assert_no_conflicting_quorum(conflicting, cfg)
        if block.is_timeout_block:
            for micro in micros:
                for sub in micro.sub_txs:
                    kept_parents.add(sub.parent_id)
        confirmed = len(block.body)
        # deferred transactions keep their arrival order for the next round
        mempool[:] = [tx for tx in list(mempool) if tx.id in kept_parents]
        clock.advance(cfg.interim_budget)
    else:
        block, result, conflicting = assemble_main(
            chain, committee, cfg, seed, population, n_partition, offline
        )
        _assert_no_conflicting_quorum(conflicting, cfg)
        confirmed = len(block.body)
        clock.advance(cfg.main_budget)

    chain.append_block(block)
    return EpochResult(
        epoch=epoch,
        kind=kind,
        block=block,
        confirmed_subtx=confirmed,
        committee_weight=sum(m.weight for m in committee),
        adversary_weight=adversary_weight(committee, population),
        empty=not block.body,
        n_partition=n_partition,
        n_shard=chain.state.n_shard,
        proposer=proposer,
        micro_timeouts=micro_timeouts,
        invalid_txs=invalid_count,
    )


def _elect_proposer(
    committee: list[SortitionOutcome],
    population: Population,
    seed: bytes,
    offline: set[bytes],
) -> bytes | None:
    if not committee:
        return None
    tickets = [
        (m.pk, leader_ticket(population.by_pk[m.pk].sk, seed).hash) for m in committee
    ]
    for pk in leader_order(tickets):
        if pk not in offline:
            return pk
    return None


def _assert_adversary_below_quorum(
    committee: list[SortitionOutcome], population: Population, cfg: EpochConfig, label: str
) -> None:
    weight = adversary_weight(committee, population)
    if weight >= cfg.security.quorum:
        raise InvariantViolation(
            "consensus-engine", "adversary-quorum", f"{label} adversary weight {weight}"
        )


def _assert_no_conflicting_quorum(conflicting: list[Vote], cfg: EpochConfig) -> None:
    by_hash: dict[bytes, int] = {}
    seen: set[bytes] = set()
    for vote in conflicting:
        if vote.voter in seen:
            continue
        seen.add(vote.voter)
        by_hash[vote.block_hash] = by_hash.get(vote.block_hash, 0) + vote.weight
    for h, weight in by_hash.items():
        if weight >= cfg.security.quorum:
            raise InvariantViolation(
                "consensus-engine", "conflicting-block", f"conflicting vote weight {weight}"
            )


# ---------------------------------------------------------------------------
# full chain simulation


class ChainSimulation:
    """Deterministic multi-epoch run with generated traffic and invariants.

    Node stakes double as account balances, so the token supply K is the total
    stake drawn at build time and conservation is checkable against it every
    epoch.
    """

    def __init__(
        self,
        *,
        h: float = 0.75,
        alpha: float = 0.7,
        tau: float = 5000.0,
        theta: float = 0.3,
        n_nodes: int = 400,
        stake_dist: str = "fixed:2500",
        delta_micro: float = 2.0,
        delta_interim: float = 5.0,
        delta_main: float = 3.0,
        delta_leader: float = 1.0,
        micro_throughput: float = 500.0,
        partition_cfg: PartitionConfig | None = None,
        tx_per_epoch: int = 100,
        invalid_fraction: float = 0.0,
        offline_rate: float = 0.0,
        seed: int = 0,
    ):
        self.population = Population.build(n_nodes, stake_dist, alpha, h, seed)
        security = SecurityParams(h, alpha, tau, theta, self.population.total_stake)
        security.check_domain()
        self.security = security
        self.epoch_cfg = EpochConfig(
            security=security,
            delta_micro=delta_micro,
            delta_interim=delta_interim,
            delta_main=delta_main,
            delta_leader=delta_leader,
            micro_throughput=micro_throughput,
        )
        self.partition_cfg = partition_cfg or PartitionConfig(n_partition=2, n_shard=8)
        self.tx_per_epoch = tx_per_epoch
        self.invalid_fraction = invalid_fraction
        self.offline_rate = offline_rate
        self.seed = seed
        self.txgen_rng = split(seed, "txgen")
        self.offline_rng = split(seed, "offline")

        state = LedgerState(self.partition_cfg.n_shard)
        for node in self.population.nodes:
            state.create_account(node.pk, node.stake)
        self.k_total = security.k_total
        self.chain = Chain(state, security.quorum, self.partition_cfg.n_partition)
        self.mempool: list[Transaction] = []
        self.clock = SimClock()
        self.main_history: list[tuple[int, int]] = []
        self.results: list[EpochResult] = []

    # -- traffic generation --

    def _spendable_view(self) -> dict[bytes, tuple[int, int]]:
        """Balance and next nonce per account after netting out mempool debits."""
        view = {}
        for acct in self.chain.state.iter_accounts():
            view[acct.pk] = (acct.balance, acct.nonce)
        for tx in self.mempool:
            bal, nonce = view[tx.sender]
            view[tx.sender] = (bal - tx.value, nonce + 1)
        return view

    def generate_transactions(self) -> None:
        rng = self.txgen_rng
        view = self._spendable_view()
        pks = sorted(view)
        for _ in range(self.tx_per_epoch):
            sender_pk = pks[rng.randrange(len(pks))]
            receiver_pk = pks[rng.randrange(len(pks))]
            balance, nonce = view[sender_pk]
            sk = self.population.registry.secret_for(sender_pk)
            bad_roll = rng.random()
            if bad_roll < self.invalid_fraction:
                flavor = rng.choice(("overdraw", "nonce", "signature"))
                if flavor == "overdraw":
                    tx = make_transfer(self.population.registry, sk, receiver_pk, balance + 10, nonce + 1)
                elif flavor == "nonce":
                    tx = make_transfer(self.population.registry, sk, receiver_pk, 1, nonce + 7)
                else:
                    good = make_transfer(self.population.registry, sk, receiver_pk, 1, nonce + 1)
                    tx = Transaction(
                        good.tx_type, good.sender, good.receiver, good.value,
                        good.nonce, good.data_hash, sha3(b"forged" + good.signature),
                    )
                self.mempool.append(tx)
                continue
            if balance <= 0:
                continue
            value = rng.randint(1, max(1, min(balance, 50)))
            tx = make_transfer(self.population.registry, sk, receiver_pk, value, nonce + 1)
            view[sender_pk] = (balance - value, nonce + 1)
            self.mempool.append(tx)

    def _draw_offline(self) -> set[bytes]:
        if self.offline_rate <= 0:
            return set()
        return {
            n.pk
            for n in self.population.nodes
            if n.online and self.offline_rng.random() < self.offline_rate
        }

    # -- epoch loop --

    def step(self) -> EpochResult:
        epoch = self.chain.tip.epoch + 1
        if kind_for_epoch(epoch) == INTERIM:
            self.generate_transactions()
        result = run_epoch(
            self.chain,
            self.mempool,
            self.epoch_cfg,
            self.clock,
            self.population,
            self.partition_cfg,
            self._draw_offline(),
        )
        self._post_block_update(result)
        self._check_invariants(result)
        self.results.append(result)
        return result

    def run(self, epochs: int) -> list[EpochResult]:
        for _ in range(epochs):
            self.step()
        return self.results

    def _post_block_update(self, result: EpochResult) -> None:
        cfg = self.partition_cfg
        if result.kind == INTERIM:
            cfg.n_partition = next_partition_count(result.confirmed_subtx, cfg)
        else:
            self.main_history.append((result.n_partition, result.n_shard))
            if reshard_trigger(self.main_history, cfg.n_rs):
                self.chain.state = split_shards(self.chain.state)
                cfg.n_shard = self.chain.state.n_shard
                self.main_history.clear()

    def _check_invariants(self, result: EpochResult) -> None:
        state = self.chain.state
        supply = state.total_balance() + state.pending_value()
        if supply != self.k_total:
            raise InvariantViolation(
                "core-ledger", "conservation", f"supply {supply} != K {self.k_total}"
            )
        if result.kind == MAIN and result.block.body and state.pending:
            raise InvariantViolation(
                "core-ledger", "lazy-completeness", f"{len(state.pending)} credits unapplied"
            )
