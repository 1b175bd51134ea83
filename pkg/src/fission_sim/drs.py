"""Distributed data retrieval as a singleton congestion game.

Each request queues FIFO at one provider of its key. A provider serves
deadline * capacity bytes in time; whatever overflows ships through the relay
network instead. A requester may hunt for a new provider only while its
request is completely unservable (cost equals its full weight, the bounded
jump rule), probing one underloaded provider per round, all against the
round-start snapshot. That rule makes the total overflow non-increasing and
drives the game to an approximate equilibrium in a logarithmic number of
rounds.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .dists import sample_dist
from .errors import InvariantViolation
from .seeding import split


@dataclass
class DataItem:
    key: int
    size: float  # KB
    providers: list[int]


@dataclass
class RetrievalRequest:
    rid: int
    requester: int
    key: int
    weight: float
    born: float
    provider: int | None = None  # None while unplaced
    at_relayer: bool = False


@dataclass
class ProviderNode:
    id: int
    capacity: float  # KB/s upload
    queue: list[int] = field(default_factory=list)  # request ids, FIFO
    load: float = 0.0  # total queued KB


def request_cost(height: float, d_remaining: float, capacity: float, weight: float) -> float:
    """Overflow cost of one queued request: the part of its bytes that cannot
    ship within the remaining time, clamped to the request size."""
    return min(max(height - d_remaining * capacity, 0.0), weight)


class DrsState:
    """Providers, data items, the request pool, and the shared deadline."""

    def __init__(self, providers: list[ProviderNode], items: list[DataItem], deadline: float):
        self.providers = providers
        self.items = items
        self.deadline = deadline
        self.requests: list[RetrievalRequest] = []
        self.relayer_direct: float = 0.0  # KB of requests handed fully to the relay network

    def add_request(self, requester: int, key: int, born: float = 0.0) -> RetrievalRequest:
        req = RetrievalRequest(
            rid=len(self.requests),
            requester=requester,
            key=key,
            weight=self.items[key].size,
            born=born,
        )
        self.requests.append(req)
        return req

    def enqueue(self, req: RetrievalRequest, provider: int) -> None:
        node = self.providers[provider]
        node.queue.append(req.rid)
        node.load += req.weight
        req.provider = provider

    def dequeue(self, req: RetrievalRequest) -> None:
        node = self.providers[req.provider]
        node.queue.remove(req.rid)
        node.load -= req.weight
        req.provider = None

    def heights(self) -> dict[int, float]:
        """FIFO height of every queued request: prefix sum of queue weights up
        to and including it."""
        hs: dict[int, float] = {}
        for node in self.providers:
            acc = 0.0
            for rid in node.queue:
                acc += self.requests[rid].weight
                hs[rid] = acc
        return hs

    def remaining(self, req: RetrievalRequest, t: float) -> float:
        return self.deadline - t + req.born

    def underloaded_providers(self, key: int, d_remaining: float) -> list[int]:
        return [
            i
            for i in self.items[key].providers
            if self.providers[i].load < d_remaining * self.providers[i].capacity
        ]

    def total_weight(self) -> float:
        return sum(r.weight for r in self.requests)


def drs_potential(providers: list[ProviderNode], deadline: float) -> float:
    """Total relayer-bound overflow: sum over providers of
    max(load - deadline * capacity, 0)."""
    return sum(max(p.load - deadline * p.capacity, 0.0) for p in providers)


def bounded_jump_eligible(state: DrsState, req: RetrievalRequest, t: float, heights: dict[int, float]) -> bool:
    """True when the request's cost equals its full weight (none of its bytes
    can ship in the remaining time), the only case a requester may keep
    probing for a better provider."""
    if req.at_relayer:
        return False
    if req.provider is None:
        return True  # no provider yet: nothing can be served
    node = state.providers[req.provider]
    d_rem = state.remaining(req, t)
    return request_cost(heights[req.rid], d_rem, node.capacity, req.weight) >= req.weight


@dataclass
class DrsRoundReport:
    migrations: int = 0
    to_relayer: int = 0
    probes: int = 0


def drs_round(state: DrsState, rng: random.Random, t: float, timeout_prob: float = 0.0) -> DrsRoundReport:
    """One synchronous probing round against the round-start snapshot.

    Every eligible request contacts one uniformly random underloaded provider
    of its key (if any) and migrates when the snapshot load fits within the
    remaining time budget. Requests past their deadline that are still
    unservable go to the relay network in full.
    """
    heights = state.heights()
    snapshot_loads = [p.load for p in state.providers]
    report = DrsRoundReport()
    for req in state.requests:
        if req.at_relayer:
            continue
        if not bounded_jump_eligible(state, req, t, heights):
            continue
        d_rem = state.remaining(req, t)
        if t > req.born + state.deadline:
            if req.provider is not None:
                state.dequeue(req)
            req.at_relayer = True
            state.relayer_direct += req.weight
            report.to_relayer += 1
            continue
        candidates = [
            i
            for i in state.items[req.key].providers
            if snapshot_loads[i] < d_rem * state.providers[i].capacity
        ]
        if not candidates:
            continue  # stays put, retries next round
        target = candidates[rng.randrange(len(candidates))]
        report.probes += 1
        if timeout_prob > 0 and rng.random() < timeout_prob:
            continue  # probe timed out, retry next round
        if snapshot_loads[target] <= d_rem * state.providers[target].capacity:
            if req.provider is not None:
                state.dequeue(req)
            state.enqueue(req, target)
            report.migrations += 1
    return report


def active_eligible(state: DrsState, t: float) -> list[RetrievalRequest]:
    heights = state.heights()
    return [
        r
        for r in state.requests
        if not r.at_relayer and bounded_jump_eligible(state, r, t, heights)
    ]


def underloaded_count(state: DrsState, t: float) -> int:
    """Number of distinct underloaded providers across the keys of requests
    still hunting (the m_t in the contraction argument)."""
    providers: set[int] = set()
    for req in active_eligible(state, t):
        d_rem = state.remaining(req, t)
        providers.update(state.underloaded_providers(req.key, d_rem))
    return len(providers)


def omega(state: DrsState, t: float) -> float:
    """Contraction quantity: underloaded provider count times the potential;
    zero exactly at (approximate) equilibrium."""
    return underloaded_count(state, t) * drs_potential(state.providers, state.deadline)


def accounting(state: DrsState) -> tuple[float, float, float]:
    """(bytes nodes can serve, relayer-bound bytes, total requested). The first
    two always sum to the third."""
    served = sum(min(p.load, state.deadline * p.capacity) for p in state.providers)
    unplaced = sum(
        r.weight for r in state.requests if r.provider is None and not r.at_relayer
    )
    relayer = (
        drs_potential(state.providers, state.deadline) + state.relayer_direct + unplaced
    )
    return served, relayer, state.total_weight()


@dataclass
class DrsTraceRow:
    round: int
    phi: float
    omega: float
    underloaded_m: int
    migrations: int
    relayer_kb: float


@dataclass
class DrsRun:
    rows: list[DrsTraceRow]
    state: DrsState
    rounds_budget: int

    @property
    def converged_round(self) -> int | None:
        threshold = equilibrium_threshold(self.state)
        for row in self.rows:
            if row.omega <= threshold:
                return row.round
        return None

    @property
    def relayer_bytes(self) -> float:
        return self.rows[-1].relayer_kb


def equilibrium_threshold(state: DrsState) -> float:
    """Omega = O(1) detection at desk scale: max(1, mean request weight)."""
    if not state.requests:
        return 1.0
    return max(1.0, state.total_weight() / len(state.requests))


def build_instance(
    n_nodes: int,
    n_keys: int,
    size_dist: str,
    cap_dist: str,
    replication: int,
    deadline: float,
    seed: int,
    *,
    requests_per_node: int = 1,
    start: str = "uniform",
) -> DrsState:
    """Random instance: capacities and sizes from dist specs, each key
    replicated onto `replication` distinct nodes, one request per node for a
    uniform key. start='concentrated' stacks every request on its key's first
    provider (the adversarial worst case)."""
    rng = split(seed, "drs-setup")
    providers = [
        ProviderNode(id=i, capacity=sample_dist(cap_dist, rng, integer=True, minimum=1))
        for i in range(n_nodes)
    ]
    items = []
    for k in range(n_keys):
        holders = rng.sample(range(n_nodes), min(replication, n_nodes))
        items.append(
            DataItem(key=k, size=sample_dist(size_dist, rng, integer=True, minimum=1), providers=holders)
        )
    state = DrsState(providers, items, deadline)
    for node in range(n_nodes):
        for _ in range(requests_per_node):
            state.add_request(node, rng.randrange(n_keys))
    place_rng = split(seed, "drs-place")
    for req in state.requests:
        holders = state.items[req.key].providers
        if not holders:
            req.at_relayer = True
            state.relayer_direct += req.weight
            continue
        if start == "concentrated":
            state.enqueue(req, holders[0])
            continue
        # contact an underloaded provider when one exists, else queue anywhere
        # and let the bounded jump rule hunt from round 1 on
        open_now = state.underloaded_providers(req.key, deadline)
        pool = open_now if open_now else holders
        state.enqueue(req, pool[place_rng.randrange(len(pool))])
    return state


def simulate_drs(
    n_nodes: int,
    n_keys: int,
    size_dist: str,
    cap_dist: str,
    replication: int,
    deadline: float,
    seed: int,
    *,
    rounds: int | None = None,
    round_duration: float = 0.0,
    start: str = "uniform",
    timeout_prob: float = 0.0,
) -> DrsRun:
    """Run probing rounds to (approximate) equilibrium or budget exhaustion.

    With the default zero round duration the remaining time budget stays at
    the full deadline, matching the synchronous convergence analysis; the
    overflow potential is then asserted non-increasing every round. The trace
    starts at round 0 (initial placement) and relayer_kb counts overflow plus
    requests handed to the relay network outright.
    """
    state = build_instance(
        n_nodes, n_keys, size_dist, cap_dist, replication, deadline, seed, start=start
    )
    if rounds is None:
        rounds = max(8, math.ceil(40.0 * math.log(max(2, n_keys * max(1, n_nodes)))))
    rng = split(seed, "drs-rounds")
    threshold = equilibrium_threshold(state)
    total = state.total_weight()
    rows = [_trace_row(state, 0, 0.0)]
    _check_identity(state, total)
    t = 0.0
    for rnd in range(1, rounds + 1):
        if rows[-1].omega <= threshold:
            break
        report = drs_round(state, rng, t, timeout_prob=timeout_prob)
        row = _trace_row(state, rnd, t, report.migrations)
        if round_duration == 0.0 and row.phi > rows[-1].phi + 1e-9:
            raise InvariantViolation(
                "p2p-drs", "monotone-potential", f"{rows[-1].phi} -> {row.phi} at round {rnd}"
            )
        _check_identity(state, total)
        _check_heights(state)
        rows.append(row)
        t += round_duration
    return DrsRun(rows=rows, state=state, rounds_budget=rounds)


def _trace_row(state: DrsState, rnd: int, t: float, migrations: int = 0) -> DrsTraceRow:
    phi = drs_potential(state.providers, state.deadline)
    m_t = underloaded_count(state, t)
    return DrsTraceRow(
        round=rnd,
        phi=phi,
        omega=m_t * phi,
        underloaded_m=m_t,
        migrations=migrations,
        relayer_kb=phi
        + state.relayer_direct
        + sum(r.weight for r in state.requests if r.provider is None and not r.at_relayer),
    )


def _check_identity(state: DrsState, total: float) -> None:
    served, relayer, _ = accounting(state)
    if abs(served + relayer - total) > 1e-6:
        raise InvariantViolation(
            "p2p-drs", "primal-dual-identity", f"{served} + {relayer} != {total}"
        )


def _check_heights(state: DrsState) -> None:
    heights = state.heights()
    for p in state.providers:
        acc = 0.0
        for rid in p.queue:
            acc += state.requests[rid].weight
            if heights[rid] != acc:
                raise InvariantViolation("p2p-drs", "fifo-heights", f"request {rid}")
        if abs(acc - p.load) > 1e-6:
            raise InvariantViolation("p2p-drs", "load-sum", f"provider {p.id}")
