"""Relay selection as a load-balancing congestion game.

Nodes attach to relayers and greedily re-select them: draw a candidate with
probability proportional to advertised capacity (via the identifier space),
then switch away from a busier relayer with probability 1 - r_k / r_j. All
nodes move simultaneously against the round-start snapshot. The potential
sum((r_i - r_mean)^2) contracts roughly to sqrt(m * potential) per round,
which is what the Monte Carlo validators check.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import EmptySpace, InvariantViolation
from .seeding import split

DEFAULT_MU = 1.0
PHI_STEADY_FACTOR = 4  # steady state detection: phi <= 4 * m


@dataclass
class Relayer:
    id: int
    capacity: float  # advertised upload, KB/s (>= 2 by modeling assumption)
    load: int = 0

    @property
    def ratio(self) -> float:
        return self.load / self.capacity


class RelaySystemState:
    """Relayer capacities, node assignments, and the capacity-proportional
    identifier space (relayer k appears floor(u_k / mu) times)."""

    def __init__(
        self,
        capacities: list[float],
        mu: float = DEFAULT_MU,
        mean_msg_size: float = 1.0,
    ):
        if not capacities:
            raise ValueError("need at least one relayer")
        if any(u < 2 for u in capacities):
            raise ValueError("relayer capacities must be >= 2")
        self.capacities = list(capacities)
        self.mu = mu
        self.mean_msg_size = mean_msg_size
        self.identifier_space: list[int] = []
        for k, u in enumerate(self.capacities):
            mult = int(u // mu)
            if mult < 1:
                raise ValueError(f"capacity {u} below one identifier unit mu={mu}")
            self.identifier_space.extend([k] * mult)
        self.assignment: list[int] = []
        self.loads = [0] * len(capacities)

    @property
    def m(self) -> int:
        return len(self.capacities)

    @property
    def n_nodes(self) -> int:
        return len(self.assignment)

    @property
    def total_capacity(self) -> float:
        return sum(self.capacities)

    @property
    def optimal_ratio(self) -> float:
        return self.n_nodes / self.total_capacity

    def ratios(self) -> list[float]:
        return [l / u for l, u in zip(self.loads, self.capacities)]

    def attach(self, relayer: int) -> int:
        self.assignment.append(relayer)
        self.loads[relayer] += 1
        return len(self.assignment) - 1

    def populate(self, n_nodes: int, rng: random.Random, start: str = "random") -> None:
        """Attach n nodes: 'random' uses the capacity-proportional draw,
        'worst' stacks everyone on relayer 0."""
        for _ in range(n_nodes):
            self.attach(0 if start == "worst" else initial_relayer(rng, self.identifier_space))


def initial_relayer(rng: random.Random, identifier_space: list[int]) -> int:
    """Uniform draw over the identifier space: Pr(k) = u_k / |U| up to the
    mu quantization."""
    if not identifier_space:
        raise EmptySpace("identifier space is empty")
    return identifier_space[rng.randrange(len(identifier_space))]


def prs_step(current_ratio: float, candidate_ratio: float, rng: random.Random) -> bool:
    """One node's switch decision: True (switch) with probability
    1 - r_k / r_j when the candidate is strictly less loaded."""
    if current_ratio <= candidate_ratio:
        return False
    return rng.random() < 1.0 - candidate_ratio / current_ratio


def potential(state: RelaySystemState) -> float:
    r_bar = state.optimal_ratio
    return sum((r - r_bar) ** 2 for r in state.ratios())


def expected_delay(state: RelaySystemState) -> float:
    """Mean propagation delay (w_mean / |V|) * sum(l_i^2 / u_i); minimized
    exactly when loads are proportional to capacities."""
    n = state.n_nodes
    if n <= 0:
        raise ValueError("no nodes attached")
    return state.mean_msg_size / n * sum(
        l * l / u for l, u in zip(state.loads, state.capacities)
    )


def synchronous_round(state: RelaySystemState, rng: random.Random) -> int:
    """Every node performs one selection step against the round-start
    snapshot; returns the number of switches applied."""
    ratios = state.ratios()
    space = state.identifier_space
    moves: list[tuple[int, int, int]] = []
    for node, j in enumerate(state.assignment):
        k = space[rng.randrange(len(space))]
        if k == j:
            continue
        if prs_step(ratios[j], ratios[k], rng):
            moves.append((node, j, k))
    for node, j, k in moves:
        if ratios[k] >= ratios[j]:
            raise InvariantViolation(
                "relay-net", "switch-guard", f"switch to ratio {ratios[k]} from {ratios[j]}"
            )
        state.assignment[node] = k
        state.loads[j] -= 1
        state.loads[k] += 1
    return len(moves)


def apply_churn(
    state: RelaySystemState, rng: random.Random, join_rate: float, leave_rate: float
) -> tuple[int, int]:
    """Remove each node with probability leave_rate, then add joiners drawn
    Poisson(join_rate); joiners attach via the capacity-proportional draw."""
    leavers = 0
    if leave_rate > 0:
        kept = []
        for relayer in state.assignment:
            if rng.random() < leave_rate:
                state.loads[relayer] -= 1
                leavers += 1
            else:
                kept.append(relayer)
        state.assignment = kept
    joiners = 0
    if join_rate > 0:
        joiners = _poisson(rng, join_rate)
        for _ in range(joiners):
            state.attach(initial_relayer(rng, state.identifier_space))
    return joiners, leavers


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth's method; round rates are small
    threshold = math.exp(-lam)
    count, prod = 0, rng.random()
    while prod > threshold:
        count += 1
        prod *= rng.random()
    return count


@dataclass
class PrsTraceRow:
    round: int
    phi: float
    expected_delay: float
    max_ratio: float
    switches: int


@dataclass
class PrsRun:
    rows: list[PrsTraceRow]
    state: RelaySystemState

    @property
    def converged_round(self) -> int | None:
        threshold = PHI_STEADY_FACTOR * self.state.m
        for row in self.rows:
            if row.phi <= threshold:
                return row.round
        return None


def simulate_prs(
    n_nodes: int,
    capacities: list[float],
    rounds: int,
    seed: int,
    *,
    start: str = "worst",
    mu: float = DEFAULT_MU,
    mean_msg_size: float = 1.0,
    join_rate: float = 0.0,
    leave_rate: float = 0.0,
    stop_at_steady: bool = True,
) -> PrsRun:
    """Run synchronous selection rounds from a seeded start; the trace records
    (round, phi, expected delay, max ratio, switches) with round 0 being the
    initial state. Stops early once phi <= 4m unless told otherwise."""
    rng = split(seed, "prs")
    state = RelaySystemState(capacities, mu=mu, mean_msg_size=mean_msg_size)
    state.populate(n_nodes, rng, start=start)
    rows = [PrsTraceRow(0, potential(state), expected_delay(state), max(state.ratios()), 0)]
    threshold = PHI_STEADY_FACTOR * state.m
    for rnd in range(1, rounds + 1):
        if stop_at_steady and rows[-1].phi <= threshold:
            break
        if join_rate or leave_rate:
            apply_churn(state, rng, join_rate, leave_rate)
        switches = synchronous_round(state, rng)
        _assert_load_conservation(state)
        rows.append(
            PrsTraceRow(rnd, potential(state), expected_delay(state), max(state.ratios()), switches)
        )
    return PrsRun(rows=rows, state=state)


def _assert_load_conservation(state: RelaySystemState) -> None:
    if sum(state.loads) != state.n_nodes:
        raise InvariantViolation(
            "relay-net", "load-conservation", f"{sum(state.loads)} != {state.n_nodes}"
        )


# ---------------------------------------------------------------------------
# Monte Carlo validators for the one-round transition moments


@dataclass
class ExpectationReport:
    r_bar: float
    means: list[float]
    std_errors: list[float]

    @property
    def max_abs_z(self) -> float:
        return max(
            abs(m - self.r_bar) / se if se > 0 else (0.0 if m == self.r_bar else math.inf)
            for m, se in zip(self.means, self.std_errors)
        )


def validate_lemma_expectation(state: RelaySystemState, trials: int, seed: int = 0) -> ExpectationReport:
    """Estimate E[r_i(t+1)] per relayer from one-round transitions out of the
    fixed current state; the limit claim is that every mean equals the
    proportional ratio |V| / |U|."""
    sums = [0.0] * state.m
    sq_sums = [0.0] * state.m
    base_assignment = list(state.assignment)
    for trial in range(trials):
        rng = split(seed, "lemma-exp", trial)
        work = _clone_assignment(state, base_assignment)
        synchronous_round(work, rng)
        for i, r in enumerate(work.ratios()):
            sums[i] += r
            sq_sums[i] += r * r
    means = [s / trials for s in sums]
    ses = []
    for i in range(state.m):
        var = max(0.0, sq_sums[i] / trials - means[i] ** 2)
        ses.append(math.sqrt(var / trials))
    return ExpectationReport(r_bar=state.optimal_ratio, means=means, std_errors=ses)


@dataclass
class VarianceReport:
    variance_sum: float
    bound: float
    std_error: float

    @property
    def within_margin(self) -> bool:
        return self.variance_sum <= self.bound + 3.0 * self.std_error


def validate_lemma_variance(state: RelaySystemState, trials: int, seed: int = 0) -> VarianceReport:
    """Estimate sum_i Var[r_i(t+1)] out of the fixed current state and compare
    against the sqrt(m * phi(t)) bound used by the convergence argument."""
    samples = [[0.0] * trials for _ in range(state.m)]
    base_assignment = list(state.assignment)
    for trial in range(trials):
        rng = split(seed, "lemma-var", trial)
        work = _clone_assignment(state, base_assignment)
        synchronous_round(work, rng)
        for i, r in enumerate(work.ratios()):
            samples[i][trial] = r
    total_var = 0.0
    se_sq = 0.0
    for i in range(state.m):
        xs = samples[i]
        mean = sum(xs) / trials
        devs = [(x - mean) ** 2 for x in xs]
        var = sum(devs) / (trials - 1)
        total_var += var
        mu4 = sum(d * d for d in devs) / trials
        se_sq += max(0.0, mu4 - var * var * (trials - 3) / (trials - 1)) / trials
    bound = math.sqrt(state.m * potential(state))
    return VarianceReport(variance_sum=total_var, bound=bound, std_error=math.sqrt(se_sq))


def _clone_assignment(state: RelaySystemState, assignment: list[int]) -> RelaySystemState:
    clone = RelaySystemState(state.capacities, mu=state.mu, mean_msg_size=state.mean_msg_size)
    for relayer in assignment:
        clone.attach(relayer)
    return clone


# ---------------------------------------------------------------------------
# structural properties


def broadcast_hops(state: RelaySystemState, origin: int) -> list[int]:
    """Hop count for delivering one message from origin to every node: one hop
    to the origin's relayer, relayer-to-relayer fan-out, then final delivery.
    Never exceeds three hops."""
    origin_relayer = state.assignment[origin]
    hops = []
    for node, relayer in enumerate(state.assignment):
        if node == origin:
            hops.append(0)
        elif relayer == origin_relayer:
            hops.append(2)
        else:
            hops.append(3)
    return hops


def is_eps_nash(state: RelaySystemState, eps: float) -> bool:
    """Exhaustive single-deviation scan: False when any attached node could cut
    its relayer's load ratio by a factor greater than 1 - eps by moving."""
    ratios = state.ratios()
    for j in range(state.m):
        if state.loads[j] == 0:
            continue
        for k in range(state.m):
            if k == j:
                continue
            moved_ratio = (state.loads[k] + 1) / state.capacities[k]
            if moved_ratio < (1.0 - eps) * ratios[j]:
                return False
    return True
