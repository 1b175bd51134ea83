import random

import pytest

from fission_sim.crypto import KeyRegistry
from fission_sim.ledger import LedgerState, TxLogEntry, shard_of
from fission_sim.partitioning import (
    PartitionConfig,
    next_partition_count,
    partition_of,
    reshard_trigger,
    split_shards,
)


def test_partition_of_examples():
    assert partition_of(5, 3) == 2
    assert all(partition_of(s, 1) == 0 for s in range(10))
    assert [partition_of(s, 6) for s in range(6)] == list(range(6))


def cfg(n_partition, n_shard=64, n_e_max=1000, delta=0.8):
    return PartitionConfig(n_partition=n_partition, n_shard=n_shard, n_e_max=n_e_max, delta=delta)


def test_scaler_examples():
    # direct evaluation of the piecewise rule
    assert next_partition_count(3300, cfg(4)) == 5  # 825 >= 800
    assert next_partition_count(700, cfg(4)) == 3  # 175 <= 200
    assert next_partition_count(1200, cfg(4)) == 4  # 300 inside the band


def test_scaler_clamps_to_range():
    assert next_partition_count(0, cfg(1)) == 1
    assert next_partition_count(10**9, cfg(4, n_shard=4)) == 4


def scaler_oracle(n_e, n_p, n_e_max, delta, n_shard):
    load = n_e / n_p
    if load >= delta * n_e_max:
        out = n_p + 1
    elif load <= (1 - delta) * n_e_max:
        out = n_p - 1
    else:
        out = n_p
    return max(1, min(out, n_shard))


def test_scaler_matches_bruteforce_on_random_inputs():
    rng = random.Random(3)
    for _ in range(10_000):
        n_e = rng.randrange(0, 20_000)
        n_p = rng.randint(1, 64)
        c = cfg(n_p)
        assert next_partition_count(n_e, c) == scaler_oracle(n_e, n_p, c.n_e_max, c.delta, 64)


def test_scaler_moves_at_most_one():
    rng = random.Random(4)
    for _ in range(2000):
        n_p = rng.randint(1, 64)
        n_e = rng.randrange(0, 100_000)
        assert abs(next_partition_count(n_e, cfg(n_p)) - n_p) <= 1


def test_scaler_fixed_point_inside_band():
    c = cfg(4)
    for n_e in (4 * 201, 4 * 500, 4 * 799):
        assert next_partition_count(n_e, c) == 4


def test_reshard_trigger_tail_cases():
    assert reshard_trigger([(4, 4), (4, 4), (4, 4)], 2)
    assert not reshard_trigger([(4, 4), (3, 4), (4, 4)], 2)
    assert not reshard_trigger([(4, 4), (4, 4)], 2)  # window not filled yet


def test_reshard_trigger_matches_window_scan():
    rng = random.Random(9)
    for _ in range(2000):
        n_rs = rng.randint(1, 4)
        hist = []
        for _ in range(rng.randint(0, 10)):
            ns = rng.randint(1, 4)
            np_ = rng.randint(1, ns)
            hist.append((np_, ns))
        window = hist[-(n_rs + 1):]
        oracle = len(window) == n_rs + 1 and all(a == b for a, b in window)
        assert reshard_trigger(hist, n_rs) == oracle


def test_partition_config_validation():
    with pytest.raises(ValueError):
        PartitionConfig(n_partition=5, n_shard=4)
    with pytest.raises(ValueError):
        PartitionConfig(n_partition=1, n_shard=4, delta=1.0)


# --- shard splitting ---


def make_state_with_accounts(n_shard, count, seed=0):
    reg = KeyRegistry()
    rng = random.Random(seed)
    state = LedgerState(n_shard)
    for i in range(count):
        _, pk = reg.generate(f"{seed}-{i}".encode())
        acct = state.create_account(pk, rng.randint(0, 10_000))
        acct.nonce = rng.randint(0, 20)
    return state


def test_split_shards_parity():
    state = LedgerState(1)
    pks = [(i).to_bytes(32, "big") for i in range(4)]
    for pk in pks:
        state.create_account(pk, 1)
    split = split_shards(state)
    assert split.n_shard == 2
    assert sorted(int.from_bytes(a.pk, "big") for a in split.shards[0].accounts.values()) == [0, 2]
    assert sorted(int.from_bytes(a.pk, "big") for a in split.shards[1].accounts.values()) == [1, 3]


def test_split_shards_conserves_balance_and_accounts():
    state = make_state_with_accounts(4, 200, seed=1)
    before = state.total_balance()
    split = split_shards(state)
    assert split.n_shard == 8
    assert split.total_balance() == before
    assert split.account_count() == state.account_count()


def test_split_shards_per_account_lookup_matches():
    for seed in range(5):
        state = make_state_with_accounts(4, 100, seed=seed)
        split = split_shards(state)
        for acct in state.iter_accounts():
            moved = split.get_account(acct.pk)
            assert moved is not None
            assert moved.balance == acct.balance and moved.nonce == acct.nonce
            assert shard_of(acct.pk, 8) == [
                i for i, s in enumerate(split.shards) if acct.pk in s.accounts
            ][0]


def test_split_shards_rehomes_tx_logs():
    state = make_state_with_accounts(2, 10, seed=2)
    sender = next(iter(state.shards[0].accounts))
    entry = TxLogEntry(b"\x01" * 32, sender, sender, 5, 1)
    state.shards[shard_of(sender, 2)].tx_log.append(entry)
    state.pending[entry.parent_id] = entry
    split = split_shards(state)
    assert entry in split.shards[shard_of(sender, 4)].tx_log
    assert split.pending == state.pending
