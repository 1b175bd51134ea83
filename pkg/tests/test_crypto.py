import numpy as np
from scipy import stats

from fission_sim.crypto import (
    KeyRegistry,
    encode_field,
    encode_fields,
    sha3,
    sign,
    verify,
    vrf_eval,
    vrf_verify,
)


def test_sha3_known_value():
    # SHA3-256 of empty input, from the function family definition
    assert sha3(b"").hex() == "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"


def test_encode_field_layout():
    assert encode_field(b"abc") == b"\x00\x00\x00\x03abc"
    assert encode_fields(b"a", b"bc") == b"\x00\x00\x00\x01a\x00\x00\x00\x02bc"


def test_encoding_is_injective_on_field_boundaries():
    # same concatenated bytes, different field split -> different encodings
    assert encode_fields(b"ab", b"c") != encode_fields(b"a", b"bc")


def test_sign_verify_roundtrip():
    reg = KeyRegistry()
    sk, pk = reg.generate(b"alice")
    sig = sign(sk, b"hello")
    assert verify(reg, pk, b"hello", sig)
    assert not verify(reg, pk, b"hellp", sig)
    assert not verify(reg, pk, b"hello", sha3(sig))
    assert not verify(reg, sha3(b"unknown"), b"hello", sig)


def test_vrf_deterministic():
    reg = KeyRegistry()
    sk, _ = reg.generate(b"n1")
    a = vrf_eval(sk, b"seed", "leader")
    b = vrf_eval(sk, b"seed", "leader")
    assert a.hash == b.hash and a.proof == b.proof


def test_vrf_distinct_inputs_change_hash():
    reg = KeyRegistry()
    sk, _ = reg.generate(b"n1")
    base = vrf_eval(sk, b"seed", "leader")
    assert vrf_eval(sk, b"seed2", "leader").hash != base.hash
    assert vrf_eval(sk, b"seed", "block_main").hash != base.hash


def test_vrf_verify_rejects_tampering():
    reg = KeyRegistry()
    sk, pk = reg.generate(b"n1")
    out = vrf_eval(sk, b"seed", "leader")
    assert vrf_verify(reg, pk, b"seed", "leader", out)
    flipped = type(out)(hash=bytes([out.hash[0] ^ 1]) + out.hash[1:], proof=out.proof)
    assert not vrf_verify(reg, pk, b"seed", "leader", flipped)
    assert not vrf_verify(reg, pk, b"other", "leader", out)
    assert not vrf_verify(reg, pk, b"seed", "block_main", out)


def test_vrf_uniformity_ks():
    # hash / 2^256 should look uniform across seeds at the 1% KS level
    reg = KeyRegistry()
    sk, _ = reg.generate(b"ks-node")
    draws = np.array(
        [vrf_eval(sk, b"seed%d" % i, "partition:0").uniform for i in range(100_000)]
    )
    stat = stats.kstest(draws, "uniform")
    assert stat.pvalue > 0.01, f"KS p-value {stat.pvalue}"
