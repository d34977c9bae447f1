import numpy as np
import pytest

from onionlab.checkpoint import (MODP_2048, TEST_GROUP, InvalidKeyError, RandomFunctionKey,
                                 SharedKey, build_checkpoint_schedule,
                                 build_checkpoint_schedule_dh, checkpoint_decision,
                                 checkpoint_frequency, checkpoint_nonce, derive_shared_key,
                                 generate_dh_keypair)
from onionlab.protocols.params import ProtocolParams
from onionlab.protocols.pi_a import checkpoint_tables


def pair(group, rng):
    return generate_dh_keypair(group, rng), generate_dh_keypair(group, rng)


@pytest.mark.parametrize("group", [TEST_GROUP, MODP_2048], ids=lambda g: g.name)
def test_group_parameters_are_valid(group):
    group.validate()


@pytest.mark.parametrize("group", [TEST_GROUP, MODP_2048], ids=lambda g: g.name)
def test_shared_key_symmetric(group, rng):
    a, b = pair(group, rng)
    assert a.check(group) and b.check(group)
    assert derive_shared_key(a.x, b.Y, group) == derive_shared_key(b.x, a.Y, group)


def test_degenerate_keys_rejected(rng):
    a, b = pair(TEST_GROUP, rng)
    with pytest.raises(InvalidKeyError):
        derive_shared_key(0, b.Y, TEST_GROUP)
    with pytest.raises(InvalidKeyError):
        derive_shared_key(a.x, 1, TEST_GROUP)
    with pytest.raises(InvalidKeyError):
        derive_shared_key(a.x, TEST_GROUP.p - 1, TEST_GROUP)  # order 2


def test_distinct_pairs_distinct_seeds(rng):
    keys = [generate_dh_keypair(TEST_GROUP, rng) for _ in range(150)]
    seeds = {derive_shared_key(keys[i].x, keys[k].Y, TEST_GROUP).prf_seed
             for i in range(150) for k in range(i + 1, 150)}
    assert len(seeds) == 150 * 149 // 2  # > 10^4 pairs, no collision


def test_decision_endpoints():
    key = SharedKey(b"k" * 32)
    assert all(checkpoint_decision(key, 0, r, 0.0) == 0 for r in range(200))
    assert all(checkpoint_decision(key, 0, r, 1.0) == 1 for r in range(200))


def test_frequency_formula():
    assert checkpoint_frequency(1, 4, 16) == 0.25
    with pytest.raises(ValueError):
        checkpoint_frequency(5, 4, 16)


def test_decision_rate_matches_p():
    keys = [SharedKey(bytes([i % 256, i // 256]) * 16) for i in range(1000)]
    hits = sum(checkpoint_decision(k, 7, r, 0.25) for k in keys for r in range(100))
    assert abs(hits / 1e5 - 0.25) < 0.01


def test_nonce_determinism_and_separation():
    key = SharedKey(b"s" * 32)
    n1, n2 = checkpoint_nonce(key, 3, 4), checkpoint_nonce(key, 3, 4)
    assert n1 == n2 and n1.tag == "checkpt"
    assert checkpoint_nonce(key, 3, 5) != n1
    # session + r is one integer: (3, 4) and (4, 3) coincide by design
    assert checkpoint_nonce(key, 4, 3) == n1
    # the bit stream and the nonce stream use different final arguments
    assert key.prf(7, 0) != key.prf(7, 1)


def test_schedule_empty_when_rate_zero(rng):
    a, b = pair(TEST_GROUP, rng)
    keys = {1: derive_shared_key(a.x, b.Y, TEST_GROUP)}
    assert build_checkpoint_schedule(0, keys, 0, 16, 0.0) == []


def test_schedule_mutual_consistency(rng):
    N, L = 8, 12
    dh = [generate_dh_keypair(TEST_GROUP, rng) for _ in range(N)]
    publics = {k: dh[k].Y for k in range(N)}
    sched = {i: build_checkpoint_schedule_dh(i, publics, dh[i].x, 5, L, N, 2, 1.0, TEST_GROUP)
             for i in range(N)}
    for i in range(N):
        for k in range(N):
            mine = [(s.round, s.nonce) for s in sched[i] if s.partner == k]
            theirs = [(s.round, s.nonce) for s in sched[k] if s.partner == i]
            assert mine == theirs


def test_schedule_count_near_expectation(rng):
    # N=64, L=16, p = 0.25: expected L * N * p = 256 specs per party
    N, L = 64, 16
    totals = []
    for seed in range(30):
        r = np.random.default_rng(seed)
        keys = {k: SharedKey(r.bytes(32)) for k in range(N)}
        totals.append(len(build_checkpoint_schedule(0, keys, 0, L, 0.25)))
    assert abs(np.mean(totals) - 256) <= 25.6


def test_random_function_key_interface(rng):
    key = RandomFunctionKey(rng)
    assert key.prf(1, 1) == key.prf(1, 1)
    assert key.prf(1, 1) != key.prf(1, 0)


@pytest.mark.parametrize("mode", ["random", "hash", "dh"])
def test_tables_symmetric(mode):
    params = ProtocolParams(protocol="pi_a", N=12, alpha=3, beta=4, log2_lambda=1.0, prf=mode)
    bits, nonce_fn = checkpoint_tables(params, seed=3)
    assert bits.shape == (params.path_length, 12, 12)
    assert (bits == bits.transpose(0, 2, 1)).all()
    r, i, k = map(int, np.argwhere(bits)[0])
    assert nonce_fn(i, k, r + 1) == nonce_fn(k, i, r + 1)
    rate = bits.mean()
    assert 0.1 < rate < 0.4  # p = 3/12
