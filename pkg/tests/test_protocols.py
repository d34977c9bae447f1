from collections import Counter

import numpy as np
import pytest

from onionlab.inputs import (InputError, InputVector, permutation_input, random_multiset_input,
                             random_permutation_input)
from onionlab.kernels import run_kernel
from onionlab.protocols import PROTOCOLS, get_protocol, param_calc
from onionlab.protocols.base import DUMMY, MESSAGE
from onionlab.protocols.params import (ConfigError, ProtocolParams, abort_threshold,
                                       alpha_beta_min)
from onionlab.protocols.pi_n import butterfly_adjacency, butterfly_path, butterfly_paths


def proto(**kw):
    params = ProtocolParams(**kw)
    return get_protocol(params.protocol, params)


def test_registry():
    assert set(PROTOCOLS) == {"direct", "pi_p", "pi_a", "pi_n", "pi_n_plus"}
    with pytest.raises(ConfigError, match="protocol"):
        get_protocol("tor", ProtocolParams())


# parameter arithmetic

def test_threshold_example():
    # 0.5 * 0.5 * 0.25 * 4 * 16
    assert abort_threshold(0.5, 0.5, 0.5, 4, 16) == 4
    assert ProtocolParams(protocol="pi_a", c=.5, d=.5, kappa=.5, alpha=4, log2_lambda=16).threshold == 4
    assert abort_threshold(0.5, 0.0, 0.5, 4, 16) == 8


def test_alpha_beta_bound_examples():
    assert alpha_beta_min(1, 2 ** -10, 0.5, 0.2) == pytest.approx(2105.4, rel=1e-3)
    assert alpha_beta_min(1, 2 ** -10, 0.5, 0.5) / alpha_beta_min(1, 2 ** -10, 0.5, 0.0) == pytest.approx(4)
    base = alpha_beta_min(1, 2 ** -10, 0.5, 0.2)
    halved = alpha_beta_min(1, 2 ** -11, 0.5, 0.2)
    extra = -36 * 1.5 ** 2 * np.log(0.5) / (0.5 * 0.64)
    assert halved - base == pytest.approx(extra)
    # as delta grows the bound falls toward its ln 4 floor
    loose = alpha_beta_min(1, 0.999, 0.5, 0.2)
    assert loose < base / 5
    assert loose == pytest.approx(36 * 2.25 * np.log(4 / 0.999) / 0.32)


def test_param_calc_balanced_split():
    res = param_calc(1, 2 ** -10, 0.5, 0.5, 0.25, 1)
    assert res["alpha"] == res["beta"] == 49 == res["L"]
    assert res["alpha"] ** 2 >= res["alpha_beta_min"] > 48 ** 2
    assert res["t"] == pytest.approx(0.5 * 0.5 * 0.75 ** 2 * 49)


@pytest.mark.parametrize("field,kw", [
    ("kappa", dict(kappa=1.0)), ("c", dict(c=0.0)), ("delta", dict(delta=1.5)),
    ("alpha", dict(alpha=-1)), ("L", dict(L=0)),
])
def test_invalid_params_name_the_field(field, kw):
    with pytest.raises(ConfigError) as err:
        proto(protocol="pi_p", N=16, n=4, **kw)
    assert err.value.field == field


def test_pi_n_requires_square():
    with pytest.raises(ConfigError, match="N"):
        proto(protocol="pi_n", N=15, n=4)


def test_pi_a_rejects_rate_above_one():
    with pytest.raises(ConfigError, match="alpha"):
        proto(protocol="pi_a", N=8, alpha=16, log2_lambda=1)


# Pi_p

def test_pi_p_plan_shape_and_hop_marginal():
    p = proto(protocol="pi_p", N=16, n=4, L=3)
    sigma = random_permutation_input(16, np.random.default_rng(0))
    plan = p.plan(sigma, 1)
    assert plan.paths.shape == (16, 4) and plan.rounds == 4
    assert np.array_equal(plan.paths[:, -1], [row[0][1] for row in sigma.parties])
    hops = np.concatenate([p.plan(sigma, s).paths[:, :3].ravel() for s in range(2100)])
    assert set(np.unique(hops)) == {0, 1, 2, 3}
    freq = np.bincount(hops) / len(hops)
    assert np.abs(freq - 0.25).max() < 0.02 * 0.25 * 4  # within 2 points of 25%


def test_pi_p_rejects_non_permutation():
    p = proto(protocol="pi_p", N=4, n=2, L=2)
    with pytest.raises(InputError):
        p.validate_input(InputVector.from_lists([[(b"a", 1)], [(b"b", 1)], [(b"c", 2)], [(b"d", 3)]]))


def test_pi_p_empty_message_to_self_allowed():
    p = proto(protocol="pi_p", N=4, n=2, L=2)
    sigma = permutation_input([0, 1, 2, 3], messages=[None, b"b", b"c", b"d"])
    res = run_kernel(p, sigma, seed=1)
    assert res.outputs()[0] == [None]


# Pi_a

def test_pi_a_dummy_layout():
    p = proto(protocol="pi_a", N=16, alpha=4, beta=4, log2_lambda=1)
    sigma = random_multiset_input(16, 2, np.random.default_rng(1))
    plan = p.plan(sigma, 5)
    M = sigma.total()
    assert (plan.kind[:M] == MESSAGE).all() and (plan.kind[M:] == DUMMY).all()
    L = p.params.path_length
    dummies = np.nonzero(plan.kind == DUMMY)[0]
    for u in dummies[:200]:
        r, k = int(plan.ckpt_round[u]), int(plan.partner[u])
        assert plan.paths[u, r - 1] == k and 1 <= r <= L
        nonces = plan.nonces(int(u))
        assert [i for i, n in enumerate(nonces) if n is not None] == [r - 1]
    # expected dummies per party: L * N * p = alpha * beta * log2_lambda^2
    per_party = len(dummies) / 16
    assert abs(per_party - 16) < 6


def test_pi_a_empty_input_only_dummies():
    p = proto(protocol="pi_a", N=8, alpha=2, beta=3, log2_lambda=1)
    plan = p.plan(InputVector(tuple(() for _ in range(8))), 0)
    assert plan.size > 0 and (plan.kind == DUMMY).all()


def test_pi_a_no_adversary_no_missing():
    p = proto(protocol="pi_a", N=16, alpha=4, beta=4, log2_lambda=1)
    res = run_kernel(p, random_multiset_input(16, 3, np.random.default_rng(2)), seed=3)
    assert res.missing.sum() == 0 and res.aborted_list() == [None] * 16


def test_pi_a_rejects_empty_message():
    p = proto(protocol="pi_a", N=4, alpha=1, beta=2, log2_lambda=1)
    with pytest.raises(InputError):
        p.validate_input(InputVector.from_lists([[(None, 1)], [], [], []]))


# Pi_n

def test_pi_n_padding_contract():
    p = proto(protocol="pi_n", N=16, n=4, alpha=2, log_lambda=4)
    assert p.params.packet_size_basic == 8
    sigma = random_permutation_input(16, np.random.default_rng(3))
    res = run_kernel(p, sigma, seed=2)
    round2 = res.volumes[1]
    assert len(round2) == 16 and (round2[:, 2] >= 8).all()
    # total = N + n^2 k (no overflow) + N, i.e. about N + alpha N log_lambda + N
    assert res.metrics.onions_sent == 16 + 16 * 8 + 16
    assert sorted(Counter(m for out in res.outputs() for m in out).values()) == [1] * 16


def test_pi_n_views_input_independent():
    p = proto(protocol="pi_n", N=64, n=8, alpha=2, log_lambda=8)
    s0 = random_permutation_input(64, np.random.default_rng(0))
    s1 = random_permutation_input(64, np.random.default_rng(1))
    a, b = run_kernel(p, s0, seed=9), run_kernel(p, s1, seed=9)
    assert a.plan.extra["overflow"] == 0
    assert all(np.array_equal(x, y) for x, y in zip(a.volumes, b.volumes))


# butterfly

def _brute_path(entry, exit_, B, H):
    width = H - 1
    digits = lambda x: [(x // B ** (width - 1 - i)) % B for i in range(width)]
    cur, path = digits(entry), [entry]
    target = digits(exit_)
    for step in range(width):
        cur[step] = target[step]
        path.append(sum(d * B ** (width - 1 - i) for i, d in enumerate(cur)))
    return path


def test_butterfly_example():
    assert butterfly_path(0, 5, 2, 4) == [0, 4, 4, 5]


@pytest.mark.parametrize("B,H", [(2, 4), (3, 3), (4, 4), (8, 2)])
def test_butterfly_matches_brute_force_and_adjacency(B, H):
    n = B ** (H - 1)
    rng = np.random.default_rng(B * H)
    entries, exits = rng.integers(0, n, 50), rng.integers(0, n, 50)
    paths = butterfly_paths(entries, exits, B, H)
    assert paths.shape == (50, H)
    for e, x, row in zip(entries, exits, paths):
        assert row.tolist() == _brute_path(int(e), int(x), B, H)
        for step in range(H - 1):
            assert butterfly_adjacency(B, H, step)[row[step], row[step + 1]]
    assert butterfly_path(3 % n, 3 % n, B, H) == [3 % n] * H


def test_butterfly_out_of_range():
    with pytest.raises(ValueError):
        butterfly_path(0, 8, 2, 4)


def test_butterfly_rounds_and_load():
    p = proto(protocol="pi_n_plus", N=2048, B=4, H=3, alpha=32, log2_lambda=1, d=0.5)
    assert p.params.processors == 16 and p.params.packet_size_butterfly == 48
    res = run_kernel(p, random_permutation_input(2048, np.random.default_rng(0)), seed=1)
    assert res.plan.rounds == 4
    assert res.plan.extra["overflow"] == 0
    assert res.metrics.server_load == pytest.approx(4 * 48)
    assert sorted(Counter(m for out in res.outputs() for m in out).values()) == [1] * 2048
