import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from onionlab.analysis.belief import belief_update
from onionlab.inputs import InputVector, distance
from onionlab.onion import Deliver, Nonce, Relay, make_scheme, peel_chain
from onionlab.protocols.pi_n import butterfly_path

N_KEYS = 8
SCHEMES = {b: make_scheme(b, max_hops=8, message_size=32) for b in ("ideal", "real")}
KEYS = {b: [s.gen(v, np.random.default_rng(v)) for v in range(N_KEYS)] for b, s in SCHEMES.items()}

paths = st.lists(st.integers(0, N_KEYS - 1), min_size=1, max_size=8)
nonce = st.one_of(st.none(), st.builds(Nonce, st.just("checkpt"), st.binary(min_size=1, max_size=16)))


@settings(max_examples=60, deadline=None)
@given(backend=st.sampled_from(["ideal", "real"]), path=paths,
       message=st.one_of(st.none(), st.binary(max_size=32)), data=st.data(), seed=st.integers(0, 2 ** 32))
def test_onion_round_trip(backend, path, message, data, seed):
    scheme, keys = SCHEMES[backend], KEYS[backend]
    nonces = data.draw(st.lists(nonce, min_size=len(path) - 1, max_size=len(path) - 1))
    onions = scheme.form_onion(message, path, [keys[v].public_key for v in path], nonces,
                               np.random.default_rng(seed))
    peeled = peel_chain(scheme, onions[0], path, [k.secret_key for k in keys])
    assert len(peeled) == len(path)
    for i, res in enumerate(peeled[:-1]):
        assert isinstance(res, Relay) and res.next == path[i + 1] and res.nonce == nonces[i]
    assert peeled[-1] == Deliver(message)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 8), data=st.data())
def test_belief_stays_probability_vector(n, data):
    weights = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))) + 1e-9
    X = weights / weights.sum()
    counts = np.array(data.draw(st.lists(st.integers(0, 20), min_size=n * n, max_size=n * n))).reshape(n, n)
    Y = belief_update(X, counts)
    assert (Y >= 0).all() and abs(Y.sum() - 1) < 1e-9


def _vector(draw_lists):
    return InputVector.from_lists([[(bytes([m]), r) for m, r in party] for party in draw_lists])


party = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=3)
vectors = st.lists(party, min_size=4, max_size=4).map(_vector)


@given(a=vectors, b=vectors)
def test_distance_symmetric(a, b):
    assert distance(a, b) == distance(b, a)
    assert distance(a, b, literal=True) == distance(b, a, literal=True)
    assert distance(a, a) == 0
    assert distance(a, b) <= distance(a, b, literal=True)


@given(B=st.integers(2, 5), H=st.integers(2, 4), data=st.data())
def test_butterfly_steps_change_one_digit(B, H, data):
    n = B ** (H - 1)
    entry, exit_ = data.draw(st.integers(0, n - 1)), data.draw(st.integers(0, n - 1))
    path = butterfly_path(entry, exit_, B, H)
    assert path[0] == entry and path[-1] == exit_ and len(path) == H

    def digits(x):
        return [(x // B ** i) % B for i in range(H - 1)]
    for u, v in zip(path, path[1:]):
        assert sum(a != b for a, b in zip(digits(u), digits(v))) <= 1
