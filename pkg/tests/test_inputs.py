from collections import Counter

import numpy as np
import pytest

from onionlab.inputs import (InputError, InputVector, add_message, distance, permutation_input,
                             random_multiset_input, random_permutation_input, swap_recipients)


def test_distance_examples():
    s = permutation_input([1, 2, 0, 3])
    assert distance(s, s) == 0
    assert distance(s, swap_recipients(s, 0, 1)) == 2
    assert distance(s, add_message(s, 2, 3, b"extra")) == 1
    assert distance(s, swap_recipients(s, 0, 1), literal=True) == 4
    assert distance(s, add_message(s, 2, 3, b"extra"), literal=True) == 1


def test_permutation_input_is_simple():
    s = random_permutation_input(16, np.random.default_rng(0))
    assert s.is_simple() and s.total() == 16
    assert not add_message(s, 0, 1, b"y").is_simple()


def test_permutation_input_rejects_non_permutation():
    with pytest.raises(InputError):
        permutation_input([0, 0, 1])


def test_expected_outputs_multiset():
    s = InputVector.from_lists([[(b"a", 1), (b"a", 1)], [(b"b", 0)], []])
    exp = s.expected_outputs()
    assert exp[1] == Counter({b"a": 2}) and exp[0] == Counter({b"b": 1}) and exp[2] == Counter()


def test_validate():
    s = InputVector.from_lists([[(b"a", 5)]])
    with pytest.raises(InputError):
        s.validate(1, 64)
    with pytest.raises(InputError):
        InputVector.from_lists([[(b"x" * 100, 0)]]).validate(1, 64)


def test_json_round_trip():
    s = random_multiset_input(6, 3, np.random.default_rng(2))
    assert InputVector.from_json(s.to_json()) == s


def test_multiset_bounds():
    s = random_multiset_input(20, 4, np.random.default_rng(3))
    assert all(len(row) <= 4 for row in s.parties)
