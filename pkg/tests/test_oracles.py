import math

import pytest

from onionlab.analysis.oracles import (adjacent_ratio, band_shrink, binomial_ratio_oracle,
                                       binomial_two_sided_tail, chernoff_regime_check,
                                       chernoff_two_sided, tail_bound_oracle)
from onionlab.protocols.params import alpha_beta_min


def test_band_shrink():
    assert band_shrink(1.0) == pytest.approx(1 / 3)


def test_ratio_band_example():
    r = binomial_ratio_oracle(100_000, 1e-3, 100_000, 1e-3, 1.0)
    y = r["y"]
    assert y["max_ratio"] == pytest.approx(1.47107, abs=1e-5)
    assert y["argmax"] == 67 == y["band"][0]
    assert y["routes_agree"]
    # the floored index sits one below the band and gives a larger ratio
    assert y["floor_index"] == 66 and y["floor_index_ratio"] == pytest.approx(1.49305, abs=1e-5)
    assert r["passed"] and r["product"] <= math.e


def test_large_eps_tiny_mean_passes():
    assert binomial_ratio_oracle(50, 0.01, 50, 0.01, 10.0)["passed"]


def test_failing_band_reported():
    r = binomial_ratio_oracle(100_000, 1e-3, 400, 0.25, 1.0)
    assert r["passed"] is False and r["x"]["max_ratio"] > r["bound"]


def test_out_of_regime_flagged_not_failed():
    r = binomial_ratio_oracle(100, 0.6, 100, 0.1, 1.0)
    assert r["in_regime"] is False and r["passed"] is None


def test_closed_form_ratio():
    assert adjacent_ratio(10, 0.5, 4) == pytest.approx(6 / 5)


def test_tail_oracle_example():
    t = tail_bound_oracle(1, 2 ** -10, 0.5, 0.2)
    assert t["alpha_beta_min"] == pytest.approx(2105.4, rel=1e-3)
    assert t["chernoff_ok"] and t["exact_below_chernoff"]
    assert t["exact_y"] <= 2 ** -11


def test_tail_bound_kappa_and_delta():
    assert alpha_beta_min(1, 2 ** -10, 0.5, 0.5) == pytest.approx(4 * alpha_beta_min(1, 2 ** -10, 0.5, 0))
    values = [alpha_beta_min(1, d, 0.5, 0.2) for d in (1e-6, 1e-3, 0.1, 0.9, 0.9999)]
    assert values == sorted(values, reverse=True) and values[-1] > 0


def test_exact_tail_below_chernoff():
    for n, p in ((1000, 0.1), (5000, 0.02), (200, 0.3)):
        assert binomial_two_sided_tail(n, p, 0.3) <= chernoff_two_sided(n * p, 0.3)


def test_chernoff_regime():
    one = chernoff_regime_check(500, 1, 0.5, 10)
    assert one["max_deviation"] == 0 and one["violations_a"] == 0
    full = chernoff_regime_check(100, 8, 0.5, 20, k=8)
    assert full["violations_b"] == 0
    assert chernoff_regime_check(4096, 16, 0.5, 1000)["violations_a"] == 0
    with pytest.raises(ValueError):
        chernoff_regime_check(10, 4, 0.5, 1, k=5)
