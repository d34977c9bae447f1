"""Exact numeric checks of the binomial ratio band, the tail bound, and balls-in-bins loads."""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import stats

from ..protocols.params import alpha_beta_min

EXACT_SCAN_LIMIT = 20000


def band_shrink(eps: float) -> float:
    """d' = (eps/2) / (1 + eps/2), the relative half-width of the band around the mean."""
    return (eps / 2) / (1 + eps / 2)


def log_pmf(n: int, prob, y: int, dps: int = 40):
    """log Binomial(n, prob) pmf at y, via log-gamma at ``dps`` digits."""
    with mpmath.workdps(dps):
        prob = mpmath.mpf(prob)
        return (mpmath.loggamma(n + 1) - mpmath.loggamma(y + 1) - mpmath.loggamma(n - y + 1)
                + y * mpmath.log(prob) + (n - y) * mpmath.log1p(-prob))


def adjacent_ratio(n: int, prob: float, y) -> np.ndarray:
    """f(y+1)/f(y) = (n - y) prob / ((y + 1)(1 - prob)), closed form."""
    y = np.asarray(y, dtype=float)
    return (n - y) * prob / ((y + 1) * (1 - prob))


def _band_scan(n: int, prob: float, eps: float, dps: int) -> dict:
    mean = n * prob
    dp = band_shrink(eps)
    lo = max(0, math.ceil((1 - dp) * mean - 1e-9))
    hi = min(n - 1, math.floor((1 + dp) * mean + 1e-9))
    ys = np.arange(lo, hi + 1)
    spec_index = math.floor((1 - dp) * mean)
    if not len(ys):
        # no integer in the band: nothing to bound
        return {"n": n, "prob": prob, "mean": mean, "band": (lo, hi), "max_ratio": 1.0,
                "argmax": None, "lower_end_ratio": None, "upper_end_ratio": None,
                "closed_form_max": 1.0, "routes_agree": True, "floor_index": spec_index,
                "floor_index_ratio": None}
    closed = adjacent_ratio(n, prob, ys)
    closed_sym = np.maximum(closed, 1 / closed)
    if len(ys) <= EXACT_SCAN_LIMIT:
        scan = ys
    else:
        # the closed-form ratio is monotone in y, so the band maximum sits at an end
        scan = np.array([lo, lo + 1, hi - 1, hi])
    with mpmath.workdps(dps):
        lp = {int(y): log_pmf(n, prob, int(y), dps) for y in np.unique(np.concatenate([scan, scan + 1]))}
        exact = np.array([float(mpmath.exp(abs(lp[int(y)] - lp[int(y) + 1]))) for y in scan])
    k = int(np.argmax(exact))
    return {
        "n": n, "prob": prob, "mean": mean, "band": (lo, hi),
        "max_ratio": float(exact[k]), "argmax": int(scan[k]),
        "lower_end_ratio": float(closed_sym[0]), "upper_end_ratio": float(closed_sym[-1]),
        "closed_form_max": float(closed_sym.max()),
        "routes_agree": bool(abs(float(closed_sym.max()) - float(exact.max())) <= 1e-9 * float(exact.max())),
        "floor_index": spec_index,
        "floor_index_ratio": float(max(adjacent_ratio(n, prob, spec_index),
                                       1 / adjacent_ratio(n, prob, spec_index))),
    }


def binomial_ratio_oracle(G: int, q: float, H: int, p: float, eps: float, dps: int = 40) -> dict:
    """Largest adjacent-pmf ratio of Binomial(G, q) and Binomial(H, p) over their d'-bands.

    Passes when each is at most 1 + eps/2 and their product at most e^eps.
    Parameters with a success probability of 1/2 or more are outside the
    regime the bound is stated for and come back flagged rather than failed.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    y_side = _band_scan(int(G), float(q), eps, dps)
    x_side = _band_scan(int(H), float(p), eps, dps)
    bound = 1 + eps / 2
    in_regime = q < 0.5 and p < 0.5
    product = y_side["max_ratio"] * x_side["max_ratio"]
    ok = y_side["max_ratio"] <= bound and x_side["max_ratio"] <= bound and product <= math.exp(eps)
    return {"y": y_side, "x": x_side, "bound": bound, "product": product,
            "product_bound": math.exp(eps), "in_regime": in_regime,
            "passed": bool(ok) if in_regime else None}


def chernoff_two_sided(mean: float, rel: float) -> float:
    """2 exp(-mean * rel^2 / 3), the two-sided multiplicative Chernoff bound."""
    return 2 * math.exp(-mean * rel * rel / 3)


def binomial_two_sided_tail(n: int, prob: float, rel: float) -> float:
    """Exact P(|Y - E[Y]| >= rel * E[Y]) for Y ~ Binomial(n, prob)."""
    mean = n * prob
    low = math.floor(mean * (1 - rel) + 1e-12)
    high = math.ceil(mean * (1 + rel) - 1e-12)
    dist = stats.binom(n, prob)
    lower = dist.cdf(low) if low >= 0 else 0.0
    return float(lower + dist.sf(high - 1))


def tail_bound_oracle(eps: float, delta: float, c: float, kappa: float, log2_lambda: float = 1.0,
                      alpha_beta: float | None = None, N: int = 64, L: int | None = None) -> dict:
    """Closed-form alpha*beta bound and the tail checks behind it.

    At ``alpha_beta`` (default: the bound itself) the Chernoff estimate of the
    Y tail must be at most delta/2. The exact binomial tails of Y and X at
    the same band are reported next to their Chernoff bounds; ``N`` and ``L``
    only fix the binomial sizes (L defaults to the balanced split).
    """
    ab_min = alpha_beta_min(eps, delta, c, kappa)
    ab = ab_min if alpha_beta is None else alpha_beta
    rel = band_shrink(eps)
    mean_y = (1 - kappa) ** 2 * (1 - c) * ab * log2_lambda ** 2 / 3
    chern_y = chernoff_two_sided(mean_y, rel)

    if L is None:
        L = max(1, math.ceil(math.sqrt(ab) * log2_lambda))
    alpha = ab / (L / log2_lambda)
    G = max(1, round(L * (1 - kappa) ** 2 * N * N / 3))
    q = mean_y / G
    H = L * N
    p = alpha * log2_lambda / N
    exact_y = binomial_two_sided_tail(G, q, rel)
    exact_x = binomial_two_sided_tail(H, p, rel) if p <= 1 else float("nan")
    chern_x = chernoff_two_sided(H * p, rel)
    return {
        "alpha_beta_min": ab_min, "alpha_beta": ab, "band": rel,
        "mean_y": mean_y, "chernoff_y": chern_y, "chernoff_ok": chern_y <= delta / 2 * (1 + 1e-9),
        "G": G, "q": q, "exact_y": exact_y, "H": H, "p": p, "exact_x": exact_x,
        "chernoff_x": chern_x,
        "exact_below_chernoff": bool(exact_y <= chern_y and (math.isnan(exact_x) or exact_x <= chern_x)),
    }


def chernoff_regime_check(N: int, n: int, d: float, trials: int, k: int | None = None,
                          rng: np.random.Generator | None = None) -> dict:
    """Throw N balls into n bins ``trials`` times and count load-band violations.

    Part (a) checks every bin against (1 +/- d) N/n; part (b) checks the
    heaviest and lightest ``k`` bins (default n/4, at least 1) against
    (1 +/- d) kN/n, which covers every k-subset at once.
    """
    rng = rng or np.random.default_rng(0)
    k = max(1, n // 4) if k is None else k
    if not 1 <= k <= n:
        raise ValueError("k must be in [1, n]")
    loads = rng.multinomial(N, np.full(n, 1.0 / n), size=trials)
    mean = N / n
    bad_a = (loads.max(axis=1) > (1 + d) * mean) | (loads.min(axis=1) < (1 - d) * mean)
    srt = np.sort(loads, axis=1)
    top, bottom = srt[:, -k:].sum(axis=1), srt[:, :k].sum(axis=1)
    bad_b = (top > (1 + d) * k * mean) | (bottom < (1 - d) * k * mean)
    return {
        "N": N, "n": n, "d": d, "k": k, "trials": trials,
        "violations_a": int(bad_a.sum()), "violations_b": int(bad_b.sum()),
        "max_deviation": float(np.abs(loads - mean).max() / mean) if trials else 0.0,
        "chernoff_a": min(1.0, n * chernoff_two_sided(mean, d)),
    }
