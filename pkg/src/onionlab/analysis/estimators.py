"""Distinguishability estimators over binned view features.

Both estimators take two samples of a feature, one per input, and compare
their empirical distributions on a shared binning. Features may be scalars,
fixed-length tuples, or already-discrete labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_TRIALS = 30


def quantile_edges(x0, x1, bins: int) -> np.ndarray:
    """Interior bin edges at pooled quantiles (ties collapse, so fewer bins is possible)."""
    pooled = np.concatenate([np.asarray(x0, float), np.asarray(x1, float)])
    qs = np.quantile(pooled, np.linspace(0, 1, bins + 1)[1:-1])
    return np.unique(qs)


def _as_2d(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a.reshape(len(a), -1)


def shared_histograms(x0, x1, bins=None) -> tuple[np.ndarray, np.ndarray]:
    """Counts of both samples on one binning.

    ``bins=None`` treats every distinct feature value as its own bin. An int
    applies that many pooled-quantile bins per feature column.
    """
    a, b = _as_2d(x0), _as_2d(x1)
    if a.shape[1] != b.shape[1]:
        raise ValueError("feature dimensions differ")
    if bins is not None:
        cols_a, cols_b = [], []
        for c in range(a.shape[1]):
            edges = quantile_edges(a[:, c], b[:, c], bins)
            cols_a.append(np.searchsorted(edges, a[:, c], side="right"))
            cols_b.append(np.searchsorted(edges, b[:, c], side="right"))
        a, b = np.stack(cols_a, axis=1), np.stack(cols_b, axis=1)
    labels, inverse = np.unique(np.concatenate([a, b]), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    k = len(labels)
    return (np.bincount(inverse[:len(a)], minlength=k), np.bincount(inverse[len(a):], minlength=k))


def tv_from_counts(c0, c1) -> float:
    p0 = np.asarray(c0, float) / max(np.sum(c0), 1)
    p1 = np.asarray(c1, float) / max(np.sum(c1), 1)
    return 0.5 * float(np.abs(p0 - p1).sum())


@dataclass(frozen=True)
class TvEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    trials: int
    flagged: bool

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def tv_distance_estimate(x0, x1, bins=None, n_boot: int = 2000, level: float = 0.95,
                         rng: np.random.Generator | None = None) -> TvEstimate:
    """Plug-in total variation with a bootstrap interval on its sampling error.

    By the triangle inequality |TV(p0^, p1^) - TV(p0, p1)| is at most
    TV(p0^, p0) + TV(p1^, p1). The interval is the estimate plus or minus the
    bootstrap ``level`` quantile of that sum, so it keeps its coverage when
    the plug-in estimate is biased (as it is near 0, where a percentile or
    basic bootstrap interval misses). ``flagged`` marks samples too small for
    the interval to mean much.
    """
    if len(x0) != len(x1):
        raise ValueError("sample sizes differ")
    rng = rng or np.random.default_rng(0)
    c0, c1 = shared_histograms(x0, x1, bins)
    n0, n1 = int(c0.sum()), int(c1.sum())
    if n0 == 0:
        return TvEstimate(0.0, 0.0, 1.0, 0, True)
    est = tv_from_counts(c0, c1)
    p0, p1 = c0 / n0, c1 / n1
    dev = (0.5 * np.abs(rng.multinomial(n0, p0, size=n_boot) / n0 - p0).sum(axis=1)
           + 0.5 * np.abs(rng.multinomial(n1, p1, size=n_boot) / n1 - p1).sum(axis=1))
    half = float(np.quantile(dev, level))
    return TvEstimate(est, max(0.0, est - half), min(1.0, est + half), n0, n0 < MIN_TRIALS)


def delta_profile(p0, p1, eps: float) -> float:
    """Smallest delta such that both directions satisfy P[S] <= e^eps P'[S] + delta for every S."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    if math.isinf(eps):
        return float(max(p0[p1 == 0].sum(), p1[p0 == 0].sum()))
    f = math.exp(eps)
    return float(max(np.maximum(p0 - f * p1, 0).sum(), np.maximum(p1 - f * p0, 0).sum()))


def epsilon_for_delta(p0, p1, delta: float, tol: float = 1e-9) -> float:
    """inf{eps >= 0 : delta_profile(eps) <= delta}; infinity when no finite eps works."""
    if delta_profile(p0, p1, math.inf) > delta:
        return math.inf
    if delta_profile(p0, p1, 0.0) <= delta:
        return 0.0
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    both = (p0 > 0) & (p1 > 0)
    hi = float(np.abs(np.log(p0[both] / p1[both])).max()) if both.any() else 0.0
    lo = 0.0
    # the profile is non-increasing in eps and reaches its floor at the largest log-ratio
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if delta_profile(p0, p1, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class DpEstimate:
    eps_hat: float
    delta_hat: float
    trials: int
    feature: str
    eps_target: float
    delta_target: float

    def passes(self, eps_bound: float | None = None) -> bool:
        bound = self.eps_target if eps_bound is None else eps_bound
        return self.eps_hat <= bound


def dp_ratio_estimate(x0, x1, eps_target: float, delta_target: float, bins=None,
                      feature: str = "") -> DpEstimate:
    """Empirical privacy loss of a feature under two neighbouring inputs.

    ``eps_hat`` is the smallest eps whose empirical delta stays within
    ``delta_target``; bins that one input never produced count toward delta,
    never toward an infinite ratio unless their mass alone exceeds it.
    ``delta_hat`` is the empirical delta at ``eps_target``.
    """
    c0, c1 = shared_histograms(x0, x1, bins)
    p0, p1 = c0 / max(c0.sum(), 1), c1 / max(c1.sum(), 1)
    return DpEstimate(epsilon_for_delta(p0, p1, delta_target), delta_profile(p0, p1, eps_target),
                      int(min(c0.sum(), c1.sum())), feature, eps_target, delta_target)
