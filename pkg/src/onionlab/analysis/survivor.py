"""Survival of checkpoint dummies exchanged between honest parties, against aborts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernels import NEVER
from ..protocols.base import DUMMY


@dataclass(frozen=True)
class SurvivorReport:
    survival: np.ndarray      # survival[r-1]: unmarked dummies not dropped in rounds 1..r-1
    aborted_by: np.ndarray    # aborted_by[r-1]: some honest party aborted in rounds 1..r
    violations: tuple         # rounds r where neither held
    unmarked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def unmarked_dummies(plan, corrupted: np.ndarray) -> np.ndarray:
    """Checkpoint dummies whose creator and partner are both honest."""
    if plan.partner is None:
        return np.zeros(plan.size, dtype=bool)
    partner = np.where(plan.partner >= 0, plan.partner, 0)
    return (plan.kind == DUMMY) & ~corrupted[plan.creator] & ~corrupted[partner] & (plan.partner >= 0)


def survivor_accounting(result, c: float, slack: float = 0.05, last_round: int | None = None) -> SurvivorReport:
    """For every round r up to ``last_round`` (default L/2), check that some honest
    party had aborted by r or at least 1 - c - slack of unmarked dummies survived r - 1 rounds.
    """
    plan = result.plan
    L = plan.rounds - 1
    last = L // 2 if last_round is None else last_round
    mask = unmarked_dummies(plan, result.corrupted)
    dropped = result.dropped_round[mask]
    total = int(mask.sum())
    rounds = np.arange(1, last + 1)
    if total:
        # dropped in rounds 1..r-1
        lost = np.array([(dropped[(dropped > 0)] <= r - 1).sum() for r in rounds])
        survival = 1 - lost / total
    else:
        survival = np.ones(len(rounds))
    honest_aborts = result.aborted[~result.corrupted]
    first = int(honest_aborts.min()) if len(honest_aborts) else NEVER
    aborted_by = rounds >= first
    viol = tuple(int(r) for r, s, a in zip(rounds, survival, aborted_by) if not a and s < 1 - c - slack)
    return SurvivorReport(survival, aborted_by, viol, total)
