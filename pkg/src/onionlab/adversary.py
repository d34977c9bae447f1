"""Adversary classes and drop strategies.

Corrupted parties follow the protocol except that a strategy may tell them to
drop an onion they received (covert-drop model). Strategies never see anything
a corrupted party would not learn itself: the link an onion arrived on, the
next hop and nonce revealed by peeling it, and the adversary's own coins.

Every strategy is written once, as a vectorized ``drop_mask``; the onion-level
engine calls it with length-1 arrays and the array kernels call it per round.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .protocols.params import ConfigError

CLASSES = ("network", "passive", "active")


@dataclass(frozen=True)
class NoDrop:
    def drop_mask(self, rnd, prev, nxt, ckpt_here, coins):
        return np.zeros(np.shape(coins), dtype=bool)

    def describe(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class DropAllFrom:
    """Drop every onion whose previous hop is ``target`` (optionally only in some rounds)."""

    target: int
    rounds: tuple | None = None

    def drop_mask(self, rnd, prev, nxt, ckpt_here, coins):
        mask = np.asarray(prev) == self.target
        if self.rounds is not None:
            mask = mask & np.isin(rnd, self.rounds)
        return mask

    def describe(self):
        return {"kind": "drop_all_from", "target": self.target,
                "rounds": None if self.rounds is None else list(self.rounds)}


@dataclass(frozen=True)
class DropFraction:
    rate: float
    scope: str = "all"
    target: int | None = None

    def __post_init__(self):
        if not 0 <= self.rate <= 1:
            raise ConfigError("strategy.rate", f"{self.rate} not in [0, 1]")
        if self.scope not in ("all", "from-target", "to-target"):
            raise ConfigError("strategy.scope", f"unknown scope {self.scope!r}")
        if self.scope != "all" and self.target is None:
            raise ConfigError("strategy.target", "scoped DropFraction needs a target")

    def drop_mask(self, rnd, prev, nxt, ckpt_here, coins):
        mask = np.asarray(coins) < self.rate
        if self.scope == "from-target":
            mask = mask & (np.asarray(prev) == self.target)
        elif self.scope == "to-target":
            mask = mask & (np.asarray(nxt) == self.target)
        return mask

    def describe(self):
        return {"kind": "drop_fraction", "rate": self.rate, "scope": self.scope, "target": self.target}


@dataclass(frozen=True)
class DropUnmatchedAtCorrupted:
    """Drop everything except the onions that reveal a checkpoint to the corrupted holder."""

    def drop_mask(self, rnd, prev, nxt, ckpt_here, coins):
        return ~np.asarray(ckpt_here, dtype=bool)

    def describe(self):
        return {"kind": "drop_unmatched"}


_REQUIRED = {"drop_all_from": ("target",), "drop_fraction": ("rate",)}


def strategy_from_dict(data: dict | None):
    if not data:
        return NoDrop()
    data = dict(data)
    kind = data.pop("kind", "none")
    if kind == "none":
        return NoDrop()
    missing = [k for k in _REQUIRED.get(kind, ()) if k not in data]
    if missing:
        raise ConfigError(f"adversary.strategy.{missing[0]}", f"{kind} needs {missing[0]}")
    if kind == "drop_all_from":
        rounds = data.get("rounds")
        return DropAllFrom(int(data["target"]), None if rounds is None else tuple(rounds))
    if kind == "drop_fraction":
        return DropFraction(float(data["rate"]), data.get("scope", "all"), data.get("target"))
    if kind == "drop_unmatched":
        return DropUnmatchedAtCorrupted()
    raise ConfigError("adversary.strategy.kind", f"unknown strategy {kind!r}")


@dataclass(frozen=True)
class AdversaryConfig:
    kind: str = "network"
    kappa: float = 0.0
    selection: tuple | None = None
    population: str = "all"  # "all" parties or "servers"
    strategy: object = field(default_factory=NoDrop)

    def __post_init__(self):
        if self.kind not in CLASSES:
            raise ConfigError("adversary.kind", f"unknown class {self.kind!r}")
        if not 0 <= self.kappa < 1:
            raise ConfigError("adversary.kappa", f"{self.kappa} not in [0, 1)")
        if self.population not in ("all", "servers"):
            raise ConfigError("adversary.population", "expected all or servers")
        if self.strategy is None:
            object.__setattr__(self, "strategy", NoDrop())

    @classmethod
    def from_dict(cls, data: dict | None) -> "AdversaryConfig":
        data = dict(data or {})
        sel = data.get("selection")
        return cls(kind=data.get("kind", "network"), kappa=float(data.get("kappa", 0.0)),
                   selection=None if sel is None else tuple(int(x) for x in sel),
                   population=data.get("population", "all"),
                   strategy=strategy_from_dict(data.get("strategy")))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa,
                "selection": None if self.selection is None else list(self.selection),
                "population": self.population, "strategy": self.strategy.describe()}


def select_corrupted(N: int, kappa: float, seed: int, override=None, population=None) -> tuple:
    """floor(kappa * |population|) distinct parties, uniform, fixed before round 1."""
    if not 0 <= kappa < 1:
        raise ConfigError("kappa", f"{kappa} not in [0, 1)")
    if override is not None:
        return tuple(sorted(int(x) for x in override))
    pool = np.arange(N) if population is None else np.asarray(sorted(population))
    k = int(np.floor(kappa * len(pool)))
    if k == 0:
        return ()
    chosen = rngmod.substream(seed, "corrupt").choice(pool, size=k, replace=False)
    return tuple(sorted(int(x) for x in chosen))


class Adversary:
    """Per-run adversary: the selected set, the strategy and a drop log."""

    def __init__(self, config: AdversaryConfig, N: int, seed: int, servers=None):
        self.config = config
        pop = servers if config.population == "servers" else None
        self.selected = frozenset(select_corrupted(N, config.kappa, seed, config.selection, pop))
        self.coin_seed = rngmod.subseed(seed, "adversary-coins")
        self.log: list[dict] = []

    @property
    def kind(self):
        return self.config.kind

    def monitors(self, party) -> bool:
        return self.config.kind in ("passive", "active") and party in self.selected

    def corrupts(self, party) -> bool:
        return self.config.kind == "active" and party in self.selected

    def corrupted_mask(self, n_nodes: int) -> np.ndarray:
        mask = np.zeros(n_nodes, dtype=bool)
        if self.config.kind == "active":
            mask[list(self.selected)] = True
        return mask

    def coins(self, uid, rnd):
        return rngmod.coin(self.coin_seed, uid, rnd)

    def on_relay(self, party, uid, rnd, prev, nxt, ckpt_here, handle=None) -> bool:
        """True to drop. Only consulted for corrupted parties; every decision is logged."""
        if not self.corrupts(party):
            return False
        c = float(self.coins(uid, rnd))
        drop = bool(self.config.strategy.drop_mask(
            np.array([rnd]), np.array([prev]), np.array([-1 if nxt is None else nxt]),
            np.array([ckpt_here]), np.array([c]))[0])
        self.log.append({"round": rnd, "party": party, "from": prev, "onion": handle,
                         "coin": c, "drop": drop})
        return drop
