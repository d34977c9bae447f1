"""Protocol parameters and the closed-form derivations the CLI exposes."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ProtocolParams:
    protocol: str = "pi_p"
    N: int = 16
    n: int = 4
    L: int | None = None
    alpha: float = 1.0
    beta: float = 1.0
    c: float = 0.5
    d: float = 0.5
    kappa: float = 0.0
    eps: float = 1.0
    delta: float = 2.0 ** -10
    t: float | None = None
    session: int = 0
    B: int = 2
    H: int = 2
    log2_lambda: float = 1.0
    log_lambda: float = 1.0
    message_size: int = 64
    missing_mode: str = "per_round"
    prf: str = "random"
    group: str = "safe256"
    servers: tuple | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown protocol parameter")
        data = dict(data)
        if data.get("servers") is not None:
            data["servers"] = tuple(int(s) for s in data["servers"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if out["servers"] is not None:
            out["servers"] = list(out["servers"])
        return out

    def replace(self, **kw) -> "ProtocolParams":
        return dataclasses.replace(self, **kw)

    # derived quantities

    @property
    def path_length(self) -> int:
        if self.L is not None:
            return int(self.L)
        return int(math.ceil(self.beta * self.log2_lambda - 1e-9))

    @property
    def threshold(self) -> float:
        if self.t is not None:
            return float(self.t)
        return abort_threshold(self.c, self.d, self.kappa, self.alpha, self.log2_lambda)

    @property
    def checkpoint_rate(self) -> float:
        """Expected checkpoints a party expects per round (alpha * log^2 lambda)."""
        return self.alpha * self.log2_lambda

    @property
    def packet_size_basic(self) -> int:
        return int(math.ceil(self.alpha * self.log_lambda - 1e-9))

    @property
    def packet_size_butterfly(self) -> int:
        return int(math.ceil((1 + self.d) * self.alpha * self.log2_lambda - 1e-9))

    @property
    def processors(self) -> int:
        return self.B ** (self.H - 1)


def abort_threshold(c: float, d: float, kappa: float, alpha: float, log2_lambda: float) -> float:
    """Per-round missing-checkpoint count above which an honest party aborts."""
    return c * (1 - d) * (1 - kappa) ** 2 * alpha * log2_lambda


def alpha_beta_min(eps: float, delta: float, c: float, kappa: float) -> float:
    """Smallest alpha*beta for which the active-adversary protocol is (eps, delta)-DP."""
    return -36 * (1 + eps / 2) ** 2 * math.log(delta / 4) / ((1 - c) * (1 - kappa) ** 2 * eps ** 2)


def param_calc(eps: float, delta: float, c: float, d: float, kappa: float, log2_lambda: float) -> dict:
    """Threshold, alpha*beta bound and a balanced alpha = beta split."""
    validate_ranges(eps=eps, delta=delta, c=c, d=d, kappa=kappa)
    ab = alpha_beta_min(eps, delta, c, kappa)
    side = math.ceil(math.sqrt(ab))
    return {
        "alpha_beta_min": ab,
        "alpha": side,
        "beta": side,
        "t": abort_threshold(c, d, kappa, side, log2_lambda),
        "L": int(math.ceil(side * log2_lambda - 1e-9)),
    }


def validate_ranges(**values) -> None:
    rules = {
        "eps": lambda v: v > 0,
        "delta": lambda v: 0 < v < 1,
        "c": lambda v: 0 < v < 1,
        "d": lambda v: 0 < v < 1,
        "kappa": lambda v: 0 <= v < 1,
        "alpha": lambda v: v > 0,
        "beta": lambda v: v > 0,
        "log2_lambda": lambda v: v > 0,
        "log_lambda": lambda v: v > 0,
    }
    for name, v in values.items():
        if name in rules and not rules[name](v):
            raise ConfigError(name, f"value {v!r} out of range")


def validate(params: ProtocolParams) -> None:
    validate_ranges(eps=params.eps, delta=params.delta, c=params.c, d=params.d,
                    kappa=params.kappa, alpha=params.alpha, beta=params.beta,
                    log2_lambda=params.log2_lambda, log_lambda=params.log_lambda)
    if params.N < 1:
        raise ConfigError("N", "need at least one party")
    if params.missing_mode not in ("per_round", "cumulative"):
        raise ConfigError("missing_mode", "expected per_round or cumulative")
    if params.prf not in ("random", "hash", "dh"):
        raise ConfigError("prf", "expected random, hash or dh")
    if params.L is not None and params.L < 0:
        raise ConfigError("L", "path length must be non-negative")
