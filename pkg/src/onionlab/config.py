"""Run configurations: YAML in, validated dataclass out.

A config fully determines an experiment. Its hash (over the normalized
form, not the file text) goes into every report.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .adversary import AdversaryConfig
from .protocols import PROTOCOLS, get_protocol
from .protocols.params import ConfigError, ProtocolParams, validate

EXPERIMENTS = ("roundtrip", "correctness", "metrics", "mixing", "tv", "dp",
               "survivor", "packets", "oracles")
INPUT_KINDS = ("permutation", "multiset", "swap", "add", "explicit")
PAIRED = ("tv", "dp")
SIMULATORS = ("kernel", "engine")
MAX_GRID_POINTS = 256


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    params: ProtocolParams
    adversary: AdversaryConfig
    inputs: dict
    trials: int
    seed: int = 0
    backend: str = "ideal"
    simulator: str = "kernel"
    feature: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    budget_seconds: float | None = None
    outputs: dict = field(default_factory=dict)

    @property
    def protocol(self) -> str:
        return self.params.protocol

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "params": self.params.to_dict(),
            "adversary": self.adversary.to_dict(), "inputs": self.inputs,
            "trials": self.trials, "seed": self.seed, "backend": self.backend,
            "simulator": self.simulator, "feature": self.feature, "checks": self.checks,
            "options": self.options, "budget_seconds": self.budget_seconds,
        }

    def digest(self) -> str:
        # outputs only choose where files go; they do not change results
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def _require(data: dict, key: str, types, where: str = ""):
    name = f"{where}{key}"
    if key not in data:
        raise ConfigError(name, "missing")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise ConfigError(name, f"expected {types.__name__}, got {value!r}")
    return value


def parse_config(data: dict) -> RunConfig:
    """Validate a raw mapping; every error names the offending field."""
    if not isinstance(data, dict):
        raise ConfigError("config", "expected a mapping at top level")
    known = {"experiment", "params", "adversary", "inputs", "trials", "seed", "backend",
             "simulator", "feature", "checks", "options", "budget_seconds", "outputs", "grid"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    data = copy.deepcopy(data)
    experiment = _require(data, "experiment", str)
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")

    raw = data.get("params") or {}
    if not isinstance(raw, dict):
        raise ConfigError("params", "expected a mapping")
    try:
        params = ProtocolParams.from_dict(raw)
    except TypeError as exc:
        raise ConfigError("params", str(exc)) from None
    if params.protocol not in PROTOCOLS:
        raise ConfigError("params.protocol", f"unknown protocol {params.protocol!r}")
    try:
        validate(params)
        get_protocol(params.protocol, params)
    except ConfigError as exc:
        raise ConfigError(f"params.{exc.field}", str(exc).split(": ", 1)[-1]) from None

    raw_adv = data.get("adversary") or {}
    if not isinstance(raw_adv, dict):
        raise ConfigError("adversary", "expected a mapping")
    # one kappa drives both the threshold and the corrupted set unless set apart
    raw_adv.setdefault("kappa", params.kappa)
    adversary = AdversaryConfig.from_dict(raw_adv)

    inputs = data.get("inputs") or {"kind": "permutation"}
    if not isinstance(inputs, dict) or inputs.get("kind") not in INPUT_KINDS:
        raise ConfigError("inputs.kind", f"expected one of {', '.join(INPUT_KINDS)}")
    if experiment in PAIRED and inputs["kind"] not in ("swap", "add", "explicit"):
        raise ConfigError("inputs.kind", f"{experiment} needs a pair of inputs (swap, add or explicit)")
    if inputs["kind"] == "explicit" and "sigma0" not in inputs:
        raise ConfigError("inputs.sigma0", "missing")

    trials = _require(data, "trials", int)
    if trials < 1:
        raise ConfigError("trials", "must be at least 1")
    seed = int(data.get("seed", 0))
    backend = data.get("backend", "ideal")
    if backend not in ("ideal", "real"):
        raise ConfigError("backend", f"unknown backend {backend!r}")
    simulator = data.get("simulator", "kernel")
    if simulator not in SIMULATORS:
        raise ConfigError("simulator", f"unknown simulator {simulator!r}")
    budget = data.get("budget_seconds")
    if budget is not None and (not isinstance(budget, (int, float)) or budget <= 0):
        raise ConfigError("budget_seconds", "must be a positive number")
    for key in ("feature", "checks", "options", "outputs"):
        if not isinstance(data.get(key) or {}, dict):
            raise ConfigError(key, "expected a mapping")
    return RunConfig(experiment, params, adversary, inputs, trials, seed, backend, simulator,
                     data.get("feature") or {}, data.get("checks") or {},
                     data.get("options") or {}, budget, data.get("outputs") or {})


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        return yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None


def load_config(path) -> RunConfig:
    return parse_config(load_yaml(path))


def set_dotted(data: dict, key: str, value) -> dict:
    """Copy of ``data`` with ``a.b.c`` set to ``value``."""
    out = copy.deepcopy(data)
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "path runs through a non-mapping")
    node[parts[-1]] = value
    return out


def expand_grid(data: dict, cap: int = MAX_GRID_POINTS) -> list[tuple[dict, dict]]:
    """(point, config mapping) for every combination in ``grid``, in key order.

    A key naming several dotted paths joined by commas takes a list of
    tuples and moves those paths together instead of crossing them.
    """
    grid = data.get("grid") or {}
    if not isinstance(grid, dict):
        raise ConfigError("grid", "expected a mapping of dotted keys to value lists")
    base = {k: v for k, v in data.items() if k != "grid"}
    points = [{}]
    for key in sorted(grid):
        values = grid[key]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid.{key}", "expected a non-empty list")
        names = [k.strip() for k in key.split(",")]
        if len(names) > 1:
            bad = [v for v in values if not isinstance(v, list) or len(v) != len(names)]
            if bad:
                raise ConfigError(f"grid.{key}", f"expected lists of {len(names)} values")
            choices = [dict(zip(names, v)) for v in values]
        else:
            choices = [{key: v} for v in values]
        points = [dict(p, **c) for p in points for c in choices]
        if len(points) > cap:
            raise ConfigError("grid", f"{len(points)}+ points exceeds the cap of {cap}")
    out = []
    for point in points:
        cfg = base
        for key, value in point.items():
            cfg = set_dotted(cfg, key, value)
        out.append((point, cfg))
    return out
