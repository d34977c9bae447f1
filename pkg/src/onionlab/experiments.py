"""Seeded trial batches, summaries and verdicts.

Every experiment kind maps one trial index to a list of flat rows; the
summary is a pure fold over the rows. Trial ``i`` running input ``j`` uses
the seed ``subseed(seed, "trial", i, j)``, so results do not depend on the
worker count or on which trials ran first.
"""

from __future__ import annotations

import functools
import hashlib
import logging
import math
import multiprocessing
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import rng as rngmod
from .adversary import Adversary
from .analysis import features as feat
from .analysis.belief import gap_ratios, mixing_gap_trace
from .analysis.estimators import dp_ratio_estimate, tv_distance_estimate
from .analysis.oracles import binomial_ratio_oracle, tail_bound_oracle
from .analysis.survivor import survivor_accounting
from .config import RunConfig
from .engine import run as engine_run
from .inputs import (InputVector, add_message, random_multiset_input,
                     random_permutation_input, swap_recipients)
from .kernels import NEVER, simulate
from .onion import Deliver, Nonce, Relay, make_scheme, peel_chain
from .protocols import get_protocol

log = logging.getLogger(__name__)


@dataclass
class Outcome:
    """One simulated run, the same shape whichever simulator produced it."""

    plan: object
    volumes: list
    output_fn: object  # () -> list of Counters, computed on demand
    aborted: np.ndarray
    corrupted: np.ndarray
    dropped_round: np.ndarray
    delivered_round: np.ndarray
    metrics: object
    selected: tuple
    extra: dict = field(default_factory=dict)

    def volume(self, rnd: int, frm=None, to=None) -> int:
        v = self.volumes[rnd - 1]
        mask = np.ones(len(v), dtype=bool)
        if frm is not None:
            mask &= v[:, 0] == frm
        if to is not None:
            mask &= v[:, 1] == to
        return int(v[mask, 2].sum())

    @functools.cached_property
    def outputs(self) -> list:
        return self.output_fn()

    def view_digest(self) -> str:
        """Hash of the link volumes of every round (the network adversary's view)."""
        h = hashlib.blake2b(digest_size=16)
        for rnd, v in enumerate(self.volumes, 1):
            h.update(np.int64([rnd, len(v)]).tobytes())
            h.update(np.ascontiguousarray(v, dtype=np.int64).tobytes())
        return h.hexdigest()


def simulate_once(cfg: RunConfig, sigma: InputVector, seed: int, watch=()) -> Outcome:
    protocol = get_protocol(cfg.protocol, cfg.params)
    if cfg.simulator == "engine":
        rep = engine_run(protocol, sigma, cfg.adversary, seed=seed, backend=cfg.backend,
                         record_events=False)
        plan = rep.plan
        dropped = np.zeros(plan.size, dtype=np.int64)
        for rnd, _node, uid in rep.dropped:
            if uid >= 0:
                dropped[uid] = rnd
        aborted = np.array([NEVER if a is None else a for a in rep.aborted], dtype=np.int64)
        out = Outcome(plan, rep.view.link_volumes, lambda: rep.outputs, aborted,
                      rep.adversary.corrupted_mask(plan.n_nodes), dropped, rep.delivered_round,
                      rep.metrics, tuple(sorted(rep.adversary.selected)))
        out.extra["watch"] = [out.volume(r, f, t) for r, f, t in watch]
        return out
    protocol.validate_input(sigma)
    plan = protocol.plan(sigma, seed)
    adv = Adversary(cfg.adversary, plan.n_nodes, seed, servers=plan.servers)
    res = simulate(plan, adv, seed, n_messages=sigma.total(), watch=watch)
    return Outcome(plan, res.volumes, lambda: [Counter(x) for x in res.outputs()], res.aborted,
                   res.corrupted, res.dropped_round, res.delivered_round, res.metrics,
                   tuple(sorted(adv.selected)), dict(res.extra))


# inputs

def single_input(cfg: RunConfig, trial: int) -> InputVector:
    spec = cfg.inputs
    N = cfg.params.N
    rng = rngmod.substream(cfg.seed, "inputs", trial)
    if spec["kind"] == "multiset":
        return random_multiset_input(N, int(spec.get("max_per_party", 4)), rng)
    if spec["kind"] == "explicit":
        return InputVector.from_json(spec["sigma0"])
    return random_permutation_input(N, rng)


def input_pair(cfg: RunConfig) -> tuple[InputVector, InputVector]:
    """The two inputs a distinguishing experiment compares; fixed across trials."""
    spec = cfg.inputs
    if spec["kind"] == "explicit":
        s0 = InputVector.from_json(spec["sigma0"])
        return s0, InputVector.from_json(spec.get("sigma1", spec["sigma0"]))
    base = random_permutation_input(cfg.params.N, rngmod.substream(cfg.seed, "inputs", "base"))
    if spec["kind"] == "swap":
        return base, swap_recipients(base, int(spec["a"]), int(spec["b"]))
    if spec["kind"] == "add":
        return base, add_message(base, int(spec["sender"]), int(spec["recipient"]),
                                 spec.get("message", "extra").encode())
    raise ValueError(f"input kind {spec['kind']!r} does not define a pair")


def trial_seed(cfg: RunConfig, trial: int, which: int = 0) -> int:
    return rngmod.subseed(cfg.seed, "trial", trial, which)


# features

def default_feature(cfg: RunConfig) -> str:
    return "sender_recipient" if cfg.protocol == "pi_a" else "delivery_pattern"


def _targets(cfg: RunConfig, s0: InputVector) -> dict:
    spec, fs = cfg.inputs, cfg.feature
    out = {}
    if spec["kind"] == "swap":
        a, b = int(spec["a"]), int(spec["b"])
        out.update(a=a, b=b, recipients=[s0[a][0][1], s0[b][0][1]])
    if spec["kind"] == "add":
        out.update(sender=int(spec["sender"]), recipient=int(spec["recipient"]))
    for key in ("a", "b", "sender", "recipient", "recipients"):
        if key in fs:
            out[key] = fs[key]
    return out


def extract_feature(name: str, outcome: Outcome, targets: dict) -> tuple:
    if name == "delivery_pattern":
        return feat.final_delivery_pattern(outcome, targets["recipients"])
    if name == "receipts":
        return feat.receipt_indicators(outcome, targets["recipients"])
    if name == "sender_recipient":
        return feat.sender_recipient_volume(outcome, targets["sender"], targets["recipient"])
    if name == "posterior":
        return feat.posterior_feature(outcome, targets["a"], targets["b"],
                                      targets["recipients"][0], outcome.selected)
    raise ValueError(f"unknown feature {name!r}")


# trial functions: (cfg, trial index) -> list of row dicts

def _trial_roundtrip(cfg: RunConfig, i: int) -> list[dict]:
    opts = cfg.options
    max_hops = int(opts.get("max_hops", 12))
    n_parties = max(cfg.params.N, 2)
    rng = rngmod.substream(cfg.seed, "roundtrip", i)
    scheme = make_scheme(cfg.backend, max_hops=max_hops, message_size=cfg.params.message_size)
    keys = [scheme.gen(v, rng) for v in range(n_parties)]
    hops = int(rng.integers(1, max_hops + 1))
    path = [int(x) for x in rng.integers(0, n_parties, hops)]
    message = bytes(rng.integers(0, 256, int(rng.integers(0, cfg.params.message_size + 1)),
                                 dtype=np.uint8))
    nonces = [Nonce("checkpt", bytes(rng.integers(0, 256, 32, dtype=np.uint8)))
              if rng.random() < 0.3 else None for _ in range(hops - 1)]
    formed = scheme.form_onion(message, path, [keys[v].public_key for v in path], nonces, rng)
    peeled = peel_chain(scheme, formed[0], path, [k.secret_key for k in keys])
    ok = len(peeled) == hops and isinstance(peeled[-1], Deliver) and peeled[-1].message == message
    for h, res in enumerate(peeled[:-1]):
        ok = ok and isinstance(res, Relay) and res.next == path[h + 1] \
            and res.inner == formed[h + 1] and res.nonce == nonces[h]
    return [{"trial": i, "hops": hops, "message_len": len(message), "ok": bool(ok)}]


def _trial_correctness(cfg: RunConfig, i: int) -> list[dict]:
    sigma = single_input(cfg, i)
    seed = trial_seed(cfg, i)
    out = simulate_once(cfg, sigma, seed)
    expected = sigma.expected_outputs()
    correct = all(out.outputs[j] == expected.get(j, Counter()) for j in range(sigma.N))
    return [{"trial": i, "seed": seed, "messages": sigma.total(), "correct": correct,
             "aborts": int((out.aborted != NEVER).sum())}]


def _metric_row(i, seed, out: Outcome) -> dict:
    m = out.metrics
    return {"trial": i, "seed": seed, "blowup": m.blowup, "latency": m.latency,
            "load": m.server_load, "onions_sent": m.onions_sent,
            "aborts": int((out.aborted != NEVER).sum())}


def _trial_metrics(cfg: RunConfig, i: int) -> list[dict]:
    seed = trial_seed(cfg, i)
    return [_metric_row(i, seed, simulate_once(cfg, single_input(cfg, i), seed))]


def _trial_mixing(cfg: RunConfig, i: int) -> list[dict]:
    seed = trial_seed(cfg, i)
    out = simulate_once(cfg, single_input(cfg, i), seed)
    target = int(cfg.inputs.get("target", 0))
    through = cfg.params.path_length
    trace = mixing_gap_trace(out.volumes, out.plan.servers, target, through,
                             cfg.options.get("normalize", "load"))
    raw = mixing_gap_trace(out.volumes, out.plan.servers, target, through, "none")
    ratios = gap_ratios(trace)
    return [{"trial": i, "seed": seed, "gap_final": trace[-1], "raw_gap_final": raw[-1],
             "median_ratio": float(np.median(ratios)) if ratios else 0.0,
             "ratios": " ".join(f"{r:.6g}" for r in ratios)}]


def _trial_pair(cfg: RunConfig, i: int) -> list[dict]:
    s0, s1 = input_pair(cfg)
    targets = _targets(cfg, s0)
    name = cfg.feature.get("kind", default_feature(cfg))
    shared = bool(cfg.options.get("shared_seed", False))
    rows = []
    for which, sigma in enumerate((s0, s1)):
        seed = trial_seed(cfg, i, 0 if shared else which)
        watch = ()
        if name == "sender_recipient" and cfg.protocol in ("pi_p", "pi_a"):
            watch = feat.sender_recipient_watch(cfg.params.path_length + 1, targets["sender"],
                                                targets["recipient"])
        out = simulate_once(cfg, sigma, seed, watch=watch)
        value = extract_feature(name, out, targets)
        row = {"trial": i, "input": which, "seed": seed}
        row.update({f"f{k}": v for k, v in enumerate(value)})
        row["aborts"] = int((out.aborted != NEVER).sum())
        rows.append(row)
    return rows


def _trial_survivor(cfg: RunConfig, i: int) -> list[dict]:
    seed = trial_seed(cfg, i)
    out = simulate_once(cfg, single_input(cfg, i), seed)
    rep = survivor_accounting(out, cfg.params.c, float(cfg.options.get("slack", 0.05)))
    honest = out.aborted[~out.corrupted]
    first = int(honest.min()) if len(honest) and honest.min() != NEVER else -1
    return [{"trial": i, "seed": seed, "violations": len(rep.violations),
             "unmarked": rep.unmarked, "first_abort": first,
             "min_survival": float(rep.survival.min()) if len(rep.survival) else 1.0,
             "dropped": int((out.dropped_round > 0).sum())}]


def _trial_packets(cfg: RunConfig, i: int) -> list[dict]:
    seed = trial_seed(cfg, i)
    o0 = simulate_once(cfg, single_input(cfg, i), seed)
    row = {"trial": i, "seed": seed, "overflow": int(o0.plan.extra.get("overflow", 0)),
           "rounds": o0.plan.rounds, "load": o0.metrics.server_load,
           "packet": int(o0.plan.extra.get("packet", 0))}
    if cfg.options.get("compare_views", True):
        # a second permutation under the same seed must leave the same network view
        s1 = random_permutation_input(cfg.params.N, rngmod.substream(cfg.seed, "inputs", "other", i))
        row["view_identical"] = o0.view_digest() == simulate_once(cfg, s1, seed).view_digest()
    return [row]


def _trial_oracles(cfg: RunConfig, i: int) -> list[dict]:
    o = cfg.options
    rng = rngmod.substream(cfg.seed, "oracle", i)
    q_lo, q_hi = o.get("q_range", [1e-6, 1e-4])
    m_lo, m_hi = o.get("mean_range", [50, 1000])
    e_lo, e_hi = o.get("eps_range", [0.5, 2.0])
    q, p = np.exp(rng.uniform(np.log(q_lo), np.log(q_hi), 2))
    Gq, Hp = rng.uniform(m_lo, m_hi, 2)
    eps = float(rng.uniform(e_lo, e_hi))
    G, H = int(round(Gq / q)), int(round(Hp / p))
    res = binomial_ratio_oracle(G, float(q), H, float(p), eps)
    return [{"trial": i, "G": G, "q": float(q), "H": H, "p": float(p), "eps": eps,
             "y_ratio": res["y"]["max_ratio"], "x_ratio": res["x"]["max_ratio"],
             "product": res["product"], "bound": res["bound"],
             "in_regime": res["in_regime"], "passed": bool(res["passed"])}]


TRIALS = {
    "roundtrip": _trial_roundtrip, "correctness": _trial_correctness,
    "metrics": _trial_metrics, "mixing": _trial_mixing, "tv": _trial_pair, "dp": _trial_pair,
    "survivor": _trial_survivor, "packets": _trial_packets, "oracles": _trial_oracles,
}


# summaries

def _stats(values) -> dict:
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "min": float(a.min()), "max": float(a.max())}


def _feature_matrix(rows, which) -> np.ndarray:
    picked = [r for r in rows if r["input"] == which]
    cols = sorted((k for k in picked[0] if k.startswith("f") and k[1:].isdigit()),
                  key=lambda k: int(k[1:]))
    return np.array([[r[c] for c in cols] for r in picked], dtype=float)


def _paired(rows) -> tuple[np.ndarray, np.ndarray]:
    # only trials where both inputs finished
    done = Counter(r["trial"] for r in rows)
    rows = [r for r in rows if done[r["trial"]] == 2]
    return _feature_matrix(rows, 0), _feature_matrix(rows, 1)


def summarize(cfg: RunConfig, rows: list[dict]) -> dict:
    kind = cfg.experiment
    s: dict = {"rows": len(rows)}
    if not rows:
        return s
    if kind == "roundtrip":
        s["failures"] = sum(not r["ok"] for r in rows)
        s["max_hops_seen"] = max(r["hops"] for r in rows)
    elif kind == "correctness":
        s["incorrect"] = sum(not r["correct"] for r in rows)
        s["aborting_runs"] = sum(r["aborts"] > 0 for r in rows)
    elif kind == "metrics":
        for key in ("blowup", "latency", "load"):
            s[key] = _stats([r[key] for r in rows])
        if cfg.protocol == "pi_a":
            s["threshold"] = cfg.params.threshold
        if cfg.protocol == "pi_p":
            p = cfg.params
            s["expected"] = {"blowup": p.path_length + 1, "latency": p.path_length + 1,
                             "load": p.N / p.n}
    elif kind == "mixing":
        pooled = [float(x) for r in rows for x in r["ratios"].split()]
        negligible = float(cfg.options.get("negligible", 1e-6))
        s["median_ratio"] = float(np.median(pooled)) if pooled else 0.0
        s["max_trial_median_ratio"] = max(r["median_ratio"] for r in rows)
        s["negligible"] = negligible
        s["fraction_negligible"] = sum(r["gap_final"] < negligible for r in rows) / len(rows)
        s["gap_final"] = _stats([r["gap_final"] for r in rows])
        s["raw_gap_final"] = _stats([r["raw_gap_final"] for r in rows])
    elif kind in ("tv", "dp"):
        x0, x1 = _paired(rows)
        bins = cfg.feature.get("bins")
        s["feature"] = cfg.feature.get("kind", default_feature(cfg))
        s["pairs"] = len(x0)
        s["aborting_runs"] = sum(r["aborts"] > 0 for r in rows)
        if kind == "tv":
            est = tv_distance_estimate(x0, x1, bins, n_boot=int(cfg.options.get("n_boot", 2000)),
                                       rng=rngmod.substream(cfg.seed, "bootstrap"))
            s.update(tv=est.estimate, ci_low=est.ci_low, ci_high=est.ci_high,
                     ci_contains_zero=est.contains(0.0), flagged=est.flagged)
        else:
            eps_t = float(cfg.options.get("eps_target", cfg.params.eps))
            delta_t = float(cfg.options.get("delta_target", cfg.params.delta))
            est = dp_ratio_estimate(x0, x1, eps_t, delta_t, bins, s["feature"])
            s.update(eps_hat=est.eps_hat, delta_hat=est.delta_hat, eps_target=eps_t,
                     delta_target=delta_t)
    elif kind == "survivor":
        s["violations"] = sum(r["violations"] for r in rows)
        s["runs_with_abort"] = sum(r["first_abort"] >= 0 for r in rows)
        s["min_survival"] = min(r["min_survival"] for r in rows)
        s["mean_unmarked"] = float(np.mean([r["unmarked"] for r in rows]))
    elif kind == "packets":
        s["overflow_runs"] = sum(r["overflow"] > 0 for r in rows)
        s["rounds"] = sorted({r["rounds"] for r in rows})
        s["load"] = _stats([r["load"] for r in rows])
        s["packet"] = rows[0]["packet"]
        if cfg.protocol == "pi_n_plus":
            s["expected_load"] = cfg.params.B * rows[0]["packet"]
            s["expected_rounds"] = cfg.params.H + 1
            s["rounds_match"] = s["rounds"] == [s["expected_rounds"]]
            s["load_ratio"] = s["load"]["mean"] / s["expected_load"]
        if "view_identical" in rows[0]:
            s["view_mismatches"] = sum(not r["view_identical"] for r in rows)
    elif kind == "oracles":
        s["failures"] = sum(not r["passed"] for r in rows)
        s["out_of_regime"] = sum(not r["in_regime"] for r in rows)
        s["max_product_over_bound"] = max(r["product"] / math.exp(r["eps"]) for r in rows)
        tail = cfg.options.get("tail")
        if tail:
            t = tail_bound_oracle(**tail)
            s["tail"] = {k: t[k] for k in ("alpha_beta_min", "chernoff_y", "exact_y",
                                           "exact_x", "chernoff_x", "exact_below_chernoff")}
    return s


# checks

OPS = {
    "eq": lambda v, x: v == x,
    "le": lambda v, x: v <= x,
    "lt": lambda v, x: v < x,
    "ge": lambda v, x: v >= x,
    "gt": lambda v, x: v > x,
}


def lookup(summary: dict, key: str):
    node = summary
    for part in key.split("."):
        node = node[part]
    return node


def evaluate_checks(checks: dict, summary: dict) -> list[dict]:
    """One verdict per (summary key, comparison).

    ``{"load.mean": {"within": [64, 0.1]}}`` means within 10% of 64; the
    other comparisons are eq, le, lt, ge and gt against a number or bool.
    """
    verdicts = []
    for key in sorted(checks):
        for op, arg in sorted(checks[key].items()):
            try:
                value = lookup(summary, key)
            except (KeyError, TypeError):
                verdicts.append({"criterion": key, "op": op, "threshold": arg, "value": None,
                                 "passed": False})
                continue
            if op == "within":
                target, rel = arg
                ok = abs(value - target) <= rel * abs(target)
            elif op in OPS:
                ok = bool(OPS[op](value, arg))
            else:
                raise ValueError(f"unknown comparison {op!r} for {key}")
            verdicts.append({"criterion": key, "op": op, "threshold": arg, "value": value,
                             "passed": bool(ok)})
    return verdicts


@dataclass
class ExperimentResult:
    config: RunConfig
    rows: list
    summary: dict
    verdicts: list
    partial: bool = False

    @property
    def passed(self) -> bool:
        return not self.partial and all(v["passed"] for v in self.verdicts)

    def report(self) -> dict:
        return {
            "artifact": "onionlab", "version": __version__,
            "config_hash": self.config.digest(), "config": self.config.to_dict(),
            "experiment": self.config.experiment, "trials_requested": self.config.trials,
            "trials_completed": len({r["trial"] for r in self.rows}),
            "partial": self.partial, "summary": self.summary, "verdicts": self.verdicts,
            "passed": self.passed,
        }


def _run_trial(cfg: RunConfig, i: int) -> list[dict]:
    return TRIALS[cfg.experiment](cfg, i)


def run_experiment(cfg: RunConfig, workers: int = 1) -> ExperimentResult:
    """Run all trials (in a pool when ``workers`` > 1) and fold them in trial order."""
    func = functools.partial(_run_trial, cfg)
    deadline = None if cfg.budget_seconds is None else time.monotonic() + cfg.budget_seconds
    rows, partial = [], False
    if workers > 1 and cfg.trials > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            chunk = max(1, cfg.trials // (workers * 8))
            for out in pool.imap(func, range(cfg.trials), chunksize=chunk):
                rows.extend(out)
                if deadline is not None and time.monotonic() > deadline:
                    partial = True
                    pool.terminate()
                    break
    else:
        for i in range(cfg.trials):
            rows.extend(func(i))
            if deadline is not None and time.monotonic() > deadline and i + 1 < cfg.trials:
                partial = True
                break
    if partial:
        log.warning("runtime budget exceeded after %d trials", len({r["trial"] for r in rows}))
    summary = summarize(cfg, rows)
    return ExperimentResult(cfg, rows, summary, evaluate_checks(cfg.checks, summary), partial)
