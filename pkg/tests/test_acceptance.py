"""Every acceptance criterion at its stated scale and tolerance.

Each test runs the matching file under configs/ (the same path as
``onionlab run``), records one PASS/FAIL line and then asserts. The lines are
printed together at the end of the session.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_acceptance
from onionlab.cli import main
from onionlab.config import expand_grid, load_yaml, parse_config
from onionlab.experiments import input_pair, run_experiment, trial_seed
from onionlab.engine import run
from onionlab.protocols import get_protocol

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
pytestmark = pytest.mark.acceptance


def run_config(name):
    cfg = parse_config(load_yaml(CONFIGS / f"{name}.yaml"))
    start = time.monotonic()
    result = run_experiment(cfg)
    return cfg, result, time.monotonic() - start


def verdicts(result):
    return ", ".join(f"{v['criterion']}={_fmt(v['value'])} ({v['op']} {v['threshold']})"
                     for v in result.verdicts)


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def check(label, ok, detail):
    record_acceptance(label, ok, detail)
    assert ok, detail


def test_c1_onion_round_trip():
    results = []
    for backend in ("ideal", "real"):
        data = load_yaml(CONFIGS / "roundtrip.yaml")
        data["backend"] = backend
        cfg = parse_config(data)
        start = time.monotonic()
        res = run_experiment(cfg)
        results.append((backend, res, time.monotonic() - start))
    ok = all(r.passed and dt < 10 for _, r, dt in results)
    detail = "; ".join(f"{b}: {r.summary['failures']} failures / {r.config.trials} in {dt:.1f}s"
                       for b, r, dt in results)
    check("C1", ok, detail)


@pytest.mark.parametrize("name", ["correctness_pi_p", "correctness_pi_a"])
def test_c2_correctness(name):
    cfg, res, dt = run_config(name)
    check("C2", res.passed, f"{cfg.protocol}: {res.summary['incorrect']} incorrect of {cfg.trials}")


def test_c3_pi_p_efficiency():
    cfg, res, dt = run_config("efficiency_pi_p")
    check("C3", res.passed, verdicts(res))


def test_c4_mixing():
    cfg, res, dt = run_config("mixing_pi_p")
    check("C4", res.passed and dt < 300, f"{verdicts(res)}; {dt:.0f}s")


def test_c5_pi_p_statistical_privacy():
    cfg, res, dt = run_config("tv_pi_p")
    s = res.summary
    check("C5", res.passed and dt < 900,
          f"TV {s['tv']:.4f}, 95% CI [{s['ci_low']:.4f}, {s['ci_high']:.4f}] at {cfg.trials} pairs; {dt:.0f}s")


def test_c6_drop_attack_distinguishes():
    cfg, res, dt = run_config("drop_attack_pi_p")
    check("C6", res.passed, f"{verdicts(res)}; {cfg.trials} pairs")


@pytest.mark.parametrize("name", ["survivor_none", "survivor_fraction", "survivor_target"])
def test_c7_abort_soundness(name):
    cfg, res, dt = run_config(name)
    s = res.summary
    strategy = cfg.adversary.strategy.describe()["kind"]
    check("C7", res.passed,
          f"{strategy}: {s['violations']} violations in {cfg.trials} seeds, "
          f"{s['runs_with_abort']} with an honest abort, min survival {s['min_survival']:.3f}")


def test_c8_pi_a_dp():
    cfg, res, dt = run_config("dp_pi_a")
    check("C8", res.passed and dt < 1800, f"{verdicts(res)}; {cfg.trials} pairs; {dt:.0f}s")


def test_c9_oracles():
    cfg, res, dt = run_config("oracles")
    check("C9", res.passed, verdicts(res))


def test_c10_pi_n_packets():
    cfg, res, dt = run_config("packets_pi_n")
    # the onion-level engine must give byte-identical views too
    proto = get_protocol(cfg.protocol, cfg.params)
    s0, s1 = input_pair(cfg.replace(inputs={"kind": "swap", "a": 0, "b": 1}))
    same = []
    for i in range(2):
        seed = trial_seed(cfg, i)
        a, b = run(proto, s0, seed=seed), run(proto, s1, seed=seed)
        same.append(a.view.canonical_bytes() == b.view.canonical_bytes())
    check("C10", res.passed and all(same),
          f"{verdicts(res)}; engine views identical on {sum(same)}/2 seeds")


def test_c11_butterfly_tradeoff():
    data = load_yaml(CONFIGS / "butterfly_sweep.yaml")
    parts, ok = [], True
    for point, raw in expand_grid(data):
        cfg = parse_config(raw)
        res = run_experiment(cfg)
        s = res.summary
        ok &= res.passed
        parts.append(f"B={cfg.params.B}: rounds {s['rounds']} (want {s['expected_rounds']}), "
                     f"load/Bk {s['load_ratio']:.3f}, overflow {s['overflow_runs']}")
    check("C11", ok, "; ".join(parts))


def test_c12_determinism(tmp_path):
    digests = []
    for name in ("minimal_pi_p", "tv_pi_p"):
        for rep in ("a", "b"):
            out = tmp_path / name / rep
            main(["run", "-c", str(CONFIGS / f"{name}.yaml"), "-o", str(out), "--trials", "200"])
            digests.append((name, (out / "report.json").read_bytes(), (out / "trials.csv").read_bytes()))
    ok = digests[0] == digests[1] and digests[2] == digests[3]
    hashes = {d[0]: json.loads(d[1])["config_hash"][:12] for d in digests}
    check("C12", ok, f"report.json and trials.csv identical across reruns for {hashes}")
