"""Command line: ``onionlab run``, ``onionlab sweep`` and ``onionlab params``.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad config, 3 runtime error
(including a run cut short by its time budget).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import expand_grid, load_yaml, parse_config
from .experiments import run_experiment
from .protocols.params import ConfigError, param_calc

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("onionlab")


def plain(value):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, bytes):
        return value.decode("latin-1")
    return value


def dumps(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    v = plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def rows_to_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _flatten(prefix: str, value, out: dict) -> None:
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else k, value[k], out)
    else:
        out[prefix] = value


def _load(args) -> dict:
    data = load_yaml(args.config)
    if not isinstance(data, dict):
        raise ConfigError("config", "expected a mapping at top level")
    if args.trials is not None:
        data["trials"] = args.trials
    if args.seed is not None:
        data["seed"] = args.seed
    return data


def _out_dir(args, data: dict) -> Path:
    out = Path(args.out or (data.get("outputs") or {}).get("dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    data = _load(args)
    cfg = parse_config(data)
    out = _out_dir(args, data)
    names = cfg.outputs
    result = run_experiment(cfg, workers=args.workers)
    (out / names.get("report", "report.json")).write_text(dumps(result.report()))
    (out / names.get("csv", "trials.csv")).write_text(rows_to_csv(result.rows))
    for v in result.verdicts:
        log.info("%s %s %s %s -> %s", v["criterion"], v["op"], v["threshold"], v["value"],
                 "pass" if v["passed"] else "FAIL")
    print(f"{cfg.experiment}: {'PASS' if result.passed else 'FAIL'} "
          f"({len(result.verdicts)} checks, report in {out})")
    if result.partial:
        return EXIT_RUNTIME
    return EXIT_PASS if result.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    data = _load(args)
    out = _out_dir(args, data)
    table, reports = [], []
    for point, raw in expand_grid(data):
        cfg = parse_config(raw)
        result = run_experiment(cfg, workers=args.workers)
        row = dict(point)
        flat: dict = {}
        _flatten("", result.summary, flat)
        row.update(flat)
        row.update(config_hash=cfg.digest(), partial=result.partial, passed=result.passed)
        table.append(row)
        reports.append({"point": point, **result.report()})
        log.info("%s -> %s", point, "pass" if result.passed else "FAIL")
    (out / "sweep.csv").write_text(rows_to_csv(table))
    (out / "sweep.json").write_text(dumps({"version": __version__, "points": reports}))
    passed = all(r["passed"] for r in table)
    print(f"sweep: {len(table)} points, {'PASS' if passed else 'FAIL'} (table in {out})")
    if any(r["partial"] for r in table):
        return EXIT_RUNTIME
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_params(args) -> int:
    res = param_calc(args.eps, args.delta, args.c, args.d, args.kappa, args.log2_lambda)
    sys.stdout.write(dumps({"inputs": {"eps": args.eps, "delta": args.delta, "c": args.c,
                                       "d": args.d, "kappa": args.kappa,
                                       "log2_lambda": args.log2_lambda}, **res}))
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onionlab", description="Onion-routing mix simulator.")
    parser.add_argument("--version", action="version", version=f"onionlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run one experiment config"),
                           ("sweep", "run a config over its parameter grid")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", "-c", required=True, help="YAML run config")
        p.add_argument("--out", "-o", help="output directory (default: outputs.dir or .)")
        p.add_argument("--workers", "-j", type=int, default=1, help="trial worker processes")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
    p = sub.add_parser("params", help="threshold and alpha*beta bound for given privacy targets")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=2.0 ** -10)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--d", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--log2-lambda", dest="log2_lambda", type=float, default=1.0)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "params": cmd_params}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the exit code is the contract
        log.debug("runtime error", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
