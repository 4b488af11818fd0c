"""Command-line entry point.

Exit codes: 0 all invariants hold, 1 an invariant failed, 2 config or
usage error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from . import __version__, acceptance
from .config import ConfigError, ExperimentConfig, load, validate
from .runner import NumericalAbort, RunReport, _publish, acceptance_outputs, execute

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
OUT_ENV = "HEATFLOW_OUT"
DEFAULT_OUT = "heatflow-out"

log = logging.getLogger("heatflow")


def shipped_scenarios() -> dict[str, Path]:
    root = resources.files("heatflow").joinpath("scenarios")
    return {Path(p.name).stem: Path(str(p)) for p in sorted(root.iterdir(), key=lambda q: q.name)
            if p.name.endswith(".json")}


def _resolve(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    shipped = shipped_scenarios()
    if ref in shipped:
        return shipped[ref]
    return p  # load() reports the missing file


def _out_root(args, cfg: ExperimentConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def _load_all(refs, seed) -> list[ExperimentConfig]:
    cfgs = []
    for ref in refs:
        cfg = load(_resolve(ref))
        if seed is not None:
            cfg.seed = seed
        cfgs.append(cfg)
    ids = [c.id for c in cfgs]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ConfigError(f"duplicate scenario ids: {sorted(dup)}")
    return cfgs


def _run_one(cfg: ExperimentConfig, out: Path, scale: float) -> tuple[int, dict]:
    try:
        rep = execute(cfg, out, scale)
    except NumericalAbort as exc:
        return EXIT_NUMERICAL, {"id": cfg.id, "status": "aborted", "error": str(exc)}
    except ConfigError as exc:
        return EXIT_CONFIG, {"id": cfg.id, "status": "config-error", "error": str(exc)}
    return (EXIT_OK if rep.passed else EXIT_FAIL), {"id": cfg.id, "status": rep.status,
                                                     "failed": [k for k, v in rep.invariants.items()
                                                                if not v["passed"]]}


def cmd_run(args) -> int:
    cfgs = _load_all(args.config, args.seed)  # every config validated before any output
    jobs = [(c, _out_root(args, c), args.tolerance_scale) for c in cfgs]
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as ex:
            results = list(ex.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    for code, info in results:
        line = f"{info['id']}: {info['status']}"
        if info.get("failed"):
            line += f" (failed: {', '.join(info['failed'])})"
        if info.get("error"):
            line += f" ({info['error']})"
        print(line)
    codes = [c for c, _ in results]
    # the most severe outcome wins: numerical abort, config error, failure
    for code in (EXIT_NUMERICAL, EXIT_CONFIG, EXIT_FAIL):
        if code in codes:
            return code
    return EXIT_OK


def cmd_acceptance(args) -> int:
    overrides = {}
    numbers = args.criteria
    seed = 0
    if args.config:
        cfg = load(_resolve(args.config[0]))
        if cfg.scenario != "acceptance-suite":
            raise ConfigError("acceptance expects an acceptance-suite config")
        overrides = cfg.tolerances
        numbers = numbers or cfg.get("criteria")
        seed = cfg.seed
    if args.seed is not None:
        seed = args.seed
    try:
        acceptance.Tolerances(args.tolerance_scale, overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    results = acceptance.run_all(numbers, args.tolerance_scale, overrides, seed, args.parallel)
    rep = RunReport("acceptance", "acceptance-suite", seed)
    files = acceptance_outputs(results, rep)
    rep.status = "passed" if rep.passed else "failed"
    rep.wall_time = sum(r.runtime for r in results)
    _publish(_out_root(args) / "acceptance", rep, files)
    print(acceptance.summary_table(results))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_list(args) -> int:
    for name, path in shipped_scenarios().items():
        raw = json.loads(path.read_text())
        print(f"{name:28s} {raw['scenario']:16s} {raw.get('description', '')}")
    print()
    for n, title in acceptance.TITLES.items():
        print(f"criterion {n:2d}  {title}")
    return EXIT_OK


def cmd_validate(args) -> int:
    for ref in args.config:
        cfg = load(_resolve(ref))
        print(f"{ref}: ok ({cfg.scenario}, id={cfg.id})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[],
                        help="config file or shipped scenario name (repeatable)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None,
                        help=f"output root (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--parallel", type=int, default=1, help="worker processes")
    common.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="multiply every tolerance by this factor")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="heatflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"heatflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run scenario configs").set_defaults(fn=cmd_run)
    a = sub.add_parser("acceptance", parents=[common], help="run the acceptance suite")
    a.add_argument("--criteria", type=int, nargs="+", choices=range(1, 12), metavar="N")
    a.set_defaults(fn=cmd_acceptance)
    sub.add_parser("list-scenarios", parents=[common], help="list shipped scenarios").set_defaults(fn=cmd_list)
    sub.add_parser("validate-config", parents=[common], help="schema-check configs").set_defaults(fn=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.tolerance_scale <= 0 or args.parallel < 1:
        print("error: --tolerance-scale must be positive and --parallel >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command in ("run", "validate-config") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
