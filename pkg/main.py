#!/usr/bin/env python3
"""
Permissionless Consensus Lab - Command Line

Runs scenario instances, re-checks saved traces and drives suites:
1. run: every instance of one scenario file for one seed, one trace file each
2. verify: property verdicts for a saved trace file
3. suite: a suite file over a seed range, one report record per verdict
4. list-scenarios: the built-in scenario registry

Exit status: 0 when every verdict matched its expectation, 1 on a mismatch,
2 on a malformed or inconsistent configuration.

Usage:
    python main.py run configs/partition.toml --seed 3 --out traces/partition.jsonl
    python main.py verify traces/partition-I0.jsonl --props consistency,liveness --params ell=208
    python main.py suite configs/acceptance_qp.toml --seeds 0..9 --report reports/qp.jsonl
    python main.py list-scenarios
"""

import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from app_init import initialize_app
from config import get_settings
from services.pos_hotstuff import responsiveness_bound
from services.settings import SettingKind, satisfies_setting
from services.verdicts import (Status, Verdict, check_ba, check_consistency, check_liveness,
                               check_optimistic_responsiveness)
from utils.errors import ConfigurationError, ScenarioValidationError, SimulationError, TimingRuleViolation
from utils.model import as_fraction
from utils.trace import ExecutionTrace

from scenarios import list_scenarios
from scenarios.base import rho_bounded
from scenarios.loader import load_scenario, load_suite
from scenarios.runner import run_scenario, run_suite, summarize, write_report

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2

VERIFY_PROPS = ("consistency", "liveness", "responsiveness", "agreement", "rho_bounded",
                "dynamically_available", "quasi_permissionless", "permissioned")


def _trace_path(out: str, instance: str, single: bool) -> str:
    if single:
        return out
    root, ext = os.path.splitext(out)
    return f"{root}-{instance}{ext or '.jsonl'}"


def _print_record(record: Dict[str, Any]) -> None:
    mark = "✓" if record["status"] == record["expected"] else "✗"
    where = f"{record['instance']}: " if record["instance"] else ""
    print(f"  {mark} {where}{record['property']} = {record['status']} (expected {record['expected']})")


def cmd_run(args: argparse.Namespace) -> int:
    spec = load_scenario(args.config)
    print(f"Running {spec.name} ({spec.description}), seed {args.seed}")
    result = run_scenario(spec, args.seed)
    out = args.out or os.path.join(get_settings().trace_dir, f"{spec.name}-seed{args.seed}.jsonl")
    single = len(result.instances) == 1
    for name, outcome in result.instances.items():
        path = _trace_path(out, name, single)
        digest = outcome.trace.save(path)
        print(f"  trace {name} -> {path} ({digest[:12]})")
    for record in result.records:
        _print_record(record)
    if result.matched:
        print("✓ all verdicts matched")
        return EXIT_OK
    print(f"✗ {len(result.mismatches())} verdicts did not match")
    return EXIT_MISMATCH


def parse_params(items: Optional[List[str]]) -> Dict[str, str]:
    params: Dict[str, str] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"expected key=value, got {item!r}", "--params")
        params[key.strip()] = value.strip()
    return params


def _int_param(params: Dict[str, str], key: str, default: Optional[int] = None) -> int:
    raw = params.get(key)
    if raw is None:
        if default is None:
            raise ConfigurationError(f"required parameter {key!r} missing", "--params")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{key} must be an integer, got {raw!r}", "--params")


def verify_trace(trace: ExecutionTrace, props: List[str], params: Dict[str, str]) -> List[Verdict]:
    verdicts: List[Verdict] = []
    n = trace.stake_state().total or len(trace.roster)
    for prop in props:
        if prop not in VERIFY_PROPS:
            raise ConfigurationError(f"unknown property {prop!r}; known: {', '.join(VERIFY_PROPS)}", "--props")
        if prop == "consistency":
            verdicts.append(check_consistency(trace))
        elif prop == "liveness":
            verdicts.append(check_liveness(trace, _int_param(params, "ell")))
        elif prop == "responsiveness":
            kappa = as_fraction(params.get("kappa", trace.cfg.kappa))
            verdicts.append(check_optimistic_responsiveness(trace, lambda d: responsiveness_bound(n, d, kappa),
                                                            _int_param(params, "delta_star", 0)))
        elif prop == "agreement":
            verdicts.extend(check_ba(trace))
        elif prop == "rho_bounded":
            verdicts.extend(rho_bounded(as_fraction(params.get("rho", "1/3")))(trace, None))
        else:
            kind = SettingKind(prop)
            verdicts.append(Verdict(prop, Status.PASS if satisfies_setting(trace, kind) else Status.FAIL))
    return verdicts


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        trace = ExecutionTrace.load(args.trace)
    except FileNotFoundError:
        raise ConfigurationError("no such file", args.trace)
    props = [p.strip() for p in args.props.split(",") if p.strip()]
    verdicts = verify_trace(trace, props, parse_params(args.params))
    print(f"Verifying {args.trace} ({trace.scenario}/{trace.instance}, {trace.duration} timeslots)")
    failed = 0
    for verdict in verdicts:
        mark = "✗" if verdict.failed else "✓"
        failed += verdict.failed
        print(f"  {mark} {verdict.prop} = {verdict.status.value} {verdict.witness if verdict.failed else ''}".rstrip())
    return EXIT_MISMATCH if failed else EXIT_OK


def cmd_suite(args: argparse.Namespace) -> int:
    suite = load_suite(args.config, seeds=args.seeds, workers=args.workers)
    print(f"Suite {suite.name}: {len(suite.runs)} runs x {len(suite.seeds)} seeds, {suite.workers} workers")
    records = run_suite(suite)
    report = args.report or os.path.join(get_settings().report_dir, f"{suite.name}.jsonl")
    write_report(records, report)
    stats = summarize(records)
    print(f"  records: {stats['records']}  pass: {stats['pass']}  fail: {stats['fail']}  n/a: {stats['n/a']}")
    print(f"  report -> {report}")
    for record in records:
        if record["status"] != record["expected"]:
            _print_record(record)
    if stats["mismatched"]:
        print(f"✗ {stats['mismatched']} verdicts did not match")
        return EXIT_MISMATCH
    print("✓ all verdicts matched")
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name, description in list_scenarios():
        print(f"  {name:<16} {description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simulate permissionless consensus protocols and check their properties",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py run configs/partition.toml --seed 3
  python main.py verify traces/partition-seed3-I0.jsonl --props agreement
  python main.py suite configs/acceptance_qp.toml --seeds 0..9 --workers 4
  python main.py list-scenarios
        """,
    )
    parser.add_argument("--log-level", help="Override PCL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run every instance of a scenario file")
    run.add_argument("config", help="Scenario file (TOML)")
    run.add_argument("--seed", type=int, default=0, help="Execution seed (default: 0)")
    run.add_argument("--out", help="Trace file; one file per instance is written next to it")
    run.set_defaults(handler=cmd_run)

    verify = sub.add_parser("verify", help="Check properties of a saved trace")
    verify.add_argument("trace", help="Trace file (JSON lines)")
    verify.add_argument("--props", default="consistency", help=f"Comma-separated: {', '.join(VERIFY_PROPS)}")
    verify.add_argument("--params", nargs="*", help="key=value parameters, e.g. ell=208 rho=1/3")
    verify.set_defaults(handler=cmd_verify)

    suite = sub.add_parser("suite", help="Run a suite file over a seed range")
    suite.add_argument("config", help="Suite file (TOML)")
    suite.add_argument("--seeds", help="Seed range a..b or list a,b,c (overrides the file)")
    suite.add_argument("--report", help="Report file (JSON lines)")
    suite.add_argument("--workers", type=int, help="Worker processes (overrides the file)")
    suite.set_defaults(handler=cmd_suite)

    listing = sub.add_parser("list-scenarios", help="Show the built-in scenarios")
    listing.set_defaults(handler=cmd_list)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        initialize_app(args.log_level)
        return args.handler(args)
    except (ConfigurationError, ScenarioValidationError, TimingRuleViolation) as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_CONFIG
    except ValueError as e:
        print(f"❌ configuration: {e}")
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
