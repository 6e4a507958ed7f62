#!/usr/bin/env python3
"""
Acceptance Matrix Driver

Runs the acceptance matrices and writes one report for the viewer:
1. PoS-HotStuff safety and liveness: equivocation and withholding,
   delta in {2, 4}, kappa in {1, 1/2}, GST in {0, 50}, durations d and 2d
2. Optimistic responsiveness: all honest, delta 100, realized delay 1,
   against the fixed-wait baseline
3. Accountability, Losa-Gafni agreement, the impossibility constructions
4. Permitter statistics: PoW leading zeros and PoSp proof counts

Usage:
    python scripts/run_acceptance.py --seeds 0..99 --report reports/acceptance.jsonl
    python scripts/run_acceptance.py --only qp,da --workers 4
"""

import argparse
import itertools
import os
import sys
import time
from typing import Any, Dict, List

import numpy as np

# Add parent directory to path to import local modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app_init import initialize_app
from config import get_settings
from scenarios.loader import SUPPORTED_VERSION, SuiteSpec, parse_seeds
from scenarios.runner import run_suite, summarize, write_report
from services.verdicts import Status
from utils.errors import ConfigurationError
from utils.permitters import leading_zero_law, posp_count_samples, pow_quality_samples

MATRICES = ("qp", "responsive", "accountability", "da", "impossibility", "permitters")


def _run(scenario: str, params: Dict[str, Any], expect: Dict[str, Any] = None) -> Dict[str, Any]:
    return {"version": SUPPORTED_VERSION, "scenario": {"name": scenario}, "params": params,
            "expect": expect or {}}


def qp_runs() -> List[Dict[str, Any]]:
    runs = []
    for delta in (2, 4):
        for kappa in ("1", "1/2"):
            for gst, scale in itertools.product((0, 50), (1, 2)):
                # same latency bound at d and 2d
                duration = scale * (gst + 110 * delta * (4 if kappa == "1/2" else 1))
                runs.append({
                    "version": SUPPORTED_VERSION,
                    "scenario": {"name": "custom", "label": f"qp-d{delta}-k{kappa}-g{gst}-x{scale}"},
                    "config": {"delta": delta, "kappa": kappa, "gst": gst, "duration": duration},
                    "players": {"honest": ["p0", "p1", "p2"], "byzantine": ["p3"]},
                    "stake": {"p0": 1, "p1": 1, "p2": 1, "p3": 1},
                    "environment": {"transfers": [{"id": "pay", "from": "p0", "to": "p1", "t": 5}]},
                    "adversary": {"kind": "equivocating" if gst else "withholding"},
                    "params": {"checks": ["consistency", "liveness", "rho_bounded"], "rho": "1/3"},
                })
    return runs


def permitter_records(seed: int, pow_samples: int, posp_pairs: int) -> List[Dict[str, Any]]:
    law = leading_zero_law(pow_quality_samples(pow_samples, seed))
    counts = posp_count_samples(posp_pairs, seed)
    nonempty = float(np.mean(counts > 0))
    mean = float(np.mean(counts))
    records = []
    for name, ok, witness in (
        ("pow_leading_zero_law", all(row["within"] for row in law), {"rows": law}),
        ("posp_nonempty_fraction", abs(nonempty - 0.632) <= 0.005, {"observed": nonempty}),
        ("posp_mean", abs(mean - 1.0) <= 0.01, {"observed": mean}),
    ):
        records.append({"scenario": "permitters", "instance": "", "seed": seed, "property": name,
                        "status": (Status.PASS if ok else Status.FAIL).value, "expected": Status.PASS.value,
                        "witness": witness, "params": {"pow_samples": pow_samples, "posp_pairs": posp_pairs}})
    return records


def build_runs(only: List[str]) -> List[Dict[str, Any]]:
    runs: List[Dict[str, Any]] = []
    if "qp" in only:
        runs += qp_runs()
    if "responsive" in only:
        runs.append(_run("positive_qp", {"responsive_delta": 100}))
    if "accountability" in only:
        runs.append(_run("accountability", {}))
        runs.append(_run("committees", {}))
    if "da" in only:
        runs.append(_run("positive_da", {"delta": 2}))
    if "impossibility" in only:
        runs += [_run("partition", {}), _run("or_attack", {}), _run("split_brain", {}),
                 _run("long_range", {"protocol": "plain"}), _run("long_range", {"protocol": "ephemeral"}),
                 _run("pi_family", {"faults": {"3": ["crash", 1], "6": ["delay", 2, 2]}})]
        runs += [_run("payment_circle", {"n": n}) for n in range(1, 7)]
    return runs


def main():
    parser = argparse.ArgumentParser(
        description="Run the acceptance matrices and write a report",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python scripts/run_acceptance.py --seeds 0..9
  python scripts/run_acceptance.py --only permitters --pow-samples 10000 --posp-pairs 100000
        """,
    )
    parser.add_argument("--seeds", default="0..9", help="Seed range a..b or list a,b,c (default: 0..9)")
    parser.add_argument("--only", default=",".join(MATRICES), help=f"Comma-separated subset of {', '.join(MATRICES)}")
    parser.add_argument("--workers", type=int, help="Worker processes (default: PCL_WORKERS)")
    parser.add_argument("--report", help="Report file (default: <PCL_REPORT_DIR>/acceptance.jsonl)")
    parser.add_argument("--pow-samples", type=int, default=10000)
    parser.add_argument("--posp-pairs", type=int, default=100000)
    args = parser.parse_args()

    initialize_app()
    settings = get_settings()
    only = [m.strip() for m in args.only.split(",") if m.strip()]
    unknown = [m for m in only if m not in MATRICES]
    if unknown:
        print(f"❌ Unknown matrix: {', '.join(unknown)}")
        return 2
    try:
        seeds = parse_seeds(args.seeds)
    except ConfigurationError as e:
        print(f"❌ {e}")
        return 2

    stats = {"runs": 0, "seeds": len(seeds), "records": 0, "mismatched": 0, "seconds": 0.0}
    start = time.time()
    records: List[Dict[str, Any]] = []
    runs = build_runs(only)
    if runs:
        suite = SuiteSpec("acceptance", seeds, args.workers or settings.workers, runs)
        stats["runs"] = len(runs)
        records += run_suite(suite)
    if "permitters" in only:
        records += permitter_records(seeds[0], args.pow_samples, args.posp_pairs)

    report = args.report or os.path.join(settings.report_dir, "acceptance.jsonl")
    write_report(records, report)
    summary = summarize(records)
    stats.update(records=summary["records"], mismatched=summary["mismatched"],
                 seconds=round(time.time() - start, 1))

    print("\n" + "=" * 50)
    print("ACCEPTANCE SUMMARY")
    print("=" * 50)
    for key, value in stats.items():
        print(f"{key.replace('_', ' ').title()}: {value}")
    print(f"Report: {report}")
    if stats["mismatched"]:
        print(f"\n❌ {stats['mismatched']} verdicts did not match their expectation")
        return 1
    print("\n✅ Every verdict matched its expectation")
    return 0


if __name__ == "__main__":
    sys.exit(main())
