"""
Scenario Runner

- run_scenario(spec, seed): every instance, its verdicts, the prefix and
  static checks, and one report record per verdict
- run_suite(suite): every run of a suite over every seed, optionally on a
  process pool; records come back sorted, whatever the completion order
- write_report / summarize: report JSONL and a pass-rate stats dict
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional

from services.settings import SettingKind, precheck_setting, satisfies_setting
from services.verdicts import Status, Verdict
from utils.engine import Execution
from utils.errors import SimulationError
from utils.trace import ExecutionTrace

from .base import InstanceSpec, ScenarioSpec, check_prefix, setting

logger = logging.getLogger(__name__)


@dataclass
class InstanceResult:
    name: str
    trace: ExecutionTrace
    verdicts: List[Verdict]
    execution: Optional[Execution] = None


@dataclass
class ScenarioResult:
    scenario: ScenarioSpec
    seed: int
    instances: Dict[str, InstanceResult] = field(default_factory=dict)
    records: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def matched(self) -> bool:
        return all(record["status"] == record["expected"] for record in self.records)

    def mismatches(self) -> List[Dict[str, Any]]:
        return [record for record in self.records if record["status"] != record["expected"]]

    def verdict(self, instance: str, prop: str) -> Optional[Verdict]:
        result = self.instances.get(instance)
        if result is None:
            return None
        return next((v for v in result.verdicts if v.prop == prop), None)


def make_record(scenario: str, instance: str, seed: int, verdict: Verdict, expected: str) -> Dict[str, Any]:
    return {
        "scenario": scenario,
        "instance": instance,
        "seed": seed,
        "property": verdict.prop,
        "status": verdict.status.value,
        "expected": expected,
        "witness": verdict.witness,
        "params": verdict.params,
    }


def hierarchy_verdict(trace: ExecutionTrace, instance: InstanceSpec) -> Verdict:
    """A trace meeting the quasi-permissionless condition also meets the dynamically available one."""
    qp = satisfies_setting(trace, SettingKind.QUASI_PERMISSIONLESS, instance.protocol)
    da = satisfies_setting(trace, SettingKind.DYNAMICALLY_AVAILABLE, instance.protocol)
    ok = da or not qp
    return Verdict("setting_hierarchy", Status.PASS if ok else Status.FAIL, {"qp": qp, "da": da})


def build_execution(instance: InstanceSpec, seed: int) -> Execution:
    execution = instance.build(seed)
    if instance.precheck:
        precheck_setting(execution.roster, execution.schedule, execution.stake_state, instance.setting,
                         execution.horizon, instance.rho)
    return execution


def run_instance(instance: InstanceSpec, seed: int) -> InstanceResult:
    execution = build_execution(instance, seed)
    trace = execution.run()
    verdicts: List[Verdict] = []
    for check in instance.checks:
        verdicts.extend(check(trace, execution))
    if instance.setting is not SettingKind.FULLY_PERMISSIONLESS:
        verdicts.extend(setting(instance.setting, instance.protocol)(trace, execution))
    verdicts.append(hierarchy_verdict(trace, instance))
    for verdict in verdicts:
        if verdict.status.value != instance.expected(verdict.prop):
            logger.info("%s/%s seed %d: %s is %s, expected %s", trace.scenario, instance.name, seed,
                        verdict.prop, verdict.status.value, instance.expected(verdict.prop))
    return InstanceResult(instance.name, trace, verdicts, execution)


def run_scenario(spec: ScenarioSpec, seed: int = 0, instances: Optional[Iterable[str]] = None) -> ScenarioResult:
    """Run the chosen instances (all by default); prefix checks need both of their instances."""
    wanted = set(instances) if instances is not None else set(spec.instance_names())
    result = ScenarioResult(spec, seed)
    for instance in spec.instances:
        if instance.name not in wanted:
            continue
        outcome = run_instance(instance, seed)
        result.instances[instance.name] = outcome
        result.records.extend(make_record(spec.name, instance.name, seed, v, instance.expected(v.prop))
                              for v in outcome.verdicts)
    for check in spec.prefix_checks:
        if check.left in result.instances and check.right in result.instances:
            verdict = check_prefix(result.instances[check.left].trace, result.instances[check.right].trace, check)
            result.records.append(make_record(spec.name, "", seed, verdict, spec.expected(verdict.prop)))
    for static in spec.static_checks:
        verdict = static()
        result.records.append(make_record(spec.name, "", seed, verdict, spec.expected(verdict.prop)))
    logger.info("%s seed %d: %d verdicts, %d mismatched", spec.name, seed, len(result.records),
                len(result.mismatches()))
    return result


def run_sections(sections: Mapping[str, Any], seed: int) -> List[Dict[str, Any]]:
    """Worker entry point: build the scenario from plain data and run it once."""
    from .loader import scenario_from_sections

    spec = scenario_from_sections(sections)
    try:
        return run_scenario(spec, seed).records
    except SimulationError as e:
        logger.warning("%s seed %d aborted: %s", spec.name, seed, e)
        failure = Verdict("execution", Status.FAIL, {"error": str(e), "kind": type(e).__name__})
        return [make_record(spec.name, "", seed, failure, Status.PASS.value)]


def _record_key(record: Mapping[str, Any]):
    return (record["scenario"], record["instance"], record["seed"], record["property"])


def run_suite(suite, seeds: Optional[Iterable[int]] = None, workers: Optional[int] = None) -> List[Dict[str, Any]]:
    seeds = list(seeds if seeds is not None else suite.seeds)
    workers = workers if workers is not None else suite.workers
    jobs = [(sections, seed) for sections in suite.runs for seed in seeds]
    records: List[Dict[str, Any]] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_sections, sections, seed) for sections, seed in jobs]
            for future in futures:
                records.extend(future.result())
    else:
        for sections, seed in jobs:
            records.extend(run_sections(sections, seed))
    records.sort(key=_record_key)
    return records


def write_report(records: Iterable[Mapping[str, Any]], path: str) -> int:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, default=str) + "\n")
            count += 1
    logger.info("wrote %d records to %s", count, path)
    return count


def summarize(records: Iterable[Mapping[str, Any]]) -> Dict[str, Any]:
    stats = {"records": 0, "matched": 0, "mismatched": 0, "pass": 0, "fail": 0, "n/a": 0}
    for record in records:
        stats["records"] += 1
        stats[record["status"]] = stats.get(record["status"], 0) + 1
        if record["status"] == record["expected"]:
            stats["matched"] += 1
        else:
            stats["mismatched"] += 1
    return stats
