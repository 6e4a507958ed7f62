"""
Scenario and Suite Files

Both are TOML documents with a top-level `version = 1`.

Scenario file:
- [scenario] name = registry name or "custom" (plus label / protocol / setting)
- [params] keyword arguments of the scenario builder
- [expect] prop = "pass" | "fail" | "n/a" for every instance, or
  [expect.<instance>] tables for one instance
- custom scenarios also read [config], [players], [stake], [environment],
  [timing] and [adversary]

Suite file:
- [suite] name, seeds ("a..b", "1,5,9" or an integer), workers
- [[run]] either file = "<scenario file>" (relative to the suite file) or
  scenario = "<registry name>" with optional params / expect tables
"""

import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

from utils.errors import ConfigurationError

from .base import ScenarioSpec
from .custom import parse_expect, scenario_custom

logger = logging.getLogger(__name__)

SUPPORTED_VERSION = 1


@dataclass
class SuiteSpec:
    name: str
    seeds: List[int]
    workers: int = 1
    runs: List[Dict[str, Any]] = field(default_factory=list)


def read_toml(path: str) -> Dict[str, Any]:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigurationError("no such file", path)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(str(e), path) from e
    version = data.get("version")
    if version != SUPPORTED_VERSION:
        raise ConfigurationError(f"unsupported version {version!r}, expected {SUPPORTED_VERSION}",
                                 f"{path}: version")
    return data


def parse_seeds(value: Any) -> List[int]:
    """'a..b' (inclusive), 'a,b,c' or a single integer."""
    if isinstance(value, bool):
        raise ConfigurationError(f"bad seed range {value!r}", "seeds")
    if isinstance(value, int):
        return [value]
    if isinstance(value, list):
        return [parse_seeds(v)[0] for v in value]
    text = str(value).strip()
    try:
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
            if high < low:
                raise ValueError
            return list(range(low, high + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"bad seed range {value!r}", "seeds")


def _apply_expect(spec: ScenarioSpec, table: Mapping[str, Any]) -> None:
    flat = parse_expect(table)
    for instance in spec.instances:
        instance.expect.update(flat)
        nested = table.get(instance.name)
        if isinstance(nested, dict):
            instance.expect.update(parse_expect(nested, f"expect.{instance.name}"))
    spec.expect.update(flat)
    unknown = [key for key, value in table.items() if isinstance(value, dict) and key not in spec.instance_names()]
    if unknown:
        raise ConfigurationError(f"no instance named {unknown[0]!r}", f"expect.{unknown[0]}")


def scenario_from_sections(sections: Mapping[str, Any]) -> ScenarioSpec:
    """Build the ScenarioSpec a parsed scenario file describes."""
    from . import build_scenario

    head = sections.get("scenario")
    if not isinstance(head, dict) or not isinstance(head.get("name"), str):
        raise ConfigurationError("a scenario name is required", "scenario.name")
    name = head["name"]
    if name == "custom":
        spec = scenario_custom(sections)
    else:
        params = sections.get("params", {})
        if not isinstance(params, dict):
            raise ConfigurationError("expected a table", "params")
        spec = build_scenario(name, params)
    expect = sections.get("expect", {})
    if not isinstance(expect, dict):
        raise ConfigurationError("expected a table", "expect")
    _apply_expect(spec, expect)
    return spec


def load_scenario(path: str) -> ScenarioSpec:
    sections = read_toml(path)
    try:
        return scenario_from_sections(sections)
    except ConfigurationError as e:
        raise ConfigurationError(str(e), path) from e


def load_suite(path: str, seeds: Optional[str] = None, workers: Optional[int] = None) -> SuiteSpec:
    """Parse a suite file into plain-data run sections; seeds / workers override the file."""
    data = read_toml(path)
    base = os.path.dirname(os.path.abspath(path))
    head = data.get("suite", {})
    runs: List[Dict[str, Any]] = []
    try:
        for index, row in enumerate(data.get("run", [])):
            where = f"run[{index}]"
            if "file" in row:
                target = os.path.join(base, row["file"])
                sections = read_toml(target)
            elif "scenario" in row:
                sections = {"version": SUPPORTED_VERSION, "scenario": {"name": row["scenario"]},
                            "params": row.get("params", {}), "expect": row.get("expect", {})}
            else:
                raise ConfigurationError("needs a file or a scenario", where)
            scenario_from_sections(sections)
            runs.append(sections)
        if not runs:
            raise ConfigurationError("a suite needs at least one [[run]]", "run")
        suite = SuiteSpec(
            name=str(head.get("name", os.path.splitext(os.path.basename(path))[0])),
            seeds=parse_seeds(seeds if seeds is not None else head.get("seeds", "0..0")),
            workers=int(workers if workers is not None else head.get("workers", 1)),
            runs=runs,
        )
    except ConfigurationError as e:
        raise ConfigurationError(str(e), path) from e
    logger.info("suite %s: %d runs x %d seeds", suite.name, len(suite.runs), len(suite.seeds))
    return suite
