"""
Scenario registry.

Every builder takes keyword parameters only and returns a ScenarioSpec.
"""

import inspect
from typing import Any, Callable, Dict, List, Mapping, Tuple

from utils.errors import ConfigurationError

from .base import InstanceSpec, PrefixCheck, ScenarioSpec
from .impossibility import (scenario_long_range, scenario_or_attack, scenario_partition, scenario_payment_circle,
                            scenario_pi_family, scenario_split_brain)
from .positive import scenario_accountability, scenario_committees, scenario_positive_da, scenario_positive_qp

SCENARIOS: Dict[str, Callable[..., ScenarioSpec]] = {
    "partition": scenario_partition,
    "or_attack": scenario_or_attack,
    "payment_circle": scenario_payment_circle,
    "long_range": scenario_long_range,
    "split_brain": scenario_split_brain,
    "pi_family": scenario_pi_family,
    "accountability": scenario_accountability,
    "positive_qp": scenario_positive_qp,
    "positive_da": scenario_positive_da,
    "committees": scenario_committees,
}


def get_scenario(name: str) -> Callable[..., ScenarioSpec]:
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}",
                                 "scenario.name")
    return SCENARIOS[name]


def build_scenario(name: str, params: Mapping[str, Any]) -> ScenarioSpec:
    builder = get_scenario(name)
    try:
        inspect.signature(builder).bind(**params)
    except TypeError as e:
        raise ConfigurationError(str(e), "params") from e
    return builder(**params)


def list_scenarios() -> List[Tuple[str, str]]:
    rows = []
    for name, builder in sorted(SCENARIOS.items()):
        spec = builder()
        rows.append((name, spec.description))
    return rows


__all__ = ["InstanceSpec", "PrefixCheck", "SCENARIOS", "ScenarioSpec", "build_scenario", "get_scenario",
           "list_scenarios"]
