"""
Scenario Building Blocks

- InstanceSpec: one named execution of a scenario (a seed -> Execution
  builder), the setting it declares, the checks run on its trace and the
  verdicts it is expected to produce
- PrefixCheck: trace-prefix indistinguishability between two instances for a
  set of players
- ScenarioSpec: the instances of a construction plus its static checks
- check factories shared by the scenario builders
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from services.settings import (ProtocolSpec, SettingKind, check_reactive, check_rho_bounded_execution,
                               confirmed_balances, satisfies_setting)
from services.verdicts import (Status, Verdict, check_accountability, check_ba, check_consistency,
                               check_liveness, check_optimistic_responsiveness)
from utils.engine import Execution
from utils.model import Player, Roster
from utils.trace import ExecutionTrace

logger = logging.getLogger(__name__)

Check = Callable[[ExecutionTrace, Optional[Execution]], List[Verdict]]
StaticCheck = Callable[[], Verdict]


@dataclass
class InstanceSpec:
    name: str
    build: Callable[[int], Execution]
    setting: SettingKind = SettingKind.DYNAMICALLY_AVAILABLE
    checks: List[Check] = field(default_factory=list)
    expect: Dict[str, str] = field(default_factory=dict)
    protocol: Optional[ProtocolSpec] = None
    rho: Optional[Fraction] = None
    precheck: bool = True

    def expected(self, prop: str) -> str:
        return self.expect.get(prop, Status.PASS.value)


@dataclass(frozen=True)
class PrefixCheck:
    """
    Players in `players` see the same receipts in both instances up to
    `until`; a string names a key of the right-hand trace's meta.
    """

    left: str
    right: str
    players: Sequence[str]
    until: Union[int, str]

    @property
    def prop(self) -> str:
        return f"indistinguishable:{self.left}/{self.right}"


@dataclass
class ScenarioSpec:
    name: str
    description: str
    instances: List[InstanceSpec]
    prefix_checks: List[PrefixCheck] = field(default_factory=list)
    static_checks: List[StaticCheck] = field(default_factory=list)
    params: Dict[str, Any] = field(default_factory=dict)
    expect: Dict[str, str] = field(default_factory=dict)

    def expected(self, prop: str) -> str:
        return self.expect.get(prop, Status.PASS.value)

    def instance(self, name: str) -> InstanceSpec:
        for spec in self.instances:
            if spec.name == name:
                return spec
        raise KeyError(f"scenario {self.name} has no instance {name}")

    def instance_names(self) -> List[str]:
        return [spec.name for spec in self.instances]


# ----------------------------------------------------------------------------
# Roster helpers
# ----------------------------------------------------------------------------

def make_roster(honest: Iterable[str] = (), byzantine: Iterable[str] = (),
                labels: Optional[Mapping[str, Iterable[str]]] = None) -> Roster:
    """One identifier per player, equal to its id."""
    labels = labels or {}
    players = [Player(pid, frozenset({pid}), False, labels=frozenset(labels.get(pid, ()))) for pid in honest]
    players += [Player(pid, frozenset({pid}), True, labels=frozenset(labels.get(pid, ()))) for pid in byzantine]
    return Roster(players)


# ----------------------------------------------------------------------------
# Check factories
# ----------------------------------------------------------------------------

def consistency() -> Check:
    return lambda trace, execution: [check_consistency(trace)]


def liveness(ell: int) -> Check:
    return lambda trace, execution: [check_liveness(trace, ell)]


def responsiveness(ell_of_delta: Callable[[int], int], delta_star: int = 0) -> Check:
    return lambda trace, execution: [check_optimistic_responsiveness(trace, ell_of_delta, delta_star)]


def agreement() -> Check:
    return lambda trace, execution: check_ba(trace)


def setting(kind: SettingKind, protocol: Optional[ProtocolSpec] = None) -> Check:
    kind = SettingKind(kind)

    def run(trace: ExecutionTrace, execution: Optional[Execution]) -> List[Verdict]:
        ok = satisfies_setting(trace, kind, protocol)
        return [Verdict(kind.value, Status.PASS if ok else Status.FAIL)]

    return run


def rho_bounded(rho: Any) -> Check:
    rho = Fraction(rho)

    def run(trace: ExecutionTrace, execution: Optional[Execution]) -> List[Verdict]:
        ok = check_rho_bounded_execution(trace, rho)
        return [Verdict("rho_bounded", Status.PASS if ok else Status.FAIL, params={"rho": str(rho)})]

    return run


def reactive(protocol: ProtocolSpec, ell_star: int, label: str = "reactive") -> Check:
    def run(trace: ExecutionTrace, execution: Optional[Execution]) -> List[Verdict]:
        ok = check_reactive(trace, protocol, ell_star)
        return [Verdict(label, Status.PASS if ok else Status.FAIL, params={"ell_star": ell_star})]

    return run


def confirmation(players: Sequence[str], tx_id: str, by: int) -> Check:
    """Every listed player has tx_id confirmed at timeslot `by`."""

    def run(trace: ExecutionTrace, execution: Optional[Execution]) -> List[Verdict]:
        missing = [p for p in players if tx_id not in trace.confirmed_ids_at(p, by)]
        prop = f"confirmed:{tx_id}"
        if missing:
            return [Verdict(prop, Status.FAIL, {"player": missing[0], "by": by})]
        return [Verdict(prop, Status.PASS, {"players": list(players), "by": by})]

    return run


def stake_concentration(holders: Iterable[str], t: int) -> Check:
    """Under every honest confirmed set at t, only `holders` own stake."""
    allowed = set(holders)

    def run(trace: ExecutionTrace, execution: Optional[Execution]) -> List[Verdict]:
        for p in trace.honest_player_ids():
            if not trace.is_active(p, t):
                continue
            owners = sorted(i for i, v in confirmed_balances(trace, p, t).items() if v > 0 and i not in allowed)
            if owners:
                return [Verdict("stake_concentration", Status.FAIL, {"observer": p, "t": t, "owners": owners})]
        return [Verdict("stake_concentration", Status.PASS, {"t": t, "holders": sorted(allowed)})]

    return run


def accountability(T_e: Iterable[Any] = (), rho1: Any = Fraction(1, 3)) -> Check:
    T_e = tuple(T_e)

    def run(trace: ExecutionTrace, execution: Optional[Execution]) -> List[Verdict]:
        if execution is None:
            return [Verdict("accountability", Status.NOT_APPLICABLE, {"reason": "messages not recorded in trace"})]
        entries = [entry for _, _, message, _ in execution.disseminations() for entry in message.entries]
        return [check_accountability(trace, entries, T_e, rho1)]

    return run


def check_prefix(left: ExecutionTrace, right: ExecutionTrace, check: PrefixCheck) -> Verdict:
    until = check.until
    if isinstance(until, str):
        if until not in right.meta:
            return Verdict(check.prop, Status.NOT_APPLICABLE, {"reason": f"trace has no {until!r} marker"})
        until = int(right.meta[until])
    for player in check.players:
        a = left.view(player, until)
        b = right.view(player, until)
        if a != b:
            diverged = next((min(x[0], y[0]) for x, y in zip(a, b) if x != y), None)
            if diverged is None:
                longer = a if len(a) > len(b) else b
                diverged = longer[min(len(a), len(b))][0]
            return Verdict(check.prop, Status.FAIL, {"player": player, "diverged_at": diverged}, {"until": until})
    return Verdict(check.prop, Status.PASS, {"players": list(check.players)}, {"until": until})
