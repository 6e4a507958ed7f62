"""
Settings - Setting Hierarchy Checkers and On-Chain Resources

Executable definitions of the four settings a protocol may be analysed in:
- fully permissionless < dynamically available < quasi-permissionless < permissioned
- on-chain resources (stake and protocol-defined balances) evaluated on a
  player's confirmed history
- reactivity of on-chain resources, rho-boundedness of an execution
- a schedule-level precheck run before a scenario instance is stepped

Every checker is a pure function of an ExecutionTrace.
"""

import logging
import weakref
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from utils.errors import InvalidTransactionSetError, ScenarioValidationError
from utils.model import Roster
from utils.permitters import rho_bounded_external
from utils.timing import ActivitySchedule
from utils.trace import ExecutionTrace
from utils.transactions import StakeState

logger = logging.getLogger(__name__)

_BALANCES: "weakref.WeakKeyDictionary[ExecutionTrace, Dict[FrozenSet[str], Dict[str, int]]]" = \
    weakref.WeakKeyDictionary()


class SettingKind(str, Enum):
    FULLY_PERMISSIONLESS = "fully_permissionless"
    DYNAMICALLY_AVAILABLE = "dynamically_available"
    QUASI_PERMISSIONLESS = "quasi_permissionless"
    PERMISSIONED = "permissioned"

    @property
    def rank(self) -> int:
        return _RANKS[self]


_RANKS = {
    SettingKind.FULLY_PERMISSIONLESS: 0,
    SettingKind.DYNAMICALLY_AVAILABLE: 1,
    SettingKind.QUASI_PERMISSIONLESS: 2,
    SettingKind.PERMISSIONED: 3,
}


def confirmed_balances(trace: ExecutionTrace, player: str, t: int) -> Dict[str, int]:
    """S(S0, T) for the set T the player has confirmed at t."""
    return balances_of(trace, trace.confirmed_ids_at(player, t))


def balances_of(trace: ExecutionTrace, ids: FrozenSet[str]) -> Dict[str, int]:
    cache = _BALANCES.setdefault(trace, {})
    if ids not in cache:
        try:
            cache[ids] = trace.stake_state().balances(frozenset(trace.tx(i) for i in ids))
        except InvalidTransactionSetError:
            logger.warning("invalid confirmed set %s treated as stakeless", sorted(ids))
            cache[ids] = {}
    return cache[ids]


def confirmed_sets_during(trace: ExecutionTrace, player: str, t1: int, t2: int) -> List[FrozenSet[str]]:
    """Every confirmed set the player holds at some timeslot of [t1, t2]."""
    sets = [trace.confirmed_ids_at(player, t1)]
    for t, ids in trace.confirmed_changes(player):
        if t1 < t <= t2:
            sets.append(ids)
    return sets


# ----------------------------------------------------------------------------
# On-chain resources
# ----------------------------------------------------------------------------

class OnChainResource(ABC):
    """Balance function over a player's confirmed history."""

    kind: str = "protocol_defined"
    name: str = "resource"

    @abstractmethod
    def balances(self, trace: ExecutionTrace, observer: str, t: int) -> Dict[str, int]:
        ...

    def owns(self, trace: ExecutionTrace, observer: str, t: int, identifiers: Iterable[str]) -> bool:
        table = self.balances(trace, observer, t)
        return any(table.get(i, 0) > 0 for i in identifiers)


class StakeResource(OnChainResource):
    kind = "stake"
    name = "stake"

    def balances(self, trace, observer, t):
        return confirmed_balances(trace, observer, t)


class StaticCommitteeResource(OnChainResource):
    """Fixed membership forever: one unit per committee identifier."""

    name = "static-committee"

    def __init__(self, members: Iterable[str]):
        self.members = frozenset(members)

    def balances(self, trace, observer, t):
        return {m: 1 for m in self.members}


class RollingCommitteeResource(OnChainResource):
    """Member iff the identifier held confirmed stake at some point of the last `lag` timeslots."""

    name = "rolling-committee"

    def __init__(self, lag: int):
        if lag < 0:
            raise ValueError("lag must be non-negative")
        self.lag = lag

    def balances(self, trace, observer, t):
        members: Dict[str, int] = {}
        for ids in confirmed_sets_during(trace, observer, max(0, t - self.lag), t):
            stake = balances_of(trace, ids)
            for identifier, value in stake.items():
                if value > 0:
                    members[identifier] = 1
        return members


@dataclass
class ProtocolSpec:
    """What the checkers need to know about a protocol besides its trace."""

    name: str
    oracles: Tuple[str, ...] = ()
    permitters: Tuple[str, ...] = ()
    onchain_resources: Tuple[OnChainResource, ...] = field(default_factory=lambda: (StakeResource(),))
    confirmation: Optional[Callable[..., Any]] = None

    @property
    def is_proof_of_stake(self) -> bool:
        return not self.permitters and all(r.kind == "stake" for r in self.onchain_resources)


def _resources(protocol: Optional[ProtocolSpec]) -> Sequence[OnChainResource]:
    return protocol.onchain_resources if protocol is not None else (StakeResource(),)


def _holders(trace: ExecutionTrace, table: Dict[str, int], players: Iterable[str]) -> List[str]:
    return [p for p in players if any(table.get(i, 0) > 0 for i in trace.roster[p].identifiers)]


# ----------------------------------------------------------------------------
# Checkers
# ----------------------------------------------------------------------------

def check_dynamically_available(trace: ExecutionTrace, protocol: Optional[ProtocolSpec] = None) -> bool:
    """Whenever an honest active player's confirmed set stakes honest players, one of them is active."""
    honest = trace.honest_player_ids()
    for t in range(1, trace.duration + 1):
        active = {p for p in honest if trace.is_active(p, t)}
        checked = set()
        for p in sorted(active):
            ids = trace.confirmed_ids_at(p, t)
            if ids in checked:
                continue
            checked.add(ids)
            staked = _holders(trace, confirmed_balances(trace, p, t), honest)
            if staked and not active.intersection(staked):
                logger.info("t=%d: no honest stakeholder active under %s's confirmed set", t, p)
                return False
    return True


def check_quasi_permissionless(trace: ExecutionTrace, protocol: Optional[ProtocolSpec] = None) -> bool:
    """Every honest player holding an on-chain resource, as seen by an honest active player, is active."""
    honest = trace.honest_player_ids()
    resources = _resources(protocol)
    for t in range(1, trace.duration + 1):
        active = {p for p in honest if trace.is_active(p, t)}
        for p in sorted(active):
            for resource in resources:
                missing = [q for q in _holders(trace, resource.balances(trace, p, t), honest) if q not in active]
                if missing:
                    logger.info("t=%d: %s holders %s inactive (observer %s)", t, resource.name, missing, p)
                    return False
    return True


def check_permissioned(trace: ExecutionTrace) -> bool:
    """Fixed roster from the start, one identifier per player, everybody always active."""
    for player in trace.roster:
        if len(player.identifiers) != 1 or player.joined_at > 1:
            return False
        if any(not trace.is_active(player.player_id, t) for t in range(1, trace.duration + 1)):
            return False
    return True


def _owns_external(trace: ExecutionTrace, player: str, t1: int, t2: int) -> bool:
    return any(allocation.balance(player, t) > 0
               for allocation in trace.allocations.values() for t in range(t1, t2 + 1))


def _owns_stake(trace: ExecutionTrace, identifiers: FrozenSet[str], honest: Sequence[str], t1: int, t2: int) -> bool:
    for q in honest:
        for ids in confirmed_sets_during(trace, q, t1, t2):
            table = balances_of(trace, ids)
            if any(table.get(i, 0) > 0 for i in identifiers):
                return True
    return False


def check_reactive(trace: ExecutionTrace, protocol: Optional[ProtocolSpec], ell_star: int) -> bool:
    """
    Players owning no external resource and no stake throughout an interval of
    length ell_star after GST own none of any on-chain resource at its end.
    """
    if ell_star < 0:
        raise ValueError("ell_star must be non-negative")
    resources = [r for r in _resources(protocol) if r.kind != "stake"]
    if not resources:
        return True
    honest = trace.honest_player_ids()
    start = max(trace.cfg.gst, 1)
    # the shortest interval ending at t2 has the weakest hypothesis
    for t2 in range(start + ell_star, trace.duration + 1):
        t1 = t2 - ell_star
        for player in trace.roster:
            if _owns_external(trace, player.player_id, t1, t2):
                continue
            if _owns_stake(trace, player.identifiers, honest, t1, t2):
                continue
            for resource in resources:
                for q in honest:
                    if resource.owns(trace, q, t2, player.identifiers):
                        logger.info("t=%d: resourceless %s still owns %s for %s",
                                    t2, player.player_id, resource.name, q)
                        return False
    return True


def check_rho_bounded_execution(trace: ExecutionTrace, rho: Any) -> bool:
    """External allocations and active-player stake never give Byzantine players more than rho."""
    rho = Fraction(rho)
    byzantine = trace.byzantine_player_ids()
    if trace.allocations and not rho_bounded_external(trace.allocations.values(), byzantine, rho,
                                                      trace.cfg.r_max, trace.duration):
        return False
    honest = trace.honest_player_ids()
    byz = set(byzantine)
    for t in range(1, trace.duration + 1):
        active = [p for p in trace.roster.ids() if trace.is_active(p, t)]
        seen = set()
        for p in honest:
            ids = trace.confirmed_ids_at(p, t)
            if ids in seen:
                continue
            seen.add(ids)
            table = confirmed_balances(trace, p, t)
            total = 0
            byz_total = 0
            for q in active:
                held = sum(table.get(i, 0) for i in trace.roster[q].identifiers)
                total += held
                if q in byz:
                    byz_total += held
            if total and Fraction(byz_total, total) > rho:
                logger.info("t=%d: Byzantine active stake %d/%d exceeds %s under %s's confirmed set",
                            t, byz_total, total, rho, p)
                return False
    return True


def classify_setting(trace: ExecutionTrace, protocol: Optional[ProtocolSpec] = None) -> SettingKind:
    """The strongest setting whose participation condition the trace satisfies."""
    if check_permissioned(trace):
        return SettingKind.PERMISSIONED
    if check_quasi_permissionless(trace, protocol):
        return SettingKind.QUASI_PERMISSIONLESS
    if check_dynamically_available(trace, protocol):
        return SettingKind.DYNAMICALLY_AVAILABLE
    return SettingKind.FULLY_PERMISSIONLESS


def satisfies_setting(trace: ExecutionTrace, setting: SettingKind, protocol: Optional[ProtocolSpec] = None) -> bool:
    setting = SettingKind(setting)
    if setting is SettingKind.PERMISSIONED:
        return check_permissioned(trace)
    if setting is SettingKind.QUASI_PERMISSIONLESS:
        return check_quasi_permissionless(trace, protocol)
    if setting is SettingKind.DYNAMICALLY_AVAILABLE:
        return check_dynamically_available(trace, protocol)
    return True


def precheck_setting(roster: Roster, schedule: ActivitySchedule, s: StakeState, setting: SettingKind,
                     horizon: int, rho: Optional[Any] = None) -> None:
    """
    Validate an instance against S0 before it is stepped.

    Confirmed sets start empty, so the participation condition at the first
    timeslot is decided by S0 and the schedule alone.
    """
    setting = SettingKind(setting)
    problems: List[str] = []
    orphans = sorted(i for i in s.s0 if roster.owner_of(i) is None)
    if orphans:
        problems.append(f"initial stake held by unknown identifiers {orphans}")
    honest_stakers = [p.player_id for p in roster.honest() if any(s.s0.get(i, 0) for i in p.identifiers)]
    first = 1
    if setting is SettingKind.PERMISSIONED:
        for player in roster:
            if len(player.identifiers) != 1:
                problems.append(f"{player.player_id} holds {len(player.identifiers)} identifiers")
            idle = [t for t in range(1, horizon + 1) if not schedule.is_active(player.player_id, t)]
            if idle:
                problems.append(f"{player.player_id} inactive at t={idle[0]}")
    elif setting is SettingKind.QUASI_PERMISSIONLESS:
        idle = [p for p in honest_stakers if not schedule.is_active(p, first)]
        if idle:
            problems.append(f"honest stakeholders {idle} inactive at t={first}")
    elif setting is SettingKind.DYNAMICALLY_AVAILABLE:
        if honest_stakers and not any(schedule.is_active(p, first) for p in honest_stakers):
            problems.append(f"no honest stakeholder active at t={first}")
    if rho is not None and s.total:
        active = [p for p in roster if schedule.is_active(p.player_id, first)]
        total = sum(s.s0.get(i, 0) for p in active for i in p.identifiers)
        byz = sum(s.s0.get(i, 0) for p in active if p.byzantine for i in p.identifiers)
        if total and Fraction(byz, total) > Fraction(rho):
            problems.append(f"Byzantine share {byz}/{total} of active initial stake exceeds {rho}")
    if problems:
        raise ScenarioValidationError(f"instance does not fit the {setting.value} setting", problems)
    logger.debug("precheck passed for %s", setting.value)
