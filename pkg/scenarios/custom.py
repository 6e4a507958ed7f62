"""
Custom Scenarios - Positive Runs Straight From a Scenario File

scenario_custom() turns the [config], [players], [stake], [environment],
[timing], [adversary], [expect] and [params] sections of a scenario file into
a one-instance ScenarioSpec. Only the section contents are checked here; the
loader has already checked the file version.
"""

import logging
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

from services.adversaries import (CrashDelayAdversary, DelayTiming, EquivocatingLeaderStrategy, HalfSplitTiming,
                                  WithholdingStrategy)
from services.baselines import FixedWaitConfirmer, NaiveMajorityBA
from services.losa_gafni import CoinLedger, LosaGafniNode
from services.pos_hotstuff import PosHotStuffNode, liveness_bound, responsiveness_bound
from services.settings import ProtocolSpec, SettingKind
from services.verdicts import Status
from utils.engine import AdversaryStrategy, Execution, SilentStrategy, StateMachine
from utils.errors import ConfigurationError
from utils.model import ExecutionConfig, as_fraction
from utils.timing import ActivitySchedule, FixedDelay, PartialSynchrony, RandomDelay, TimingScript
from utils.transactions import ChurnEnvironment, Environment, ScheduledEnvironment, StakeState, Transaction, transfer_tx

from .base import (Check, InstanceSpec, ScenarioSpec, accountability, agreement, consistency, liveness,
                   make_roster, responsiveness, rho_bounded)

logger = logging.getLogger(__name__)

PROTOCOLS = ("pos-hotstuff", "losa-gafni", "fixed-wait", "naive-majority")
TIMINGS = ("fixed", "random", "partial")
ADVERSARIES = ("silent", "withholding", "equivocating", "crash-delay")
CHECKS = ("consistency", "liveness", "responsiveness", "agreement", "accountability", "rho_bounded")
STATUSES = tuple(status.value for status in Status)


def _table(sections: Mapping[str, Any], name: str) -> Dict[str, Any]:
    value = sections.get(name, {})
    if not isinstance(value, dict):
        raise ConfigurationError("expected a table", name)
    return value


def _int(table: Mapping[str, Any], key: str, where: str, default: Optional[int] = None) -> int:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"expected an integer, got {value!r}", f"{where}.{key}")
    return value


def _names(table: Mapping[str, Any], key: str, where: str) -> List[str]:
    value = table.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigurationError("expected a list of player ids", f"{where}.{key}")
    return list(value)


def parse_config(table: Mapping[str, Any]) -> ExecutionConfig:
    data = dict(table)
    try:
        return ExecutionConfig.from_dict(data)
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(str(e), "config") from e


def parse_expect(table: Mapping[str, Any], where: str = "expect") -> Dict[str, str]:
    expect: Dict[str, str] = {}
    for prop, status in table.items():
        if isinstance(status, dict):
            continue
        if status not in STATUSES:
            raise ConfigurationError(f"expected one of {', '.join(STATUSES)}, got {status!r}", f"{where}.{prop}")
        expect[prop] = status
    return expect


def _environment(table: Mapping[str, Any], s: StakeState, honest: Sequence[str]) -> Environment:
    churn = table.get("churn")
    if churn is not None:
        if not isinstance(churn, dict):
            raise ConfigurationError("expected a table", "environment.churn")
        rotation = [tuple(pair) for pair in churn.get("rotation", [])]
        if not rotation or not all(len(pair) == 2 for pair in rotation):
            raise ConfigurationError("expected a list of [from, to] pairs", "environment.churn.rotation")
        return ChurnEnvironment(s, rotation, {pair[0]: list(honest) for pair in rotation},
                                start=_int(churn, "start", "environment.churn", 1),
                                period=_int(churn, "period", "environment.churn", 1),
                                stop=churn.get("stop"),
                                amount=_int(churn, "amount", "environment.churn", 1))
    env = ScheduledEnvironment()
    issued: List[Transaction] = []
    for index, row in enumerate(table.get("transfers", [])):
        where = f"environment.transfers[{index}]"
        if not isinstance(row, dict):
            raise ConfigurationError("expected a table", where)
        try:
            tx = transfer_tx(s, issued, row["from"], row["to"], _int(row, "amount", where, 1),
                             tx_id=row.get("id", f"tx-{index}"))
        except KeyError as e:
            raise ConfigurationError(f"missing key {e.args[0]!r}", where) from e
        issued.append(tx)
        env.send(tx, row.get("players", list(honest)), _int(row, "t", where, 1))
    return env


def _timing(table: Mapping[str, Any], cfg: ExecutionConfig) -> TimingScript:
    kind = table.get("kind", "partial")
    if kind not in TIMINGS:
        raise ConfigurationError(f"expected one of {', '.join(TIMINGS)}, got {kind!r}", "timing.kind")
    if kind == "fixed":
        return FixedDelay(_int(table, "delay", "timing", 1))
    if kind == "random":
        return RandomDelay(cfg.seed, cfg.delta)
    return PartialSynchrony(cfg)


def _machine_factory(protocol: str, cfg: ExecutionConfig, s: StakeState, params: Mapping[str, Any],
                     inputs: Mapping[str, int]) -> Callable[[str], StateMachine]:
    if protocol == "pos-hotstuff":
        ephemeral = bool(params.get("ephemeral", False))
        return lambda pid: PosHotStuffNode([pid], s, cfg.delta, cfg.kappa, ephemeral=ephemeral)
    if protocol == "losa-gafni":
        ledger = CoinLedger(s)
        return lambda pid: LosaGafniNode([pid], ledger, cfg.delta, inputs.get(pid, 0))
    if protocol == "fixed-wait":
        wait = _int(params, "wait", "params", cfg.delta)
        return lambda pid: FixedWaitConfirmer(s, wait)
    decide_at = _int(params, "decide_at", "params", 2 * cfg.delta)
    return lambda pid: NaiveMajorityBA([pid], inputs.get(pid, 0), decide_at)


def _adversary(table: Mapping[str, Any], factory: Callable[[str], StateMachine]) -> AdversaryStrategy:
    kind = table.get("kind", "silent")
    if kind not in ADVERSARIES:
        raise ConfigurationError(f"expected one of {', '.join(ADVERSARIES)}, got {kind!r}", "adversary.kind")
    if kind == "withholding":
        return WithholdingStrategy(factory, _int(table, "start", "adversary", 1))
    if kind == "equivocating":
        return EquivocatingLeaderStrategy(factory)
    if kind == "crash-delay":
        return CrashDelayAdversary(factory, table.get("crash_at", {}), table.get("delay", {}))
    return SilentStrategy()


def _checks(names: Sequence[str], params: Mapping[str, Any], cfg: ExecutionConfig, n: int) -> List[Check]:
    checks: List[Check] = []
    for name in names:
        if name not in CHECKS:
            raise ConfigurationError(f"unknown check {name!r}", "params.checks")
        if name == "consistency":
            checks.append(consistency())
        elif name == "liveness":
            checks.append(liveness(_int(params, "ell", "params", liveness_bound(n, cfg.delta, cfg.kappa))))
        elif name == "responsiveness":
            checks.append(responsiveness(lambda d: responsiveness_bound(n, d, cfg.kappa),
                                         _int(params, "delta_star", "params", 0)))
        elif name == "agreement":
            checks.append(agreement())
        elif name == "accountability":
            checks.append(accountability((), params.get("rho1", "1/3")))
        else:
            checks.append(rho_bounded(params.get("rho", "1/3")))
    return checks


def scenario_custom(sections: Mapping[str, Any]) -> ScenarioSpec:
    """One instance "I0" described entirely by the file."""
    head = _table(sections, "scenario")
    params = _table(sections, "params")
    players = _table(sections, "players")
    honest = _names(players, "honest", "players")
    byzantine = _names(players, "byzantine", "players")
    if not honest:
        raise ConfigurationError("at least one honest player is required", "players.honest")
    stake = {str(k): _int(_table(sections, "stake"), k, "stake") for k in _table(sections, "stake")}
    protocol = head.get("protocol", "pos-hotstuff")
    if protocol not in PROTOCOLS:
        raise ConfigurationError(f"expected one of {', '.join(PROTOCOLS)}, got {protocol!r}", "scenario.protocol")
    try:
        setting = SettingKind(head.get("setting", SettingKind.QUASI_PERMISSIONLESS.value))
    except ValueError as e:
        raise ConfigurationError(str(e), "scenario.setting") from e
    inputs = {str(k): _int(params.get("inputs", {}), k, "params.inputs") for k in params.get("inputs", {})}
    default_checks = ["agreement"] if protocol in ("losa-gafni", "naive-majority") else ["consistency", "liveness"]
    check_names = params.get("checks", default_checks)
    config_table = _table(sections, "config")
    base_cfg = parse_config(config_table)
    checks = _checks(check_names, params, base_cfg, sum(stake.values()) or 1)
    sleep = _table(sections, "players").get("leave", {})
    label = head.get("label", "custom")

    # validate everything that does not depend on the seed up front
    probe = StakeState(stake)
    _environment(_table(sections, "environment"), probe, honest)
    _timing(_table(sections, "timing"), base_cfg)
    _adversary(_table(sections, "adversary"), _machine_factory(protocol, base_cfg, probe, params, inputs))

    def build(seed: int) -> Execution:
        cfg = base_cfg.with_seed(seed)
        s = StakeState(stake)
        schedule = ActivitySchedule()
        for pid, t in sleep.items():
            schedule.leave(pid, int(t))
        factory = _machine_factory(protocol, cfg, s, params, inputs)
        timing = _timing(_table(sections, "timing"), cfg)
        adversary_table = _table(sections, "adversary")
        if adversary_table.get("delay"):
            timing = DelayTiming(timing, cfg)
        if adversary_table.get("kind") == "equivocating":
            halves = {p: i % 2 for i, p in enumerate(honest)}
            timing = HalfSplitTiming(timing, halves, cfg)
        return Execution(cfg, make_roster(honest, byzantine), s, {p: factory(p) for p in honest},
                         schedule=schedule, timing=timing, environment=_environment(_table(sections, "environment"),
                                                                                      s, honest),
                         adversary=_adversary(adversary_table, factory) if byzantine else None,
                         protocol=protocol, scenario="custom", instance="I0", inputs=inputs or None)

    rho = params.get("rho")
    instance = InstanceSpec("I0", build, setting, checks, parse_expect(_table(sections, "expect")),
                            ProtocolSpec(protocol), as_fraction(rho) if rho is not None else None)
    return ScenarioSpec("custom", label, [instance], params={"label": label, "protocol": protocol})
