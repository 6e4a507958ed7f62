"""
Positive Suites - Executions the Protocols Are Expected to Survive

- accountability: a stake-majority equivocator is caught by the blame rule
- positive_qp: PoS-HotStuff under partial synchrony, equivocation, vote
  withholding, stake churn and optimistically responsive delivery
- positive_da: Losa-Gafni agreement with crash and delay faults
- committees: reactivity of a static committee versus a rolling one
"""

import logging
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence

from services.adversaries import (BranchTiming, CrashDelayAdversary, DelayTiming, EquivocatingLeaderStrategy,
                                  HalfSplitTiming, PersonaStrategy, WithholdingStrategy, group_filter)
from services.baselines import FixedWaitConfirmer
from services.losa_gafni import PROTOCOL_NAME as LOSA_GAFNI
from services.losa_gafni import CoinLedger, LosaGafniNode, output_timeslot
from services.pos_hotstuff import PROTOCOL_NAME as POS_HOTSTUFF
from services.pos_hotstuff import PosHotStuffNode, liveness_bound, responsiveness_bound
from services.settings import (ProtocolSpec, RollingCommitteeResource, SettingKind, StakeResource,
                               StaticCommitteeResource)
from services.verdicts import Status
from utils.engine import AdversaryStrategy, Execution
from utils.model import ExecutionConfig
from utils.timing import FixedDelay, PartialSynchrony, TimingScript
from utils.transactions import ChurnEnvironment, Environment, ScheduledEnvironment, StakeState, transfer_tx

from .base import (InstanceSpec, ScenarioSpec, accountability, agreement, consistency, liveness, make_roster,
                   reactive, responsiveness, rho_bounded)

logger = logging.getLogger(__name__)

STAKE_PROTOCOL = ProtocolSpec(POS_HOTSTUFF)
QP_PLAYERS = ("p0", "p1", "p2", "p3")


# ----------------------------------------------------------------------------
# Accountability
# ----------------------------------------------------------------------------

def scenario_accountability(delta: int = 2, duration: int = 200, rho1: str = "1/3") -> ScenarioSpec:
    """
    b owns half the stake and runs one persona per honest player; the
    partition lasts the whole execution, so both sides finalize a payment
    from b's genesis output and the conflicting certificates blame b alone.
    """
    s0 = {"b": 2, "h1": 1, "h2": 1}
    probe = StakeState(s0)
    tx_a = transfer_tx(probe, (), "b", "h1", 2, tx_id="tx-a")
    tx_b = transfer_tx(probe, (), "b", "h2", 2, tx_id="tx-b")

    def build(seed: int) -> Execution:
        cfg = ExecutionConfig(delta=delta, duration=duration, gst=duration, seed=seed)
        s = StakeState(s0)
        factory = lambda pid: PosHotStuffNode([pid], s, delta)
        adversary = PersonaStrategy(factory, [group_filter(0, {"h1"}), group_filter(1, {"h2"})], fork_at=1)
        timing = BranchTiming(cfg, [({"b", "h1"}, None), ({"b", "h2"}, None)])
        env = ScheduledEnvironment().send(tx_a, ["h1"], 1).send(tx_b, ["h2"], 1)
        return Execution(cfg, make_roster(["h1", "h2"], ["b"]), s, {p: factory(p) for p in ("h1", "h2")},
                         timing=timing, environment=env, adversary=adversary, protocol=POS_HOTSTUFF,
                         scenario="accountability", instance="I0")

    instance = InstanceSpec("I0", build, SettingKind.QUASI_PERMISSIONLESS,
                            [consistency(), accountability((), rho1)],
                            {"consistency": Status.FAIL.value}, STAKE_PROTOCOL)
    return ScenarioSpec("accountability", "equivocating stake majority caught by conflicting certificates",
                        [instance], params={"delta": delta, "duration": duration, "rho1": rho1})


# ----------------------------------------------------------------------------
# Quasi-permissionless PoS-HotStuff
# ----------------------------------------------------------------------------

def _qp_transfers(s: StakeState, receivers: Sequence[str]) -> ScheduledEnvironment:
    first = transfer_tx(s, (), "p0", "p1", 1, tx_id="pay-p0-p1")
    second = transfer_tx(s, (), "p2", "p1", 1, tx_id="pay-p2-p1")
    return ScheduledEnvironment().send(first, receivers, 5).send(second, receivers, 70)


def scenario_positive_qp(delta: int = 2, gst: int = 50, duration: int = 300, rho: str = "1/3",
                         responsive_delta: int = 100) -> ScenarioSpec:
    """Four unit-stake players; at most one of them Byzantine."""
    ell = liveness_bound(len(QP_PLAYERS), delta)
    honest3 = list(QP_PLAYERS[:3])

    def pos_instance(name: str, byzantine: Sequence[str] = (),
                     adversary: Optional[Callable[..., AdversaryStrategy]] = None, timing_of=None,
                     env_of=None, gst_: int = gst, duration_: int = duration, delta_: int = delta,
                     checks=None, expect: Optional[Dict[str, str]] = None) -> InstanceSpec:
        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=delta_, duration=duration_, gst=gst_, seed=seed)
            s = StakeState({p: 1 for p in QP_PLAYERS})
            honest = [p for p in QP_PLAYERS if p not in byzantine]
            factory = lambda pid: PosHotStuffNode([pid], s, delta_)
            timing: TimingScript = timing_of(cfg) if timing_of else PartialSynchrony(cfg)
            env: Environment = env_of(s, honest) if env_of else _qp_transfers(s, honest)
            return Execution(cfg, make_roster(honest, byzantine), s, {p: factory(p) for p in honest},
                             timing=timing, environment=env, adversary=adversary(factory) if adversary else None,
                             protocol=POS_HOTSTUFF, scenario="positive_qp", instance=name)

        default = [consistency(), liveness(ell), rho_bounded(rho)]
        return InstanceSpec(name, build, SettingKind.QUASI_PERMISSIONLESS, checks or default, expect or {},
                            STAKE_PROTOCOL, Fraction(rho))

    halves = {"p0": 0, "p1": 0, "p2": 1}

    def churn(s: StakeState, honest: Sequence[str]) -> ChurnEnvironment:
        rotation = [(QP_PLAYERS[i], QP_PLAYERS[(i + 1) % len(QP_PLAYERS)]) for i in range(len(QP_PLAYERS))]
        return ChurnEnvironment(s, rotation, {p: list(honest) for p in QP_PLAYERS}, start=5, period=20,
                                stop=duration - ell)

    def responsive_checks() -> List:
        return [consistency(), responsiveness(lambda d: responsiveness_bound(len(QP_PLAYERS), d))]

    def wait_confirmer(name: str) -> InstanceSpec:
        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=responsive_delta, duration=120, gst=0, seed=seed)
            s = StakeState({p: 1 for p in QP_PLAYERS})
            machines = {p: FixedWaitConfirmer(s, responsive_delta) for p in QP_PLAYERS}
            return Execution(cfg, make_roster(QP_PLAYERS), s, machines, timing=FixedDelay(1),
                             environment=_qp_transfers(s, QP_PLAYERS), protocol="fixed-wait",
                             scenario="positive_qp", instance=name)

        return InstanceSpec(name, build, SettingKind.QUASI_PERMISSIONLESS, responsive_checks(),
                            {"responsiveness": Status.FAIL.value})

    instances = [
        pos_instance("honest"),
        pos_instance("equivocating", ["p3"], EquivocatingLeaderStrategy,
                     timing_of=lambda cfg: HalfSplitTiming(PartialSynchrony(cfg), halves, cfg),
                     env_of=lambda s, honest: _qp_transfers(s, honest3)),
        pos_instance("withholding", ["p3"], WithholdingStrategy,
                     env_of=lambda s, honest: _qp_transfers(s, honest3)),
        pos_instance("churn", env_of=churn, gst_=0, timing_of=lambda cfg: FixedDelay(1)),
        pos_instance("responsive", gst_=0, duration_=120, delta_=responsive_delta,
                     timing_of=lambda cfg: FixedDelay(1), checks=responsive_checks()),
        wait_confirmer("fixed-wait"),
    ]
    return ScenarioSpec("positive_qp", "PoS-HotStuff under partial synchrony with one Byzantine player in four",
                        instances, params={"delta": delta, "gst": gst, "duration": duration, "ell": ell,
                                           "rho": rho, "responsive_delta": responsive_delta})


# ----------------------------------------------------------------------------
# Dynamically available agreement
# ----------------------------------------------------------------------------

DA_PLAYERS = ("c1", "c2", "c3", "c4", "c5")


def scenario_positive_da(delta: int = 2) -> ScenarioSpec:
    """Five unit-coin players under synchrony; faults stay below half of the coins."""
    s0 = {p: 1 for p in DA_PLAYERS}
    duration = output_timeslot(len(DA_PLAYERS), delta) + delta

    def instance(name: str, inputs: Mapping[str, int], crash_at: Optional[Mapping[str, int]] = None,
                 delay: Optional[Mapping[str, int]] = None) -> InstanceSpec:
        faulty = sorted(set(crash_at or {}) | set(delay or {}))

        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=delta, duration=duration, seed=seed)
            s = StakeState(s0)
            ledger = CoinLedger(s)
            factory = lambda pid: LosaGafniNode([pid], ledger, delta, inputs[pid])
            honest = [p for p in DA_PLAYERS if p not in faulty]
            adversary = CrashDelayAdversary(factory, crash_at, delay) if faulty else None
            timing: TimingScript = FixedDelay(1)
            if delay:
                timing = DelayTiming(timing, cfg)
            return Execution(cfg, make_roster(honest, faulty), s, {p: factory(p) for p in honest}, timing=timing,
                             adversary=adversary, protocol=LOSA_GAFNI, scenario="positive_da", instance=name,
                             inputs=inputs)

        return InstanceSpec(name, build, SettingKind.DYNAMICALLY_AVAILABLE, [agreement(), rho_bounded("1/2")])

    mixed = dict(zip(DA_PLAYERS, (0, 1, 0, 1, 1)))
    instances = [
        instance("unanimous", {p: 1 for p in DA_PLAYERS}),
        instance("mixed", mixed),
        instance("crash", mixed, crash_at={"c4": 2 * delta, "c5": 2 * delta}),
        instance("delay", mixed, delay={"c5": 1}),
    ]
    return ScenarioSpec("positive_da", "Losa-Gafni agreement with crash and delay faults", instances,
                        params={"delta": delta, "duration": duration})


# ----------------------------------------------------------------------------
# Committees and reactivity
# ----------------------------------------------------------------------------

def scenario_committees(delta: int = 2, duration: int = 120, ell_star: int = 10) -> ScenarioSpec:
    """p3 pays its unit to p0 early on; a committee fixed at genesis keeps counting p3."""
    static = ProtocolSpec(POS_HOTSTUFF, onchain_resources=(StakeResource(), StaticCommitteeResource(QP_PLAYERS)))
    rolling = ProtocolSpec(POS_HOTSTUFF, onchain_resources=(StakeResource(), RollingCommitteeResource(ell_star)))

    def build(seed: int) -> Execution:
        cfg = ExecutionConfig(delta=delta, duration=duration, seed=seed)
        s = StakeState({p: 1 for p in QP_PLAYERS})
        env = ChurnEnvironment(s, [("p3", "p0")], {"p3": list(QP_PLAYERS)}, start=2, label="handover")
        machines = {p: PosHotStuffNode([p], s, delta) for p in QP_PLAYERS}
        return Execution(cfg, make_roster(QP_PLAYERS), s, machines, timing=FixedDelay(1), environment=env,
                         protocol=POS_HOTSTUFF, scenario="committees", instance="I0")

    checks = [consistency(), reactive(static, ell_star, "reactive:static"),
              reactive(rolling, ell_star, "reactive:rolling")]
    instance = InstanceSpec("I0", build, SettingKind.QUASI_PERMISSIONLESS, checks,
                            {"reactive:static": Status.FAIL.value}, STAKE_PROTOCOL)
    return ScenarioSpec("committees", "static versus rolling committees after a stake handover", [instance],
                        params={"delta": delta, "duration": duration, "ell_star": ell_star})
