"""
Impossibility Constructions - Executable Counterexample Instances

Each builder returns a ScenarioSpec whose instances replay one impossibility
construction against a concrete protocol:
- partition: network split before GST defeats agreement under dynamic availability
- or_attack: a fast confirmer cannot tell "the other side is asleep" from "slow"
- payment_circle: a valid transaction subset concentrating all stake in one player
- long_range: replay of a simulated alternate history after a corruption
- split_brain: Byzantine players running one persona per partition side
- pi_family: fresh players every timeslot under a scriptable crash/delay adversary
"""

import logging
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from services.adversaries import BranchTiming, LongRangeReplayStrategy, PersonaStrategy, parity_filter
from services.baselines import FixedWaitConfirmer, NaiveMajorityBA
from services.pos_hotstuff import PROTOCOL_NAME as POS_HOTSTUFF
from services.pos_hotstuff import PosHotStuffNode
from services.settings import ProtocolSpec, SettingKind
from services.verdicts import Status, Verdict
from utils.engine import (AdversaryStrategy, CorruptionEvent, Execution, StateMachine, StepInput, StepOutput)
from utils.errors import ConfigurationError, ScenarioValidationError
from utils.model import ExecutionConfig, Message, Player, Roster, SignedEntry
from utils.oracles import ClampedOracle, EphemeralKeyOracle, Oracle, is_time_malleable
from utils.permitters import ResourceAllocation
from utils.timing import ActivitySchedule, FixedDelay, Scripted
from utils.transactions import (DEFAULT_SEARCH_CAP, ScheduledEnvironment, StakeState, Transaction, genesis_utxo_id,
                                maximal_valid_sets, output_utxo_id, transfer_tx)

from .base import (InstanceSpec, PrefixCheck, ScenarioSpec, agreement, confirmation, consistency, liveness,
                   make_roster, reactive, responsiveness, rho_bounded, stake_concentration)

logger = logging.getLogger(__name__)

STAKE_PROTOCOL = ProtocolSpec(POS_HOTSTUFF)


def _verdict(prop: str, ok: bool, witness: Optional[Dict[str, Any]] = None) -> Verdict:
    return Verdict(prop, Status.PASS if ok else Status.FAIL, witness or {})


# ----------------------------------------------------------------------------
# Partition
# ----------------------------------------------------------------------------

PARTITION_SIDES = (("a0", "a1"), ("b0", "b1"))


def scenario_partition(delta: int = 2, gst: int = 20, decide_at: int = 6, duration: int = 30) -> ScenarioSpec:
    """
    I0: both sides active, cross traffic held until GST, mixed inputs.
    I1 / I2: only side 0 / side 1 is ever active, unanimous input 0 / 1.
    The naive majority baseline decides before GST, so I0 breaks agreement.
    """
    if not decide_at < gst <= duration:
        raise ConfigurationError("partition needs decide_at < gst <= duration", "params.gst")
    side_of = {p: i for i, side in enumerate(PARTITION_SIDES) for p in side}
    everyone = [p for side in PARTITION_SIDES for p in side]

    def instance(name: str, awake: Optional[int], inputs: Mapping[str, int]) -> InstanceSpec:
        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=delta, duration=duration, gst=gst, seed=seed)
            schedule = ActivitySchedule()
            if awake is not None:
                for p in everyone:
                    if side_of[p] != awake:
                        schedule.leave(p, 1)

            def rule(sender, receiver, message, sent_at, hint):
                if side_of[sender] == side_of[receiver]:
                    return sent_at + 1
                return max(sent_at + 1, gst) if awake is None else None

            machines = {p: NaiveMajorityBA([p], inputs[p], decide_at) for p in everyone}
            return Execution(cfg, make_roster(everyone), StakeState({p: 1 for p in everyone}), machines,
                             schedule=schedule, timing=Scripted(rule, "partition"), protocol="naive-majority",
                             scenario="partition", instance=name, inputs=inputs)

        expect = {"agreement": Status.FAIL.value} if awake is None else {}
        return InstanceSpec(name, build, SettingKind.DYNAMICALLY_AVAILABLE, [agreement()], expect)

    mixed = {p: side_of[p] for p in everyone}
    instances = [
        instance("I0", None, mixed),
        instance("I1", 0, {p: 0 for p in everyone}),
        instance("I2", 1, {p: 1 for p in everyone}),
    ]
    prefix = [PrefixCheck("I0", "I1", PARTITION_SIDES[0], gst - 1),
              PrefixCheck("I0", "I2", PARTITION_SIDES[1], gst - 1)]
    return ScenarioSpec("partition", "network partition before GST against majority-vote agreement",
                        instances, prefix, params={"delta": delta, "gst": gst, "decide_at": decide_at,
                                                   "duration": duration})


# ----------------------------------------------------------------------------
# Optimistic responsiveness
# ----------------------------------------------------------------------------

def scenario_or_attack(delta: int = 4, delta_star: int = 2, wait: int = 1) -> ScenarioSpec:
    """
    Side 0 sleeps after delta_star in I1, side 1 in I0; in I2 everybody stays
    awake but cross traffic takes the full delta. A confirmer fast enough to be
    responsive in I0 and I1 confirms both conflicting transfers in I2.
    """
    duration = delta_star + 2 * delta
    sides = (("a0", "a1"), ("b0", "b1"))
    side_of = {p: i for i, side in enumerate(sides) for p in side}
    everyone = [p for side in sides for p in side]
    s0 = {"a0": 2, "a1": 1, "b0": 1, "b1": 1}
    probe = StakeState(s0)
    tr0 = transfer_tx(probe, (), "a0", "a1", 2, tx_id="tr0")
    tr1 = transfer_tx(probe, (), "a0", "b0", 2, tx_id="tr1")
    issue_at = delta_star + 1

    def instance(name: str, awake: Optional[int]) -> InstanceSpec:
        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=delta, duration=duration, gst=0, seed=seed)
            s = StakeState(s0)
            schedule = ActivitySchedule()
            if awake is not None:
                for p in everyone:
                    if side_of[p] != awake:
                        schedule.leave(p, delta_star + 1)

            def rule(sender, receiver, message, sent_at, hint):
                if sent_at <= delta_star or side_of[sender] == side_of[receiver]:
                    return sent_at + 1
                return sent_at + delta if awake is None else None

            env = ScheduledEnvironment()
            if awake in (None, 0):
                env.send(tr0, sides[0], issue_at)
            if awake in (None, 1):
                env.send(tr1, sides[1], issue_at)
            machines = {p: FixedWaitConfirmer(s, wait) for p in everyone}
            return Execution(cfg, make_roster(everyone), s, machines, schedule=schedule,
                             timing=Scripted(rule, "or-attack"), environment=env, protocol="fixed-wait",
                             scenario="or_attack", instance=name)

        if awake is None:
            return InstanceSpec(name, build, SettingKind.DYNAMICALLY_AVAILABLE, [consistency()],
                                {"consistency": Status.FAIL.value})
        checks = [consistency(), responsiveness(lambda d: d + wait, delta_star)]
        return InstanceSpec(name, build, SettingKind.DYNAMICALLY_AVAILABLE, checks)

    instances = [instance("I0", 0), instance("I1", 1), instance("I2", None)]
    prefix = [PrefixCheck("I0", "I2", sides[0], delta_star + delta),
              PrefixCheck("I1", "I2", sides[1], delta_star + delta)]
    return ScenarioSpec("or_attack", "optimistic responsiveness against sleeping vs slow players",
                        instances, prefix, params={"delta": delta, "delta_star": delta_star, "wait": wait})


# ----------------------------------------------------------------------------
# Payment circle
# ----------------------------------------------------------------------------

def circle_players(n: int) -> List[str]:
    return [f"p{i}" for i in range(n)]


def circle_transactions(n: int) -> Dict[Tuple[int, int], Transaction]:
    """tx(i, r): p_i forwards the unit it got in round r-1 (its own in round 0) to p_{i+1}."""
    players = circle_players(n)
    txs: Dict[Tuple[int, int], Transaction] = {}
    for r in range(n):
        for i in range(n):
            if r == 0:
                inputs = {genesis_utxo_id(players[i])}
            else:
                inputs = {output_utxo_id(txs[((i - 1) % n, r - 1)].tx_id, 0)}
            txs[(i, r)] = Transaction(f"circle-r{r}-p{i}", inputs, ((players[(i + 1) % n], 1),))
    return txs


def circle_concentrating_subset(n: int) -> frozenset:
    """The first i transfers of each p_i: every unit stops at p0."""
    return frozenset(tx for (i, r), tx in circle_transactions(n).items() if r < i)


def scenario_payment_circle(n: int = 4, wait: int = 1, rho: Any = "1/3") -> ScenarioSpec:
    if n < 1:
        raise ConfigurationError("the payment circle needs at least one player", "params.n")
    players = circle_players(n)
    s0 = {p: 1 for p in players}
    txs = circle_transactions(n)
    concentrated = circle_concentrating_subset(n)
    rest = frozenset(txs.values()) - concentrated

    def concentration() -> Verdict:
        s = StakeState(s0)
        issued = {tx: 1 for tx in concentrated}
        issued.update({tx: 2 for tx in rest})
        valid = s.is_valid(concentrated)
        held = s.stake(concentrated, players[0]) if valid else 0
        cap = max(DEFAULT_SEARCH_CAP, len(txs))
        maximal = maximal_valid_sets(issued, 1, s, cap)
        everything = maximal_valid_sets(issued, 2, s, cap)
        ok = valid and held == n and maximal == [concentrated] and everything == [frozenset(txs.values())]
        return _verdict("circle_concentration", ok, {"n": n, "p0_stake": held, "subset": len(concentrated)})

    def round_prefixes() -> Verdict:
        s = StakeState(s0)
        for k in range(n + 1):
            prefix = frozenset(tx for (i, r), tx in txs.items() if r < k)
            balances = s.balances(prefix)
            if any(balances.get(p, 0) != 1 for p in players):
                return _verdict("circle_round_prefixes", False, {"rounds": k, "balances": balances})
        return _verdict("circle_round_prefixes", True, {"rounds": n})

    instances: List[InstanceSpec] = []
    if n >= 3:
        honest = players[1:]

        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=2, duration=8, seed=seed)
            s = StakeState(s0)
            env = ScheduledEnvironment()
            for tx in sorted(concentrated, key=lambda tx: tx.tx_id):
                env.send(tx, honest, 1)
            for tx in sorted(rest, key=lambda tx: tx.tx_id):
                env.send(tx, honest, 3)
            machines = {p: FixedWaitConfirmer(s, wait) for p in honest}
            return Execution(cfg, make_roster(honest, [players[0]]), s, machines, environment=env,
                             protocol="fixed-wait", scenario="payment_circle", instance="I0")

        instances.append(InstanceSpec("I0", build, SettingKind.QUASI_PERMISSIONLESS,
                                      [consistency(), rho_bounded(rho)], {"rho_bounded": Status.FAIL.value},
                                      rho=Fraction(rho)))
    return ScenarioSpec("payment_circle", "circular payments whose valid subset concentrates all stake",
                        instances, static_checks=[concentration, round_prefixes], params={"n": n})


# ----------------------------------------------------------------------------
# Long-range attack
# ----------------------------------------------------------------------------

LONG_RANGE_PLAYERS = ("p0", "p1", "p2")


def _long_range_txs() -> Tuple[Transaction, Transaction]:
    spend = {genesis_utxo_id("p0")}
    return (Transaction("t1-p0-p1", spend, (("p1", 4),)), Transaction("t2-p0-p2", spend, (("p2", 4),)))


def _long_range_oracles(seed: int, ephemeral: bool, now: Optional[int] = None) -> Dict[str, Oracle]:
    if not ephemeral:
        return {}
    oracle: Oracle = EphemeralKeyOracle(seed)
    if now is not None:
        oracle = ClampedOracle(oracle, now)
    return {oracle.oracle_id: oracle}


def _long_range_execution(seed: int, ephemeral: bool, delta: int, duration: int, sends: Sequence[Tuple[Transaction, Sequence[str], int]],
                          instance: str, now: Optional[int] = None,
                          corruptions: Sequence[CorruptionEvent] = ()) -> Execution:
    cfg = ExecutionConfig(delta=delta, duration=duration, seed=seed)
    s = StakeState({"p0": 4})
    env = ScheduledEnvironment()
    for tx, players, t in sends:
        env.send(tx, players, t)
    machines = {p: PosHotStuffNode([p], s, delta, ephemeral=ephemeral) for p in LONG_RANGE_PLAYERS}
    return Execution(cfg, make_roster(LONG_RANGE_PLAYERS), s, machines, timing=FixedDelay(1),
                     oracles=_long_range_oracles(seed, ephemeral, now), environment=env,
                     corruptions=corruptions, protocol=POS_HOTSTUFF, scenario="long_range", instance=instance)


def cash_out_time(trace_of_honest_run, tx_id: str, players: Sequence[str]) -> Optional[int]:
    """First timeslot after which every listed player has tx_id confirmed for good."""
    latest = 0
    for p in players:
        since = None
        for t, ids in trace_of_honest_run.confirmed_changes(p):
            if tx_id in ids:
                since = t if since is None else since
            else:
                since = None
        if since is None:
            return None
        latest = max(latest, since)
    return latest + 1


def scenario_long_range(protocol: str = "plain", delta: int = 2, duration: int = 120) -> ScenarioSpec:
    """
    I1: p0 pays everything to p1. I2: p0 pays everything to p2 instead.
    I3: I1, but p0 is corrupted once cashed out and replays p0's part of a
    simulated I2 whose oracles are clamped to the replay timeslot.
    """
    if protocol not in ("plain", "ephemeral"):
        raise ConfigurationError(f"unknown long-range protocol variant {protocol!r}", "params.protocol")
    ephemeral = protocol == "ephemeral"
    t1, t2 = _long_range_txs()

    def honest_run(seed: int) -> Execution:
        return _long_range_execution(seed, ephemeral, delta, duration, [(t1, ["p0"], 1)], "I1")

    def build_alternate(seed: int, horizon: int, now: Optional[int] = None) -> Execution:
        return _long_range_execution(seed, ephemeral, delta, horizon, [(t2, ["p0"], 1)], "I2", now=now)

    def build_attack(seed: int) -> Execution:
        reference = honest_run(seed).run()
        t_c = cash_out_time(reference, t1.tx_id, ["p1", "p2"])
        if t_c is None or t_c + 2 > duration:
            raise ScenarioValidationError("the honest run never cashes p0 out", {"duration": duration})
        strategy = LongRangeReplayStrategy(lambda t: build_alternate(seed, t_c, now=t), ["p0"], t_c)
        execution = _long_range_execution(seed, ephemeral, delta, duration,
                                          [(t1, ["p0"], 1), (t2, ["p0", "p2"], t_c)], "I3",
                                          corruptions=[CorruptionEvent(t_c, ["p0"], strategy)])
        execution.trace.meta["t_c"] = t_c
        execution.trace.meta["honest_until"] = t_c - 1
        return execution

    def oracles_malleable() -> Verdict:
        oracles = _long_range_oracles(0, ephemeral)
        malleable = all(is_time_malleable(oracle, duration) for oracle in oracles.values())
        return _verdict("time_malleable", malleable, {"oracles": sorted(oracles)})

    instances = [
        InstanceSpec("I1", honest_run, SettingKind.QUASI_PERMISSIONLESS,
                     [consistency(), confirmation(["p1", "p2"], t1.tx_id, duration)], protocol=STAKE_PROTOCOL),
        InstanceSpec("I2", lambda seed: build_alternate(seed, duration), SettingKind.QUASI_PERMISSIONLESS,
                     [consistency(), confirmation(["p1", "p2"], t2.tx_id, duration)], protocol=STAKE_PROTOCOL),
        InstanceSpec("I3", build_attack, SettingKind.QUASI_PERMISSIONLESS, [consistency()],
                     {} if ephemeral else {"consistency": Status.FAIL.value}, protocol=STAKE_PROTOCOL),
    ]
    prefix = [PrefixCheck("I1", "I3", ("p1", "p2"), "honest_until")]
    static = [oracles_malleable]
    return ScenarioSpec("long_range", f"long-range replay against {protocol} PoS-HotStuff", instances,
                        prefix, static, params={"protocol": protocol, "delta": delta, "duration": duration},
                        expect={"time_malleable": Status.FAIL.value} if ephemeral else {})


# ----------------------------------------------------------------------------
# Split brain
# ----------------------------------------------------------------------------

def scenario_split_brain(delta: int = 2, ell: int = 160) -> ScenarioSpec:
    """
    Phase one hands all stake to p0 through the circle subset; from t* on p0
    serves Y = {p1} on odd timeslots and Z = {p2, p3} on even ones.
    pt and pe hold no stake and stay isolated until GST.
    """
    n = 4
    players = circle_players(n)
    byzantine, y_side, z_side = players[0], [players[1]], players[2:]
    extras = ["pt", "pe"]
    s0 = {p: 1 for p in players}
    concentrated = circle_concentrating_subset(n)
    probe = StakeState(s0)
    tr1 = transfer_tx(probe, concentrated, byzantine, y_side[0], 1, tx_id="tr1")
    tr2 = transfer_tx(probe, concentrated, byzantine, z_side[0], 1, tx_id="tr2")
    t_star = ell + 1
    gst = t_star + ell + 1
    horizon = gst + 10
    until = t_star + ell

    def node_factory(s: StakeState):
        return lambda pid: PosHotStuffNode([pid], s, delta)

    def base_env(receivers: Sequence[str]) -> ScheduledEnvironment:
        env = ScheduledEnvironment()
        for tx in sorted(concentrated, key=lambda tx: tx.tx_id):
            env.send(tx, receivers, 1)
        return env

    def partitioned(name: str, sides: Sequence[Tuple[str, List[str], int, Transaction]],
                    corrupt: bool) -> InstanceSpec:
        def build(seed: int) -> Execution:
            cfg = ExecutionConfig(delta=delta, duration=horizon, gst=gst, seed=seed)
            s = StakeState(s0)
            everyone = players + extras
            env = base_env([byzantine] + players[1:] + ["pt"])
            for _, members, _, tx in sides:
                env.send(tx, members + ["pe"], t_star)
            branches = [({byzantine, *members}, parity) for _, members, parity, _ in sides]
            timing = BranchTiming(cfg, branches, shared=extras, isolated=extras, start=t_star)
            factory = node_factory(s)
            honest = [p for p in everyone if not (corrupt and p == byzantine)]
            adversary = None
            if corrupt:
                filters = [parity_filter(index, parity, t_star) for index, (_, _, parity, _) in enumerate(sides)]
                adversary = PersonaStrategy(factory, filters, fork_at=t_star)
            machines = {p: factory(p) for p in honest}
            roster = make_roster(honest, [byzantine] if corrupt else [])
            return Execution(cfg, roster, s, machines, timing=timing, environment=env, adversary=adversary,
                             protocol=POS_HOTSTUFF, scenario="split_brain", instance=name)

        checks = [consistency()] + [confirmation(members, tx.tx_id, until) for _, members, _, tx in sides]
        expect = {"consistency": Status.FAIL.value} if corrupt else {}
        return InstanceSpec(name, build, SettingKind.QUASI_PERMISSIONLESS, checks, expect, STAKE_PROTOCOL)

    def synchronous(name: str, members: List[str], sleepers: List[str], parity: int,
                    tx: Optional[Transaction]) -> InstanceSpec:
        def build(seed: int) -> Execution:
            duration = until + 10 if tx is not None else t_star + 10
            cfg = ExecutionConfig(delta=delta, duration=duration, gst=0, seed=seed)
            s = StakeState(s0)
            schedule = ActivitySchedule()
            for p in sleepers:
                schedule.leave(p, t_star)
            env = base_env(players)
            timing = FixedDelay(1)
            if tx is not None:
                env.send(tx, members, t_star)
                timing = BranchTiming(cfg, [({byzantine, *members}, parity)], start=t_star)
            factory = node_factory(s)
            machines = {p: factory(p) for p in players}
            return Execution(cfg, make_roster(players), s, machines, schedule=schedule, timing=timing,
                             environment=env, protocol=POS_HOTSTUFF, scenario="split_brain", instance=name)

        checks = [consistency(), liveness(ell)]
        if tx is None:
            checks += [stake_concentration([byzantine], t_star), reactive(STAKE_PROTOCOL, 0)]
        else:
            checks.append(confirmation(members, tx.tx_id, until))
        return InstanceSpec(name, build, SettingKind.QUASI_PERMISSIONLESS, checks, protocol=STAKE_PROTOCOL)

    y_branch = ("Y", y_side, 1, tr1)
    z_branch = ("Z", z_side, 0, tr2)
    instances = [
        synchronous("I0", [], [], 0, None),
        partitioned("I1", [y_branch], corrupt=False),
        partitioned("I2", [z_branch], corrupt=False),
        partitioned("I3", [y_branch, z_branch], corrupt=True),
        synchronous("I4", y_side, z_side, 1, tr1),
        synchronous("I5", z_side, y_side, 0, tr2),
    ]
    prefix = [
        PrefixCheck("I1", "I3", y_side, until),
        PrefixCheck("I2", "I3", z_side, until),
        PrefixCheck("I4", "I1", y_side, until),
        PrefixCheck("I5", "I2", z_side, until),
    ]
    return ScenarioSpec("split_brain", "Byzantine personas serving both sides of an odd/even partition",
                        instances, prefix, params={"delta": delta, "ell": ell, "t_star": t_star, "gst": gst})


# ----------------------------------------------------------------------------
# Fresh players every timeslot
# ----------------------------------------------------------------------------

class BeaconMachine(StateMachine):
    """Disseminates one signed beacon on its first step."""

    knows_time = False

    def __init__(self, identifier: str):
        self.identifier = identifier
        self.sent = False

    def on_step(self, inp: StepInput) -> StepOutput:
        if self.sent:
            return StepOutput()
        self.sent = True
        return StepOutput(messages=[Message.of(SignedEntry(self.identifier, ("beacon",)))])


class FaultScheduleStrategy(AdversaryStrategy):
    """Crashed players never speak; a delayed player sends its beacon at its release timeslot."""

    def __init__(self, releases: Mapping[str, int]):
        self.releases = dict(releases)
        self.sent: Set[str] = set()

    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        release = self.releases.get(player_id)
        if release is None or t < release or player_id in self.sent:
            return StepOutput()
        self.sent.add(player_id)
        return StepOutput(messages=[Message.of(SignedEntry(player_id, ("beacon",)))])


def pool_player_id(pool: int, t: int) -> str:
    return f"P{pool}-t{t}"


def parse_faults(faults: Optional[Mapping[Any, Any]], s: int) -> Dict[int, Tuple[str, int, int]]:
    """{t: ("crash", pool) | ("delay", pool, k)} with at most one faulty player per timeslot."""
    parsed: Dict[int, Tuple[str, int, int]] = {}
    for key, spec in (faults or {}).items():
        t = int(key)
        spec = list(spec)
        kind = str(spec[0])
        if kind not in ("crash", "delay") or len(spec) < 2:
            raise ConfigurationError(f"bad fault {spec!r} at t={t}", f"params.faults.{key}")
        pool = int(spec[1])
        if not 1 <= pool <= s:
            raise ConfigurationError(f"pool {pool} outside 1..{s}", f"params.faults.{key}")
        k = int(spec[2]) if kind == "delay" and len(spec) > 2 else 0
        if kind == "delay" and k < 1:
            raise ConfigurationError("a delay needs k >= 1", f"params.faults.{key}")
        parsed[t] = (kind, pool, k)
    return parsed


def scenario_pi_family(s: int = 3, horizon: int = 12, faults: Optional[Mapping[Any, Any]] = None,
                       rho: Any = "1/3") -> ScenarioSpec:
    """
    s fresh players join at every timeslot, one from each of the pools
    P1..Ps, and are active for that timeslot only. Each holds one unit of
    the external resource exactly while it is new.
    """
    if s < 1 or horizon < 1:
        raise ConfigurationError("pi family needs s >= 1 and horizon >= 1", "params.s")
    plan = parse_faults(faults, s)
    rho = Fraction(rho)

    def expected_beacons() -> Dict[str, Optional[int]]:
        expected: Dict[str, Optional[int]] = {}
        for t in range(1, horizon + 1):
            for pool in range(1, s + 1):
                pid = pool_player_id(pool, t)
                kind, faulty_pool, k = plan.get(t, ("", 0, 0))
                if faulty_pool != pool:
                    expected[pid] = t
                elif kind == "crash":
                    expected[pid] = None
                else:
                    expected[pid] = t + k if t + k <= horizon else None
        return expected

    def build(seed: int) -> Execution:
        cfg = ExecutionConfig(delta=2, duration=horizon, r_max=s, seed=seed)
        schedule = ActivitySchedule()
        allocation = ResourceAllocation("pow")
        releases: Dict[str, int] = {}
        for t in range(1, horizon + 1):
            for pool in range(1, s + 1):
                allocation.set(pool_player_id(pool, t), t, 1).set(pool_player_id(pool, t), t + 1, 0)
            kind, pool, k = plan.get(t, ("", 0, 0))
            if kind == "delay":
                releases[pool_player_id(pool, t)] = t + k

        def source(t: int):
            for pool in range(1, s + 1):
                pid = pool_player_id(pool, t)
                kind, faulty_pool, k = plan.get(t, ("", 0, 0))
                faulty = faulty_pool == pool
                schedule.leave(pid, t + 1 + (k if faulty and kind == "delay" else 0))
                player = Player(pid, frozenset({pid}), faulty, joined_at=t, labels=frozenset({f"P{pool}"}))
                yield player, BeaconMachine(pid)

        return Execution(cfg, Roster(), StakeState({}), {}, schedule=schedule, timing=FixedDelay(1),
                         allocations={"pow": allocation}, adversary=FaultScheduleStrategy(releases),
                         player_source=source, protocol="beacon", scenario="pi_family", instance="I0")

    def beacons(trace, execution) -> List[Verdict]:
        if execution is None:
            return [Verdict("beacons", Status.NOT_APPLICABLE, {"reason": "messages not recorded in trace"})]
        sent: Dict[str, int] = {}
        for sender, t, _, _ in execution.disseminations():
            sent.setdefault(sender, t)
        for pid, when in sorted(expected_beacons().items()):
            if sent.get(pid) != when:
                return [Verdict("beacons", Status.FAIL, {"player": pid, "expected": when, "sent": sent.get(pid)})]
        return [Verdict("beacons", Status.PASS, {"disseminations": len(sent)})]

    instance = InstanceSpec("I0", build, SettingKind.FULLY_PERMISSIONLESS, [beacons, rho_bounded(rho)], rho=rho)
    if plan and Fraction(1, s) > rho:
        instance.expect["rho_bounded"] = Status.FAIL.value
    return ScenarioSpec("pi_family", "fresh single-timeslot players under a crash/delay schedule", [instance],
                        params={"s": s, "horizon": horizon, "faults": {str(t): list(v) for t, v in plan.items()},
                                "rho": str(rho)})
