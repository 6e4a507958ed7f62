"""
Execution Engine - Discrete-Time Stepping of Players, Oracles and Deliveries

- StateMachine: the honest behaviour interface driven once per ready timeslot
- AdversaryStrategy / ByzantineProxy: one coordinated strategy behind every
  Byzantine player, seeing all of their receipts
- Execution: owns the roster, mailboxes, permission ledger, oracle budgets and
  the trace; step_timeslot advances one timeslot, run() the whole horizon
- CorruptionEvent: one-time takeover of cashed-out players

A run is a pure function of its setup: oracle responses come from keyed
hashes of the seed and players step in ascending id order.
"""

import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from config import get_settings

from .errors import ConfigurationError, ScenarioValidationError, TimingRuleViolation
from .model import Activity, Entry, ExecutionConfig, Message, Player, Roster, TransactionEntry, digest_of
from .oracles import Oracle, PermissionLedger, Query
from .permitters import PermitterMode, ResourceAllocation, check_query_budget
from .timing import ActivitySchedule, Delivery, FixedDelay, TimingScript, delivery_violates
from .trace import ExecutionTrace
from .transactions import Environment, PublicView, ScheduledEnvironment, StakeState, Transaction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Outgoing:
    """A message to disseminate plus an optional routing hint for the timing script."""

    message: Message
    hint: Any = None


@dataclass(frozen=True)
class Envelope:
    """A received message as Byzantine players see it: with sender and send timeslot."""

    sender: str
    sent_at: int
    message: Message
    hint: Any = None


@dataclass
class StepInput:
    t: Optional[int]
    messages: List[Message] = field(default_factory=list)
    responses: List[Tuple[Query, Entry]] = field(default_factory=list)
    envelopes: List[Envelope] = field(default_factory=list)
    iteration: int = 0


@dataclass
class StepOutput:
    queries: List[Query] = field(default_factory=list)
    messages: List[Union[Message, Outgoing]] = field(default_factory=list)

    def outgoing(self) -> List[Outgoing]:
        return [m if isinstance(m, Outgoing) else Outgoing(m) for m in self.messages]


class StateMachine(ABC):
    """Honest behaviour of one player; on_step is called repeatedly until it stops querying."""

    knows_time: bool = True

    @abstractmethod
    def on_step(self, inp: StepInput) -> StepOutput:
        ...

    def confirmed(self) -> FrozenSet[Transaction]:
        return frozenset()

    def output(self) -> Optional[Any]:
        return None

    def drain_flags(self) -> List[Tuple[str, Dict[str, Any]]]:
        return []


class AdversaryStrategy(ABC):
    """Coordinated behaviour of all Byzantine players of an execution."""

    def setup(self, execution: "Execution") -> None:
        self.execution = execution

    def on_corrupt(self, player: Player, machine: Optional[StateMachine], t: int) -> None:
        """Hook for players taken over by a corruption event."""

    @abstractmethod
    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        ...


class SilentStrategy(AdversaryStrategy):
    """Byzantine players that never disseminate anything."""

    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        return StepOutput()


class ByzantineProxy(StateMachine):
    def __init__(self, player_id: str, strategy: AdversaryStrategy):
        self.player_id = player_id
        self.strategy = strategy

    def on_step(self, inp: StepInput) -> StepOutput:
        return self.strategy.on_step(self.player_id, inp.t, inp)


@dataclass
class CorruptionEvent:
    t: int
    players: Sequence[str]
    strategy: AdversaryStrategy


PlayerSource = Callable[[int], Iterable[Tuple[Player, StateMachine]]]


@dataclass
class _Pending:
    sender: str
    sent_at: int
    delivered_at: int
    seq: int
    message: Message
    hint: Any


class Execution:
    """Mutable state of one execution; build it, then call run()."""

    def __init__(self, cfg: ExecutionConfig, roster: Roster, stake_state: StakeState,
                 machines: Mapping[str, StateMachine], schedule: Optional[ActivitySchedule] = None,
                 timing: Optional[TimingScript] = None, oracles: Optional[Mapping[str, Oracle]] = None,
                 allocations: Optional[Mapping[str, ResourceAllocation]] = None,
                 environment: Optional[Environment] = None, adversary: Optional[AdversaryStrategy] = None,
                 corruptions: Sequence[CorruptionEvent] = (), player_source: Optional[PlayerSource] = None,
                 protocol: str = "", scenario: str = "", instance: str = "", inputs: Optional[Mapping[str, Any]] = None,
                 enforce_timing: bool = True):
        if cfg.duration is None:
            raise ConfigurationError("an unbounded duration cannot be simulated", "config.duration")
        self.cfg = cfg
        self.roster = roster
        self.stake_state = stake_state
        self.schedule = schedule or ActivitySchedule()
        self.timing = timing or FixedDelay(1)
        self.oracles: Dict[str, Oracle] = dict(oracles or {})
        self.allocations: Dict[str, ResourceAllocation] = dict(allocations or {})
        self.environment = environment or ScheduledEnvironment()
        self.adversary = adversary or SilentStrategy()
        self.corruptions = sorted(corruptions, key=lambda c: c.t)
        self.player_source = player_source
        self.enforce_timing = enforce_timing
        self.inner_loop_cap = get_settings().inner_loop_cap

        self.ledger = PermissionLedger(authenticated=cfg.authenticated)
        self.trace = ExecutionTrace(cfg, roster, stake_state, protocol, scenario, instance)
        self.trace.allocations = dict(self.allocations)
        self.trace.inputs = dict(inputs or {})
        for tx in self.environment.catalogue():
            self.trace.register_tx(tx)

        self.machines: Dict[str, StateMachine] = {}
        self._mailbox: Dict[str, List[_Pending]] = defaultdict(list)
        self._responses: Dict[str, List[Tuple[int, Query, Entry]]] = defaultdict(list)
        self._history: List[Tuple[str, int, Message, Any]] = []
        self._stalled: Dict[str, int] = {}
        self._status: Dict[str, Activity] = {}
        self._confirmed: Dict[str, FrozenSet[str]] = {}
        self._outputs_done: set = set()
        self._seen_txs: Dict[str, set] = defaultdict(set)
        self._seq = 0
        self.now = 0

        for player in roster:
            self.schedule.join(player.player_id, max(player.joined_at, self.schedule.joined_at(player.player_id)))
            self.ledger.enroll(player)
            if player.byzantine:
                self.machines[player.player_id] = ByzantineProxy(player.player_id, self.adversary)
            else:
                if player.player_id not in machines:
                    raise ConfigurationError(f"no state machine for honest player {player.player_id}", "players")
                self.machines[player.player_id] = machines[player.player_id]
        self.adversary.setup(self)
        for event in self.corruptions:
            event.strategy.setup(self)

    # -- helpers ---------------------------------------------------------------

    @property
    def horizon(self) -> int:
        return self.cfg.duration or 0

    def disseminations(self) -> List[Tuple[str, int, Message, Any]]:
        """Every (sender, t, message, hint) disseminated so far, in order."""
        return list(self._history)

    def status(self, player_id: str, t: int) -> Activity:
        stalled = self._stalled.get(player_id)
        if stalled is not None and t >= stalled:
            return Activity.INACTIVE
        return self.schedule.status(player_id, t)

    def _add_player(self, player: Player, machine: StateMachine, t: int) -> None:
        self.roster.add(player)
        self.schedule.join(player.player_id, max(t, player.joined_at))
        self.ledger.enroll(player)
        self.machines[player.player_id] = (ByzantineProxy(player.player_id, self.adversary)
                                           if player.byzantine else machine)
        join = self.schedule.joined_at(player.player_id)
        for sender, sent_at, message, hint in self._history:
            self._route(sender, player.player_id, message, sent_at, hint, earliest=join)
        logger.debug("player %s joins at %d", player.player_id, join)

    def _route(self, sender: str, receiver: str, message: Message, sent_at: int, hint: Any,
               earliest: int = 0) -> None:
        if sender == receiver:
            delivered: Optional[int] = sent_at + 1
        else:
            delivered = self.timing.deliver(sender, receiver, message, sent_at, hint)
            if delivered is not None:
                delivered = max(delivered, earliest)
        delivery = Delivery(sender, receiver, message.digest, sent_at, delivered)
        if self.enforce_timing and sender != receiver and delivery_violates(delivery, self.cfg, self.schedule,
                                                                            self.horizon):
            raise TimingRuleViolation(sender, receiver, message.digest, sent_at, delivered,
                                      self.cfg.delivery_bound(sent_at))
        self.trace.record(sent_at, receiver, "delivery", message.digest,
                          {"sender": sender, "sent": sent_at, "delivered": delivered})
        if delivered is not None:
            self._seq += 1
            self._mailbox[receiver].append(_Pending(sender, sent_at, delivered, self._seq, message, hint))

    def _disseminate(self, sender: str, outgoing: Outgoing, t: int) -> None:
        message = outgoing.message
        self._history.append((sender, t, message, outgoing.hint))
        self.trace.record(t, sender, "dissemination", message.digest,
                          {"hint": outgoing.hint} if outgoing.hint is not None else None)
        for receiver in self.roster.ids():
            self._route(sender, receiver, message, t, outgoing.hint)

    def _take_due(self, player_id: str, t: int) -> List[_Pending]:
        box = self._mailbox.get(player_id, [])
        due = [p for p in box if p.delivered_at <= t]
        if due:
            self._mailbox[player_id] = [p for p in box if p.delivered_at > t]
        due.sort(key=lambda p: (p.delivered_at, p.seq))
        return due

    def _take_responses(self, player_id: str, t: int) -> List[Tuple[Query, Entry]]:
        pending = self._responses.get(player_id, [])
        due = [(q, e) for when, q, e in pending if when <= t]
        if due:
            self._responses[player_id] = [item for item in pending if item[0] > t]
        return due

    def _answer(self, player: Player, queries: List[Query], t: int, spent: Dict[str, List[int]]) -> List[Tuple[Query, Entry]]:
        key = self.ledger.key_of(player)
        answered: List[Tuple[Query, Entry]] = []
        for query in queries:
            oracle = self.oracles.get(query.oracle_id)
            if oracle is None:
                self.trace.flag(t, player.player_id, "unknown_oracle", oracle=query.oracle_id)
                continue
            if not all(self.ledger.permits(key, entry) for entry in query.entries()):
                self.trace.flag(t, player.player_id, "forbidden_query", oracle=query.oracle_id)
                continue
            if oracle.permitter:
                allocation = self.allocations.get(query.oracle_id, ResourceAllocation(query.oracle_id))
                mode = getattr(oracle, "mode", PermitterMode.SINGLE_USE)
                if not check_query_budget(allocation, player.player_id, t, spent[query.oracle_id], query.b, mode):
                    self.trace.flag(t, player.player_id, "budget", oracle=query.oracle_id, b=query.b)
                    continue
                spent[query.oracle_id].append(query.b)
            self.trace.record(t, player.player_id, "query", digest_of(query), {"oracle": query.oracle_id, "b": query.b})
            for entry, delivered in oracle.respond(query, t):
                self.trace.record(t, player.player_id, "response", entry.digest,
                                  {"oracle": query.oracle_id, "delivered": delivered})
                if delivered <= t:
                    self.ledger.learn(key, [entry])
                    answered.append((query, entry))
                else:
                    self._responses[player.player_id].append((delivered, query, entry))
        return answered

    def _public_view(self) -> PublicView:
        return PublicView({pid: self.trace.confirmed_at(pid, self.now)
                           for pid in self.trace.honest_player_ids()})

    # -- corruption --------------------------------------------------------------

    def _apply_corruption(self, event: CorruptionEvent, t: int) -> None:
        others = [pid for pid in self.trace.honest_player_ids() if pid not in event.players]
        for pid in event.players:
            player = self.roster[pid]
            for other in others:
                confirmed = self.trace.confirmed_at(other, t - 1)
                for identifier in player.identifiers:
                    if self.stake_state.stake(confirmed, identifier) > 0:
                        raise ScenarioValidationError(
                            f"cannot corrupt {pid} at t={t}: {identifier} still holds stake in {other}'s confirmed set",
                            detail={"player": pid, "observer": other, "t": t},
                        )
        for pid in event.players:
            player = self.roster[pid]
            previous = self.machines.get(pid)
            self.ledger.pool(player)
            player.byzantine = True
            self.machines[pid] = ByzantineProxy(pid, event.strategy)
            event.strategy.on_corrupt(player, previous, t)
            self.trace.record(t, pid, "corruption")
            logger.info("t=%d: %s corrupted", t, pid)

    # -- stepping ------------------------------------------------------------------

    def step_timeslot(self, t: int) -> List[Tuple[str, Message]]:
        """Advance every ready player by one timeslot; returns the disseminations made."""
        self.now = t
        if self.player_source is not None:
            for player, machine in self.player_source(t) or ():
                self._add_player(player, machine, t)
        for event in self.corruptions:
            if event.t == t:
                self._apply_corruption(event, t)

        view = self._public_view() if self.environment.adaptive else PublicView()
        for injection in self.environment.injections(t, view):
            if injection.player not in self.roster:
                continue
            self.trace.register_tx(injection.tx)
            message = Message.of(TransactionEntry(injection.tx))
            self.trace.record(t, injection.player, "injection", message.digest, {"tx": injection.tx.tx_id})
            self._seq += 1
            self._mailbox[injection.player].append(_Pending("env", t, t, self._seq, message, None))

        for pid in self.roster.ids():
            status = self.status(pid, t)
            if self._status.get(pid, Activity.INACTIVE) is not status or pid not in self._status:
                self._status[pid] = status
                self.trace.record(t, pid, "status", data={"status": status.value})

        events: List[Tuple[str, Message]] = []
        for pid in self.roster.ids():
            if self.status(pid, t) is not Activity.ACTIVE:
                continue
            events.extend(self._step_player(pid, t))

        for pid in self.trace.honest_player_ids():
            machine = self.machines[pid]
            for reason, detail in machine.drain_flags():
                self.trace.flag(t, pid, reason, **detail)
        return events

    def _step_player(self, pid: str, t: int) -> List[Tuple[str, Message]]:
        player = self.roster[pid]
        machine = self.machines[pid]
        key = self.ledger.key_of(player)
        due = self._take_due(pid, t)
        for pending in due:
            self.ledger.learn_message(key, pending.message)
        self.trace.record(t, pid, "receipt", digest_of(tuple(p.message.digest for p in due)),
                          {"messages": sorted(p.message.digest for p in due)})
        honest = not player.byzantine
        if honest:
            for pending in due:
                for tx in pending.message.transactions():
                    self.trace.register_tx(tx)
                    if tx.tx_id not in self._seen_txs[pid]:
                        self._seen_txs[pid].add(tx.tx_id)
                        self.trace.record(t, pid, "tx_receipt", tx.digest, {"tx": tx.tx_id})

        inp = StepInput(
            t=t if (machine.knows_time or not honest) else None,
            messages=[p.message for p in due],
            responses=self._take_responses(pid, t),
            envelopes=[Envelope(p.sender, p.sent_at, p.message, p.hint) for p in due] if not honest else [],
        )
        spent: Dict[str, List[int]] = defaultdict(list)
        outgoing: List[Outgoing] = []
        iteration = 0
        while True:
            inp.iteration = iteration
            out = machine.on_step(inp)
            outgoing.extend(out.outgoing())
            if not out.queries:
                break
            iteration += 1
            if iteration > self.inner_loop_cap:
                self._stalled[pid] = t
                self.trace.flag(t, pid, "inner_loop_cap", iterations=iteration)
                return []
            inp = StepInput(t=inp.t, responses=self._answer(player, out.queries, t, spent))

        events: List[Tuple[str, Message]] = []
        for item in outgoing:
            if not self.ledger.permits_message(key, item.message):
                self.trace.flag(t, pid, "forbidden_message", message=item.message.digest)
                continue
            self._disseminate(pid, item, t)
            events.append((pid, item.message))

        if honest:
            self._record_outcomes(pid, machine, t)
        return events

    def _record_outcomes(self, pid: str, machine: StateMachine, t: int) -> None:
        confirmed = machine.confirmed()
        ids = frozenset(tx.tx_id for tx in confirmed)
        if ids != self._confirmed.get(pid, frozenset()):
            for tx in confirmed:
                self.trace.register_tx(tx)
            self._confirmed[pid] = ids
            self.trace.record(t, pid, "confirm", data={"txs": sorted(ids)})
        value = machine.output()
        if value is not None and pid not in self._outputs_done:
            self._outputs_done.add(pid)
            self.trace.record(t, pid, "output", data={"value": value})

    def run(self) -> ExecutionTrace:
        logger.info("running %s/%s for %d timeslots (seed %d)", self.trace.scenario, self.trace.instance,
                    self.horizon, self.cfg.seed)
        for t in range(1, self.horizon + 1):
            self.step_timeslot(t)
        self.trace.duration = self.horizon
        return self.trace
