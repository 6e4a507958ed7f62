"""
Adversaries - Byzantine Strategies and Their Delivery Scripts

Every strategy drives all Byzantine players of an execution:
- ShadowStrategy: one honest state machine per Byzantine player, outputs filtered
- WithholdingStrategy: never disseminates votes (crash-like towards QCs)
- EquivocatingLeaderStrategy: a second conflicting block for every led view,
  delivered first to the other half of the honest players
- PersonaStrategy: split-brain; each Byzantine player forks into several
  personas that see disjoint receipt streams and tag their output by branch
- LongRangeReplayStrategy: after a corruption, replays a simulated alternate
  history produced by a nested execution
- CrashDelayAdversary: the only fault model the Losa-Gafni suites admit

The hint-aware timing scripts (HalfSplitTiming, BranchTiming) route
disseminations according to the hints these strategies attach.
"""

import logging
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from utils.engine import AdversaryStrategy, Envelope, Execution, Outgoing, StateMachine, StepInput, StepOutput
from utils.model import ExecutionConfig, Message, Player
from utils.timing import TimingScript

from .pos_hotstuff import EMPTY_QC, GENESIS, Block, PosHotStuffNode, Vote

logger = logging.getLogger(__name__)

MachineFactory = Callable[[str], StateMachine]


class ShadowStrategy(AdversaryStrategy):
    """Runs an honest machine per Byzantine player and post-processes what it sends."""

    def __init__(self, factory: MachineFactory):
        self.factory = factory
        self.shadows: Dict[str, StateMachine] = {}

    def shadow(self, player_id: str) -> StateMachine:
        if player_id not in self.shadows:
            self.shadows[player_id] = self.factory(player_id)
        return self.shadows[player_id]

    def on_corrupt(self, player: Player, machine: Optional[StateMachine], t: int) -> None:
        if machine is not None:
            self.shadows[player.player_id] = machine

    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        out = self.shadow(player_id).on_step(inp)
        return StepOutput(queries=out.queries, messages=self.transform(player_id, t, out.outgoing()))

    def transform(self, player_id: str, t: int, outgoing: List[Outgoing]) -> List[Outgoing]:
        return outgoing


class WithholdingStrategy(ShadowStrategy):
    """Follows the protocol but drops every vote from `start` on."""

    def __init__(self, factory: MachineFactory, start: int = 1):
        super().__init__(factory)
        self.start = start
        self.withheld = 0

    def transform(self, player_id: str, t: int, outgoing: List[Outgoing]) -> List[Outgoing]:
        if t < self.start:
            return outgoing
        kept = [item for item in outgoing if not any(isinstance(e, Vote) for e in item.message.entries)]
        self.withheld += len(outgoing) - len(kept)
        return kept


class EquivocatingLeaderStrategy(ShadowStrategy):
    """
    Whenever the shadow proposes, a second block for the same view is built:
    the same parent without transactions, or else a fresh extension of the
    epoch genesis. The two proposals carry ("half", 0) and ("half", 1) hints.
    """

    def __init__(self, factory: MachineFactory):
        super().__init__(factory)
        self.equivocations: List[Tuple[str, str]] = []

    def _twin(self, node: PosHotStuffNode, block: Block) -> Optional[Block]:
        if block.txs:
            return Block(block.proposer, block.height, block.epoch, block.view, frozenset(), block.parent, block.qc)
        base = node.B_ge or GENESIS
        if base.digest == GENESIS.digest:
            qc = EMPTY_QC
        else:
            qc = node.pool.qc_for(base, 1, node.pool.tx_set(block.epoch - 1) or frozenset())
            if qc is None:
                return None
        twin = Block(block.proposer, base.height + 1, block.epoch, block.view, frozenset(), base, qc)
        return None if twin.digest == block.digest else twin

    def transform(self, player_id: str, t: int, outgoing: List[Outgoing]) -> List[Outgoing]:
        node = self.shadows[player_id]
        result: List[Outgoing] = []
        for item in outgoing:
            blocks = [e for e in item.message.entries if isinstance(e, Block)]
            if not blocks or not isinstance(node, PosHotStuffNode):
                result.append(item)
                continue
            twin = self._twin(node, blocks[0])
            if twin is None:
                result.append(item)
                continue
            self.equivocations.append((blocks[0].digest, twin.digest))
            logger.debug("t=%d %s equivocates in view %d", t, player_id, blocks[0].view)
            result.append(Outgoing(item.message, ("half", 0)))
            result.append(Outgoing(Message.of(twin), ("half", 1)))
        return result


class HalfSplitTiming(TimingScript):
    """("half", i) messages reach half i next timeslot and everyone else as late as allowed."""

    def __init__(self, inner: TimingScript, halves: Mapping[str, int], cfg: ExecutionConfig):
        self.inner = inner
        self.halves = dict(halves)
        self.cfg = cfg

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        if isinstance(hint, tuple) and len(hint) == 2 and hint[0] == "half":
            if self.halves.get(receiver) == hint[1]:
                return sent_at + 1
            return self.cfg.delivery_bound(sent_at)
        return self.inner.deliver(sender, receiver, message, sent_at, hint)


# ----------------------------------------------------------------------------
# Split brain
# ----------------------------------------------------------------------------

ReceiptFilter = Callable[[str, int, Envelope], bool]


class PersonaStrategy(AdversaryStrategy):
    """
    Byzantine players behave honestly until `fork_at`; from then on each
    runs one persona per branch. A persona is rebuilt by replaying the
    honest history into a fresh machine, sees only the receipts its filter
    admits, and its disseminations carry a ("branch", i) hint.
    """

    def __init__(self, factory: MachineFactory, branches: Sequence[ReceiptFilter], fork_at: int = 1):
        if not branches:
            raise ValueError("a persona strategy needs at least one branch")
        self.factory = factory
        self.branches = list(branches)
        self.fork_at = fork_at
        self._honest: Dict[str, StateMachine] = {}
        self._log: Dict[str, List[StepInput]] = {}
        self.personas: Dict[str, List[StateMachine]] = {}

    def _fork(self, player_id: str) -> None:
        personas = []
        for _ in self.branches:
            machine = self.factory(player_id)
            for past in self._log.get(player_id, ()):
                machine.on_step(past)
            personas.append(machine)
        self.personas[player_id] = personas
        logger.info("%s forks into %d personas", player_id, len(personas))

    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        if t < self.fork_at:
            machine = self._honest.setdefault(player_id, self.factory(player_id))
            self._log.setdefault(player_id, []).append(StepInput(inp.t, list(inp.messages)))
            return machine.on_step(inp)
        if player_id not in self.personas:
            self._fork(player_id)
        messages: List[Outgoing] = []
        for index, (admit, persona) in enumerate(zip(self.branches, self.personas[player_id])):
            seen = [env.message for env in inp.envelopes if admit(player_id, t, env)]
            out = persona.on_step(StepInput(inp.t, seen))
            messages.extend(Outgoing(item.message, ("branch", index)) for item in out.outgoing())
        return StepOutput(messages=messages)


def parity_filter(index: int, parity: int, fork_at: int, branches: int = 2) -> ReceiptFilter:
    """Admit pre-fork traffic, own-branch self deliveries, and receipts at timeslots of the given parity."""

    def admit(player_id: str, t: int, env: Envelope) -> bool:
        hint = env.hint
        if isinstance(hint, tuple) and len(hint) == 2 and hint[0] == "branch":
            if hint[1] != index:
                return False
            if env.sender == player_id:
                return True
        if env.sent_at < fork_at:
            return True
        return t % branches == parity

    return admit


def group_filter(index: int, senders: Iterable[str]) -> ReceiptFilter:
    """Admit messages from the given senders and from the same branch."""
    allowed = set(senders)

    def admit(player_id: str, t: int, env: Envelope) -> bool:
        hint = env.hint
        if isinstance(hint, tuple) and len(hint) == 2 and hint[0] == "branch":
            return hint[1] == index
        return env.sender in allowed or env.sender == "env"

    return admit


def next_with_parity(t: int, parity: int) -> int:
    nxt = t + 1
    return nxt if nxt % 2 == parity else nxt + 1


class BranchTiming(TimingScript):
    """
    Partitioned delivery from `start` until GST (for ever when GST is 0).
    Each branch has a member set and a parity (None: next timeslot). Honest
    senders belong to the first branch listing them; Byzantine personas to
    the branch in their hint. A dissemination reaches its own branch and the
    `shared` receivers on time and everyone else at GST; senders outside
    every branch, and `isolated` senders from timeslot 1, reach nobody
    before GST.
    """

    def __init__(self, cfg: ExecutionConfig, branches: Sequence[Tuple[Set[str], Optional[int]]],
                 shared: Iterable[str] = (), isolated: Iterable[str] = (), start: int = 1):
        self.cfg = cfg
        self.branches = [(set(members), parity) for members, parity in branches]
        self.shared = set(shared)
        self.isolated = set(isolated)
        self.start = start

    def _branch_of(self, sender: str, hint: Any) -> Optional[int]:
        if isinstance(hint, tuple) and len(hint) == 2 and hint[0] == "branch":
            return hint[1]
        for index, (members, _) in enumerate(self.branches):
            if sender in members:
                return index
        return None

    def _late(self, sent_at: int) -> int:
        return max(self.cfg.gst, sent_at + 1)

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        if self.cfg.gst and sent_at >= self.cfg.gst:
            return sent_at + 1
        if sender in self.isolated:
            return self._late(sent_at)
        if sent_at < self.start:
            return sent_at + 1
        index = self._branch_of(sender, hint)
        if index is None:
            return self._late(sent_at)
        members, parity = self.branches[index]
        if receiver in members or receiver in self.shared:
            return sent_at + 1 if parity is None else next_with_parity(sent_at, parity)
        return self._late(sent_at)


# ----------------------------------------------------------------------------
# Long-range replay
# ----------------------------------------------------------------------------

class LongRangeReplayStrategy(AdversaryStrategy):
    """
    Silent until it controls a player; on its first step at or after
    `start` it runs `build_history(t)` (a nested execution whose oracles are
    clamped to t) and disseminates every message the replayed senders sent
    there, in order.
    """

    def __init__(self, build_history: Callable[[int], Execution], senders: Iterable[str], start: int):
        self.build_history = build_history
        self.senders = set(senders)
        self.start = start
        self.replayed: List[Message] = []
        self._done = False

    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        if self._done or t < self.start:
            return StepOutput()
        self._done = True
        nested = self.build_history(t)
        nested.run()
        seen: Set[str] = set()
        for sender, _, message, _ in nested.disseminations():
            if sender in self.senders and message.digest not in seen:
                seen.add(message.digest)
                self.replayed.append(message)
        logger.info("t=%d: %s replays %d messages of a %d-timeslot alternate history",
                    t, player_id, len(self.replayed), nested.horizon)
        return StepOutput(messages=list(self.replayed))


# ----------------------------------------------------------------------------
# Crash / delay faults
# ----------------------------------------------------------------------------

class CrashDelayAdversary(AdversaryStrategy):
    """
    Faulty players run the honest machine but may crash (silent from a
    timeslot on) or have their disseminations delayed; nothing else is
    exposed, so faulty output is always honest output.
    """

    def __init__(self, factory: MachineFactory, crash_at: Optional[Mapping[str, int]] = None,
                 delay: Optional[Mapping[str, int]] = None):
        self.factory = factory
        self.crash_at = dict(crash_at or {})
        self.delay = dict(delay or {})
        self.machines: Dict[str, StateMachine] = {}

    def on_step(self, player_id: str, t: int, inp: StepInput) -> StepOutput:
        crash = self.crash_at.get(player_id)
        if crash is not None and t >= crash:
            return StepOutput()
        machine = self.machines.setdefault(player_id, self.factory(player_id))
        out = machine.on_step(inp)
        extra = self.delay.get(player_id, 0)
        hint = ("delay", extra) if extra else None
        return StepOutput(queries=out.queries, messages=[Outgoing(item.message, hint) for item in out.outgoing()])


class DelayTiming(TimingScript):
    """Adds the ("delay", k) hint's extra timeslots on top of the inner script, capped at the bound."""

    def __init__(self, inner: TimingScript, cfg: ExecutionConfig):
        self.inner = inner
        self.cfg = cfg

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        base = self.inner.deliver(sender, receiver, message, sent_at, None)
        if base is None or not (isinstance(hint, tuple) and len(hint) == 2 and hint[0] == "delay"):
            return base
        return min(base + int(hint[1]), self.cfg.delivery_bound(sent_at))
