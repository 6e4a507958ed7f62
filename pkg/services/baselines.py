"""
Baselines - Strawman Protocols for the Impossibility Scenarios

Deliberately weak protocols that give the impossibility constructions a
concrete victim:
- NaiveMajorityBA: broadcast the input, output the majority at a fixed timeslot
- FixedWaitConfirmer: confirm a transaction once it has been known for a
  fixed number of timeslots
"""

import logging
from typing import Any, Dict, FrozenSet, Iterable, List, Optional

from utils.engine import StateMachine, StepInput, StepOutput
from utils.model import Message, SignedEntry, TransactionEntry
from utils.transactions import StakeState, Transaction

logger = logging.getLogger(__name__)


class NaiveMajorityBA(StateMachine):
    """Outputs the majority of the inputs heard by `decide_at` (ties go to 0)."""

    knows_time = True

    def __init__(self, identifiers: Iterable[str], input_bit: int, decide_at: int):
        self.identifiers = sorted(identifiers)
        self.input_bit = input_bit
        self.decide_at = decide_at
        self.heard: Dict[str, int] = {}
        self._announced = False
        self._output: Optional[int] = None

    def on_step(self, inp: StepInput) -> StepOutput:
        for message in inp.messages:
            for entry in message.entries:
                if isinstance(entry, SignedEntry) and isinstance(entry.payload, tuple) and entry.payload[:1] == ("input",):
                    self.heard.setdefault(entry.identifier, int(entry.payload[1]))
        out: List[Message] = []
        if not self._announced:
            self._announced = True
            for identifier in self.identifiers:
                self.heard.setdefault(identifier, self.input_bit)
            out.append(Message(tuple(SignedEntry(i, ("input", self.input_bit)) for i in self.identifiers)))
        if self._output is None and inp.t is not None and inp.t >= self.decide_at:
            ones = sum(self.heard.values())
            self._output = 1 if 2 * ones > len(self.heard) else 0
        return StepOutput(messages=out)

    def output(self) -> Optional[Any]:
        return self._output


class FixedWaitConfirmer(StateMachine):
    """Confirms, greedily and for good, every transaction known for at least `wait` timeslots."""

    knows_time = True

    def __init__(self, s: StakeState, wait: int):
        if wait < 0:
            raise ValueError("wait must be non-negative")
        self.s = s
        self.wait = wait
        self.first_seen: Dict[str, int] = {}
        self.known: Dict[str, Transaction] = {}
        self._confirmed: FrozenSet[Transaction] = frozenset()

    def on_step(self, inp: StepInput) -> StepOutput:
        t = inp.t or 0
        out: List[Message] = []
        for message in inp.messages:
            for tx in message.transactions():
                if tx.tx_id not in self.known:
                    self.known[tx.tx_id] = tx
                    self.first_seen[tx.tx_id] = t
                    out.append(Message.of(TransactionEntry(tx)))
        ripe = sorted((tx_id for tx_id, seen in self.first_seen.items() if t - seen >= self.wait),
                      key=lambda tx_id: (self.first_seen[tx_id], tx_id))
        confirmed = set(self._confirmed)
        for tx_id in ripe:
            tx = self.known[tx_id]
            if tx not in confirmed and self.s.is_valid(confirmed | {tx}):
                confirmed.add(tx)
        self._confirmed = frozenset(confirmed)
        return StepOutput(messages=out)

    def confirmed(self) -> FrozenSet[Transaction]:
        return self._confirmed
