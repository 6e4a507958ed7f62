"""
Losa-Gafni Byzantine Agreement - Coin-Attestation Protocol for Dynamic Availability

A deterministic BA protocol for the synchronous, unauthenticated setting
with crash/delay faults only:
- rounds at timeslots r*Delta, r = 1..N* with N* = ceil(N/2) + 1
- activity messages (c, r, active) for every owned coin
- attestation chains (c, r, m) extended once per bit
- output at the first active timeslot >= (N*+1)*Delta: the unique value the
  received messages convince the player of, else 0
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from utils.engine import StateMachine, StepInput, StepOutput
from utils.model import Entry, Message, canonical
from utils.transactions import StakeState

logger = logging.getLogger(__name__)

PROTOCOL_NAME = "losa-gafni"
DEFAULT_OUTPUT = 0


def rounds_for(N: int) -> int:
    """N* = ceil(N/2) + 1."""
    return math.ceil(N / 2) + 1


def output_timeslot(N: int, delta: int) -> int:
    return (rounds_for(N) + 1) * delta


class CoinLedger:
    """Stake units of S0 numbered 1..N in ascending (identifier, unit) order."""

    def __init__(self, s: StakeState):
        self.owner: Dict[int, str] = {}
        coin = 0
        for identifier, value in sorted(s.s0.items()):
            for _ in range(value):
                coin += 1
                self.owner[coin] = identifier
        self.N = coin

    def coins_of(self, identifiers: Iterable[str]) -> List[int]:
        wanted = set(identifiers)
        return [coin for coin, owner in sorted(self.owner.items()) if owner in wanted]

    def share(self, identifiers: Iterable[str]) -> float:
        return len(self.coins_of(identifiers)) / self.N if self.N else 0.0


@dataclass(frozen=True, eq=False)
class ActivityMessage(Entry):
    coin: int
    r: int

    def canonical_form(self) -> str:
        return "A" + canonical((self.coin, self.r, "active"))


@dataclass(frozen=True, eq=False)
class Attestation(Entry):
    """(c, r, inner): inner is the input bit at length 1, else a length-(r-1) attestation."""

    coin: int
    length: int
    inner: Union[int, "Attestation"]

    def canonical_form(self) -> str:
        return "T" + canonical((self.coin, self.length, self.inner))

    def children(self) -> Tuple[Entry, ...]:
        return (self.inner,) if isinstance(self.inner, Attestation) else ()

    @cached_property
    def bit(self) -> int:
        return self.inner.bit if isinstance(self.inner, Attestation) else int(self.inner)

    @cached_property
    def coins(self) -> Tuple[int, ...]:
        below = self.inner.coins if isinstance(self.inner, Attestation) else ()
        return below + (self.coin,)

    def well_formed(self) -> bool:
        if self.length == 1:
            return not isinstance(self.inner, Attestation) and self.inner in (0, 1)
        return (isinstance(self.inner, Attestation) and self.inner.length == self.length - 1
                and self.inner.well_formed() and len(set(self.coins)) == self.length)


def convinced(entries: Iterable[Entry], b: int, n_star: int) -> bool:
    """Some round r <= N* where a strict majority of A_r also lies in V_{r,b}."""
    active: Dict[int, Set[int]] = {}
    attested: Dict[int, Set[int]] = {}
    for entry in entries:
        if isinstance(entry, ActivityMessage):
            active.setdefault(entry.r, set()).add(entry.coin)
        elif isinstance(entry, Attestation) and entry.well_formed() and entry.bit == b:
            attested.setdefault(entry.length, set()).add(entry.coin)
    for r in range(1, n_star + 1):
        A = active.get(r, set())
        if not A:
            continue
        V: Set[int] = set()
        for length in range(1, r + 1):
            V |= attested.get(length, set())
        if 2 * len(A & V) > len(A):
            return True
    return False


def ba_output(entries: Iterable[Entry], n_star: int) -> int:
    pool = list(entries)
    votes = [b for b in (0, 1) if convinced(pool, b, n_star)]
    return votes[0] if len(votes) == 1 else DEFAULT_OUTPUT


class LosaGafniNode(StateMachine):
    knows_time = True

    def __init__(self, identifiers: Iterable[str], ledger: CoinLedger, delta: int, input_bit: int):
        if input_bit not in (0, 1):
            raise ValueError(f"protocol input must be 0 or 1, got {input_bit!r}")
        self.coins = ledger.coins_of(identifiers)
        self.N = ledger.N
        self.n_star = rounds_for(ledger.N)
        self.delta = delta
        self.input_bit = input_bit
        self.received: List[Entry] = []
        self._seen: Set[str] = set()
        self.attested: Set[int] = set()
        self._output: Optional[int] = None

    def _ingest(self, messages: Sequence[Message]) -> None:
        for message in messages:
            for entry in message.entries:
                if entry.digest not in self._seen and isinstance(entry, (ActivityMessage, Attestation)):
                    self._seen.add(entry.digest)
                    self.received.append(entry)

    def round_step(self, r: int) -> List[Entry]:
        """Entries disseminated at round r."""
        if r < 1 or r > self.n_star:
            return []
        sent: List[Entry] = [ActivityMessage(coin, r) for coin in self.coins]
        if r == 1:
            if self.coins:
                sent.extend(Attestation(coin, 1, self.input_bit) for coin in self.coins)
                self.attested.add(self.input_bit)
            return sent
        for b in (0, 1):
            if b in self.attested:
                continue
            chain = next((entry for entry in self.received
                          if isinstance(entry, Attestation) and entry.length == r - 1
                          and entry.bit == b and entry.well_formed()), None)
            if chain is None:
                continue
            extended = [Attestation(coin, r, chain) for coin in self.coins if coin not in chain.coins]
            if extended:
                sent.extend(extended)
                self.attested.add(b)
        return sent

    def on_step(self, inp: StepInput) -> StepOutput:
        t = inp.t
        self._ingest(inp.messages)
        out: List[Message] = []
        if t is not None and t % self.delta == 0:
            entries = self.round_step(t // self.delta)
            if entries:
                out.append(Message(tuple(entries)))
        if self._output is None and t is not None and t >= output_timeslot(self.N, self.delta):
            self._output = ba_output(self.received, self.n_star)
            logger.debug("t=%d output %d", t, self._output)
        return StepOutput(messages=out)

    def output(self) -> Optional[Any]:
        return self._output
