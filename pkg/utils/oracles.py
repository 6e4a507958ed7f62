"""
Oracles - Idealized Primitives as Response Functions

- Oracle: deterministic response function (query, t) -> [(response entry, delivery t)]
  sampled lazily from the execution seed
- SignatureOracle, VdfOracle, EphemeralKeyOracle: the idealized primitives
- ClampedOracle: re-stamps queries of a simulated history with the real timeslot
- PermissionLedger / is_permitted: which entries a player may include in messages
- is_time_malleable: probe-based classifier cross-checked against declarations
"""

import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .model import NULL_RESPONSE, Entry, Message, OracleEntry, Player, SignedEntry, canonical, find_entries

logger = logging.getLogger(__name__)

BYZANTINE_POOL = "__byzantine__"


@dataclass(frozen=True)
class Query:
    """A query to one oracle; permitter queries carry a resource amount b."""

    oracle_id: str
    payload: Any
    b: int = 0

    def entries(self) -> Tuple[Entry, ...]:
        return find_entries(self.payload)

    def canonical_form(self) -> str:
        return canonical(("query", self.oracle_id, self.payload, self.b))


Response = Tuple[Entry, int]


class Oracle(ABC):
    """A response function fixed by (seed, oracle_id); responses never depend on earlier queries."""

    oracle_id: str = "oracle"
    declared_time_malleable: bool = False
    permitter: bool = False

    def __init__(self, seed: int = 0):
        self.seed = seed

    @abstractmethod
    def respond(self, query: Query, t: int) -> List[Response]:
        ...

    def sample_queries(self) -> List[Query]:
        """Representative queries used when probing time-malleability."""
        return [Query(self.oracle_id, SignedEntry("probe", "m"))]


class SignatureOracle(Oracle):
    """Signature permissioning as an oracle: instant, timeslot-independent responses."""

    oracle_id = "sig"
    declared_time_malleable = True

    def respond(self, query: Query, t: int) -> List[Response]:
        return [(OracleEntry(self.oracle_id, query.payload), t)]


class VdfOracle(Oracle):
    """Query (m, k) is answered with the oracle-typed entry (m, k) at t + k."""

    oracle_id = "vdf"
    declared_time_malleable = False

    def respond(self, query: Query, t: int) -> List[Response]:
        m, k = query.payload
        if k < 0:
            raise ValueError(f"VDF delay must be non-negative, got {k}")
        return [(OracleEntry(self.oracle_id, (m, k)), t + k)]

    def sample_queries(self) -> List[Query]:
        return [Query(self.oracle_id, ("probe", 1)), Query(self.oracle_id, ("probe", 3))]


class EphemeralKeyOracle(Oracle):
    """
    Query ((id, m), t') is answered at t with ((id, m), t') when t' > t, and
    with the null response otherwise: keys for past timeslots are erased.
    """

    oracle_id = "ephemeral"
    declared_time_malleable = False

    def respond(self, query: Query, t: int) -> List[Response]:
        entry, target = query.payload
        if target > t:
            return [(OracleEntry(self.oracle_id, (entry, target)), t)]
        return [(NULL_RESPONSE, t)]

    def sample_queries(self) -> List[Query]:
        return [Query(self.oracle_id, (SignedEntry("probe", "m"), 2))]


def ephemeral_sign(oracle: EphemeralKeyOracle, entry: SignedEntry, target: int, t: int) -> Entry:
    return oracle.respond(Query(oracle.oracle_id, (entry, target)), t)[0][0]


def vdf_query(oracle: VdfOracle, m: Any, k: int, t: int) -> Response:
    return oracle.respond(Query(oracle.oracle_id, (m, k)), t)[0]


class ClampedOracle(Oracle):
    """
    View of an oracle for a history simulated at real timeslot `now`: every
    query is answered as if asked at `now`, with delivery shifted back to
    the simulated timeslot.
    """

    def __init__(self, inner: Oracle, now: int):
        super().__init__(inner.seed)
        self.inner = inner
        self.now = now
        self.oracle_id = inner.oracle_id
        self.declared_time_malleable = inner.declared_time_malleable
        self.permitter = inner.permitter

    def respond(self, query: Query, t: int) -> List[Response]:
        return [(entry, t + (delivered - self.now)) for entry, delivered in self.inner.respond(query, self.now)]

    def sample_queries(self) -> List[Query]:
        return self.inner.sample_queries()


def is_time_malleable(oracle: Oracle, duration: int, queries: Optional[Sequence[Query]] = None) -> bool:
    """
    Probe instantaneous delivery and timeslot independence over the grid
    {1, d/2, d}; a disagreement with the declared flag is logged.
    """
    grid = sorted({max(1, duration // 2), max(1, duration), 1})
    probes = list(queries) if queries else oracle.sample_queries()
    malleable = True
    for query in probes:
        seen: Optional[List[Entry]] = None
        for t in grid:
            responses = oracle.respond(query, t)
            if any(delivered != t for _, delivered in responses):
                malleable = False
                break
            entries = [entry for entry, _ in responses]
            if seen is None:
                seen = entries
            elif entries != seen:
                malleable = False
                break
        if not malleable:
            break
    if malleable != oracle.declared_time_malleable:
        logger.warning("oracle %s declared time-malleable=%s but probes say %s",
                       oracle.oracle_id, oracle.declared_time_malleable, malleable)
    return malleable


# ----------------------------------------------------------------------------
# Permissions
# ----------------------------------------------------------------------------

class PermissionLedger:
    """
    Entries each player has received, keyed per player; Byzantine players
    share one pooled key so whatever one of them knows, all of them know.
    """

    def __init__(self, authenticated: bool = True):
        self.authenticated = authenticated
        self._known: Dict[str, Set[str]] = defaultdict(set)
        self._signers: Dict[str, Set[str]] = defaultdict(set)

    @staticmethod
    def key_of(player: Player) -> str:
        return BYZANTINE_POOL if player.byzantine else player.player_id

    def enroll(self, player: Player) -> str:
        key = self.key_of(player)
        self._signers[key] |= set(player.identifiers)
        return key

    def pool(self, player: Player) -> None:
        """Move a newly corrupted player's knowledge into the Byzantine pool."""
        known = self._known.pop(player.player_id, set())
        self._signers.pop(player.player_id, None)
        self._known[BYZANTINE_POOL] |= known
        self._signers[BYZANTINE_POOL] |= set(player.identifiers)

    def signers(self, key: str) -> FrozenSet[str]:
        return frozenset(self._signers.get(key, ()))

    def learn(self, key: str, entries: Iterable[Entry]) -> None:
        known = self._known[key]
        stack = list(entries)
        while stack:
            entry = stack.pop()
            if entry.digest in known:
                continue
            known.add(entry.digest)
            stack.extend(entry.children())

    def learn_message(self, key: str, message: Message) -> None:
        self.learn(key, message.entries)

    def knows(self, key: str, entry: Entry) -> bool:
        return entry.digest in self._known.get(key, ())

    def permits(self, key: str, entry: Entry) -> bool:
        return self._permits_all(key, [entry])

    def permits_message(self, key: str, message: Message) -> bool:
        return self._permits_all(key, message.entries)

    def _permits_all(self, key: str, entries: Iterable[Entry]) -> bool:
        """Unknown entries need permitted children; each shared entry is checked once."""
        known = self._known.get(key, ())
        signers = self._signers.get(key, ())
        seen: Set[str] = set()
        stack = list(entries)
        while stack:
            entry = stack.pop()
            if entry.digest in seen or entry.digest in known:
                continue
            seen.add(entry.digest)
            if entry.kind in ("oracle", "transaction"):
                return False
            if entry.kind == "signed" and self.authenticated and entry.signer not in signers:
                return False
            stack.extend(entry.children())
        return True


def is_permitted(entry: Entry, player: Player, t: int, ledger: PermissionLedger) -> bool:
    """Permission only grows with receipts, so t never narrows the answer."""
    return ledger.permits(ledger.key_of(player), entry)
