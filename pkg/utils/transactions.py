"""
Transactions - UTXO Semantics, Stake Accounting and Environments

Implements the UTXO reading of stake used throughout the simulator:
- Utxo / Transaction value types with canonical ids
- StakeState: the initial distribution S0 plus validity and balance evaluation
- validity, stake, conflict and transfer operations over transaction sets
- maximal valid sets and the two boundedness conditions on environments
- Environment implementations (static schedules and adaptive churn)

Every operation is a pure function of its arguments.
"""

import logging
from abc import ABC, abstractmethod
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import InsufficientStakeError, InvalidTransactionSetError, SearchCapExceeded
from .model import canonical, digest_of, digest_text

logger = logging.getLogger(__name__)

DEFAULT_SEARCH_CAP = 20


def genesis_utxo_id(identifier: str, index: int = 0) -> str:
    return "g" + digest_of(("genesis", identifier, index))[:20]


def output_utxo_id(tx_id: str, index: int) -> str:
    return "u" + digest_of((tx_id, index))[:20]


@dataclass(frozen=True)
class Utxo:
    utxo_id: str
    owner: str
    value: int

    def __post_init__(self):
        if self.value < 1:
            raise InvalidTransactionSetError(f"utxo {self.utxo_id} has non-positive value {self.value}")


@dataclass(frozen=True)
class Transaction:
    """Spends a non-empty set of UTXOs of one owner into (identifier, value) outputs."""

    tx_id: str
    inputs: FrozenSet[str]
    outputs: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", tuple((str(o), int(v)) for o, v in self.outputs))

    def canonical_form(self) -> str:
        return canonical(("tx", self.tx_id, self.inputs, self.outputs))

    @cached_property
    def digest(self) -> str:
        return digest_text(self.canonical_form())

    def output_utxos(self) -> List[Utxo]:
        return [Utxo(output_utxo_id(self.tx_id, i), owner, value)
                for i, (owner, value) in enumerate(self.outputs) if value >= 1]

    @property
    def output_total(self) -> int:
        return sum(value for _, value in self.outputs)

    def to_dict(self) -> Dict[str, Any]:
        return {"tx_id": self.tx_id, "inputs": sorted(self.inputs), "outputs": [list(o) for o in self.outputs]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Transaction":
        return cls(data["tx_id"], frozenset(data["inputs"]), tuple(tuple(o) for o in data["outputs"]))

    def __repr__(self) -> str:
        return f"Transaction({self.tx_id})"


class StakeState:
    """Initial stake distribution S0 and the semantics S(S0, T, id)."""

    def __init__(self, s0: Mapping[str, int], conservation: bool = True):
        bad = {i: v for i, v in s0.items() if int(v) < 0}
        if bad:
            raise InvalidTransactionSetError(f"negative initial stake {bad}")
        self.s0: Dict[str, int] = {i: int(v) for i, v in sorted(s0.items()) if int(v) > 0}
        self.conservation = conservation
        self.genesis: Dict[str, Utxo] = {}
        for identifier, value in self.s0.items():
            utxo = Utxo(genesis_utxo_id(identifier), identifier, value)
            self.genesis[utxo.utxo_id] = utxo
        self._valid_cache: Dict[FrozenSet[Transaction], bool] = {}

    @property
    def total(self) -> int:
        """N: total initial stake (conserved in conservation mode)."""
        return sum(self.s0.values())

    def genesis_utxo(self, identifier: str) -> Optional[Utxo]:
        return self.genesis.get(genesis_utxo_id(identifier))

    def to_dict(self) -> Dict[str, Any]:
        return {"s0": dict(self.s0), "conservation": self.conservation}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StakeState":
        return cls(data["s0"], bool(data.get("conservation", True)))

    # -- validity ------------------------------------------------------------

    def _utxo_table(self, txs: Iterable[Transaction]) -> Optional[Dict[str, Tuple[Utxo, Optional[str]]]]:
        table: Dict[str, Tuple[Utxo, Optional[str]]] = {u: (utxo, None) for u, utxo in self.genesis.items()}
        for tx in txs:
            for utxo in tx.output_utxos():
                if utxo.utxo_id in table:
                    return None
                table[utxo.utxo_id] = (utxo, tx.tx_id)
        return table

    def _intrinsically_valid(self, tx: Transaction, table: Mapping[str, Tuple[Utxo, Optional[str]]]) -> bool:
        if not tx.inputs or any(value < 1 for _, value in tx.outputs):
            return False
        owners = set()
        total_in = 0
        for utxo_id in tx.inputs:
            if utxo_id not in table:
                return False
            utxo = table[utxo_id][0]
            owners.add(utxo.owner)
            total_in += utxo.value
        if len(owners) != 1:
            return False
        if self.conservation:
            return tx.output_total == total_in
        return tx.output_total <= total_in

    def _check(self, T: FrozenSet[Transaction]) -> bool:
        txs = sorted(T, key=lambda tx: tx.tx_id)
        if len({tx.tx_id for tx in txs}) != len(txs):
            return False
        table = self._utxo_table(txs)
        if table is None:
            return False
        spent: Set[str] = set()
        for tx in txs:
            if not self._intrinsically_valid(tx, table):
                return False
            if spent & tx.inputs:
                return False
            spent |= tx.inputs
        # acyclic provenance (Kahn)
        creator = {uid: origin for uid, (_, origin) in table.items() if origin is not None}
        deps = {tx.tx_id: {creator[u] for u in tx.inputs if u in creator} for tx in txs}
        indegree = {tx_id: len(d) for tx_id, d in deps.items()}
        dependents: Dict[str, List[str]] = defaultdict(list)
        for tx_id, d in deps.items():
            for dep in d:
                dependents[dep].append(tx_id)
        queue = deque(tx_id for tx_id, n in indegree.items() if n == 0)
        done = 0
        while queue:
            tx_id = queue.popleft()
            done += 1
            for nxt in dependents[tx_id]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    queue.append(nxt)
        return done == len(txs)

    def is_valid(self, T: Iterable[Transaction]) -> bool:
        key = frozenset(T)
        cached = self._valid_cache.get(key)
        if cached is None:
            if len(self._valid_cache) > 50000:
                self._valid_cache.clear()
            cached = self._check(key)
            self._valid_cache[key] = cached
        return cached

    # -- balances ------------------------------------------------------------

    def unspent(self, T: Iterable[Transaction]) -> Dict[str, Utxo]:
        key = frozenset(T)
        if not self.is_valid(key):
            raise InvalidTransactionSetError("transaction set is not valid relative to S0")
        table = self._utxo_table(key)
        spent = set().union(*(tx.inputs for tx in key)) if key else set()
        return {uid: utxo for uid, (utxo, _) in table.items() if uid not in spent}

    def balances(self, T: Iterable[Transaction]) -> Dict[str, int]:
        totals: Dict[str, int] = defaultdict(int)
        for utxo in self.unspent(T).values():
            totals[utxo.owner] += utxo.value
        return dict(totals)

    def stake(self, T: Iterable[Transaction], identifier: str) -> int:
        return self.balances(T).get(identifier, 0)

    def total_under(self, T: Iterable[Transaction]) -> int:
        return sum(self.balances(T).values())

    def owner_of_inputs(self, tx: Transaction, catalogue: Iterable[Transaction] = ()) -> Optional[str]:
        """Identifier controlling a transaction's inputs, resolved through a catalogue."""
        for utxo_id in tx.inputs:
            if utxo_id in self.genesis:
                return self.genesis[utxo_id].owner
            for other in catalogue:
                for utxo in other.output_utxos():
                    if utxo.utxo_id == utxo_id:
                        return utxo.owner
        return None


# ----------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------

def is_valid_set(T: Iterable[Transaction], s: StakeState) -> bool:
    return s.is_valid(T)


def stake(s: StakeState, T: Iterable[Transaction], identifier: str) -> int:
    return s.stake(T, identifier)


def byzantine_share(s: StakeState, T: Iterable[Transaction], byzantine_ids: Iterable[str]) -> Fraction:
    balances = s.balances(T)
    total = sum(balances.values())
    if total == 0:
        return Fraction(0)
    byz = set(byzantine_ids)
    return Fraction(sum(v for i, v in balances.items() if i in byz), total)


def conflicting(tr1: Transaction, tr2: Transaction, T: Iterable[Transaction], s: StakeState) -> bool:
    base = frozenset(T)
    for tr in (tr1, tr2):
        if not s.is_valid(base | {tr}):
            raise InvalidTransactionSetError(f"{tr.tx_id} is not valid on top of the given set")
    return not s.is_valid(base | {tr1, tr2})


def transfer_tx(s: StakeState, T: Iterable[Transaction], from_id: str, to_id: str, x: int,
                tx_id: Optional[str] = None) -> Transaction:
    """Move exactly x units from from_id to to_id, returning change to from_id."""
    base = frozenset(T)
    if x < 1:
        raise InvalidTransactionSetError(f"transfer amount must be positive, got {x}")
    owned = sorted((u for u in s.unspent(base).values() if u.owner == from_id), key=lambda u: u.utxo_id)
    available = sum(u.value for u in owned)
    if available < x:
        raise InsufficientStakeError(from_id, x, available)
    picked: List[Utxo] = []
    gathered = 0
    for utxo in owned:
        if gathered >= x:
            break
        picked.append(utxo)
        gathered += utxo.value
    outputs: List[Tuple[str, int]] = [(to_id, x)]
    if gathered > x:
        outputs.append((from_id, gathered - x))
    inputs = frozenset(u.utxo_id for u in picked)
    if tx_id is None:
        tx_id = "tx-" + digest_of(("transfer", from_id, to_id, x, inputs))[:16]
    return Transaction(tx_id, inputs, tuple(outputs))


def required_set(tx: Transaction, catalogue: Iterable[Transaction], s: StakeState) -> FrozenSet[Transaction]:
    """Smallest set T with T + {tx} valid: the transitive creators of tx's inputs."""
    creators: Dict[str, Transaction] = {}
    for other in catalogue:
        for utxo in other.output_utxos():
            creators[utxo.utxo_id] = other
    needed: Set[Transaction] = set()
    stack = [tx]
    while stack:
        current = stack.pop()
        for utxo_id in current.inputs:
            if utxo_id in s.genesis:
                continue
            creator = creators.get(utxo_id)
            if creator is None:
                raise InvalidTransactionSetError(f"input {utxo_id} of {current.tx_id} has no known creator")
            if creator not in needed and creator != tx:
                needed.add(creator)
                stack.append(creator)
    return frozenset(needed)


def _supported_core(candidates: Sequence[Transaction], s: StakeState) -> FrozenSet[Transaction]:
    """Forward closure from S0: transactions whose inputs are all available."""
    available = set(s.genesis)
    pending = list(candidates)
    core: Set[Transaction] = set()
    progress = True
    while progress:
        progress = False
        for tx in list(pending):
            if tx.inputs <= available:
                core.add(tx)
                available |= {u.utxo_id for u in tx.output_utxos()}
                pending.remove(tx)
                progress = True
    return frozenset(core)


def _maximal_compatible_sets(nodes: List[Transaction], compatible: Dict[Transaction, Set[Transaction]]):
    """Bron-Kerbosch with pivoting over the compatibility graph."""
    results: List[FrozenSet[Transaction]] = []

    def expand(r: Set[Transaction], p: Set[Transaction], x: Set[Transaction]) -> None:
        if not p and not x:
            results.append(frozenset(r))
            return
        pivot = max(p | x, key=lambda v: len(compatible[v] & p))
        for v in sorted(p - compatible[pivot], key=lambda tx: tx.tx_id):
            expand(r | {v}, p & compatible[v], x & compatible[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(nodes), set())
    return results


def maximal_valid_sets(issued: Mapping[Transaction, int], t: int, s: StakeState,
                       cap: int = DEFAULT_SEARCH_CAP) -> List[FrozenSet[Transaction]]:
    """
    Maximal valid subsets of the transactions honestly received by timeslot t.

    `issued` maps each transaction to the first timeslot an honest player
    received it from the environment.
    """
    candidates = sorted((tx for tx, first in issued.items() if first <= t), key=lambda tx: tx.tx_id)
    if not candidates:
        return [frozenset()]
    if len(candidates) > cap:
        raise SearchCapExceeded(len(candidates), cap)
    if s.is_valid(candidates):
        return [frozenset(candidates)]
    table = s._utxo_table(candidates)
    if table is None:
        # duplicate output ids: fall back to the always-sound pairwise check below
        table = {u: (utxo, None) for u, utxo in s.genesis.items()}
        for tx in candidates:
            for utxo in tx.output_utxos():
                table.setdefault(utxo.utxo_id, (utxo, tx.tx_id))
    usable = [tx for tx in candidates if s._intrinsically_valid(tx, table)]
    compatible: Dict[Transaction, Set[Transaction]] = {}
    for tx in usable:
        compatible[tx] = {other for other in usable
                          if other is not tx and not (tx.inputs & other.inputs) and tx.tx_id != other.tx_id}
    cores = {_supported_core(sorted(group, key=lambda tx: tx.tx_id), s)
             for group in _maximal_compatible_sets(usable, compatible)}
    valid = [core for core in cores if s.is_valid(core)]
    maximal = [core for core in valid if not any(core < other for other in valid)]
    return sorted(maximal, key=lambda core: sorted(tx.tx_id for tx in core))


# ----------------------------------------------------------------------------
# Environments
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Injection:
    player: str
    tx: Transaction
    t: int


class PublicView:
    """Public trace prefix an adaptive environment may read: honest confirmed sets."""

    def __init__(self, confirmed: Optional[Mapping[str, FrozenSet[Transaction]]] = None):
        self.confirmed: Dict[str, FrozenSet[Transaction]] = dict(confirmed or {})

    def common_confirmed(self) -> FrozenSet[Transaction]:
        sets = list(self.confirmed.values())
        if not sets:
            return frozenset()
        common = sets[0]
        for other in sets[1:]:
            common = common & other
        return common


class Environment(ABC):
    """Source of (player, transaction, timeslot) injections, finitely many per (p, t)."""

    adaptive: bool = False

    @abstractmethod
    def injections(self, t: int, view: PublicView) -> List[Injection]:
        ...

    def catalogue(self) -> List[Transaction]:
        return []


class ScheduledEnvironment(Environment):
    """Static injections fixed before the execution starts."""

    def __init__(self, injections: Iterable[Injection] = ()):
        self._by_t: Dict[int, List[Injection]] = defaultdict(list)
        self._all: List[Injection] = []
        for injection in injections:
            self.add(injection)

    def add(self, injection: Injection) -> "ScheduledEnvironment":
        self._by_t[injection.t].append(injection)
        self._all.append(injection)
        return self

    def send(self, tx: Transaction, players: Iterable[str], t: int) -> "ScheduledEnvironment":
        for player in players:
            self.add(Injection(player, tx, t))
        return self

    def injections(self, t: int, view: PublicView) -> List[Injection]:
        return list(self._by_t.get(t, ()))

    def sends(self) -> List[Injection]:
        return list(self._all)

    def catalogue(self) -> List[Transaction]:
        seen: Dict[str, Transaction] = {}
        for injection in self._all:
            seen.setdefault(injection.tx.digest, injection.tx)
        return sorted(seen.values(), key=lambda tx: tx.tx_id)


class ChurnEnvironment(Environment):
    """
    Adaptive honest churn: one transfer at a time, issued only after every
    honest player has confirmed the previous one, so prerequisites are always
    confirmed before a dependent transfer is sent.
    """

    adaptive = True

    def __init__(self, s: StakeState, rotation: Sequence[Tuple[str, str]], recipients: Mapping[str, Sequence[str]],
                 start: int = 1, period: int = 1, stop: Optional[int] = None, amount: int = 1,
                 label: str = "churn"):
        self.s = s
        self.rotation = list(rotation)
        self.recipients = {k: list(v) for k, v in recipients.items()}
        self.start = start
        self.period = max(1, period)
        self.stop = stop
        self.amount = amount
        self.label = label
        self.issued: List[Transaction] = []
        self._cursor = 0

    def injections(self, t: int, view: PublicView) -> List[Injection]:
        if t < self.start or (self.stop is not None and t > self.stop) or (t - self.start) % self.period:
            return []
        common = view.common_confirmed()
        if self.issued and self.issued[-1] not in common:
            return []
        base = frozenset(common)
        for _ in range(len(self.rotation)):
            from_id, to_id = self.rotation[self._cursor % len(self.rotation)]
            self._cursor += 1
            try:
                tx = transfer_tx(self.s, base, from_id, to_id, self.amount,
                                 tx_id=f"{self.label}-{len(self.issued)}")
            except InvalidTransactionSetError:
                continue
            self.issued.append(tx)
            logger.debug("churn issues %s at t=%d", tx.tx_id, t)
            return [Injection(player, tx, t) for player in self.recipients.get(from_id, ())]
        return []

    def catalogue(self) -> List[Transaction]:
        return list(self.issued)


# ----------------------------------------------------------------------------
# Environment boundedness
# ----------------------------------------------------------------------------

def first_honest_receipts(sends: Iterable[Injection], honest_players: Iterable[str]) -> Dict[Transaction, int]:
    honest = set(honest_players)
    first: Dict[Transaction, int] = {}
    for injection in sends:
        if injection.player in honest:
            if injection.tx not in first or injection.t < first[injection.tx]:
                first[injection.tx] = injection.t
    return first


def env_is_maximally_rho_bounded(env: ScheduledEnvironment, byzantine_ids: Iterable[str], rho: Fraction,
                                 horizon: int, s: StakeState, honest_players: Iterable[str],
                                 cap: int = DEFAULT_SEARCH_CAP) -> bool:
    byz = frozenset(byzantine_ids)
    honest = set(honest_players)
    sends = env.sends()
    first_any: Dict[Transaction, int] = {}
    for injection in sends:
        if injection.tx not in first_any or injection.t < first_any[injection.tx]:
            first_any[injection.tx] = injection.t
    issued = first_honest_receipts(sends, honest)
    for tx, t in first_any.items():
        if tx not in issued or issued[tx] > t:
            logger.info("%s reaches a Byzantine player before any honest one", tx.tx_id)
            return False
    checkpoints = sorted({0} | {t for t in issued.values() if t <= horizon})
    for t in checkpoints:
        for candidate in maximal_valid_sets(issued, t, s, cap):
            if byzantine_share(s, candidate, byz) > rho:
                logger.info("maximal set at t=%d hands Byzantine identifiers more than %s", t, rho)
                return False
    return True


def env_is_rho_bounded(env: Optional[Environment], trace: Any, rho: Fraction) -> bool:
    """Prerequisite and share conditions for every honest confirmed set in a trace."""
    s = trace.stake_state()
    byz = trace.byzantine_identifiers()
    if byzantine_share(s, (), byz) > rho:
        return False
    catalogue = trace.catalogue()
    by_id = {tx.tx_id: tx for tx in catalogue}
    sends = sorted(trace.injections(), key=lambda item: item[2])
    honest_sends: List[Tuple[int, Transaction]] = []
    for player, tx_id, t in sends:
        tx = by_id.get(tx_id)
        if tx is None:
            continue
        owner = s.owner_of_inputs(tx, catalogue)
        if owner is not None and owner not in byz:
            honest_sends.append((t, tx))
    required_cache: Dict[Transaction, FrozenSet[Transaction]] = {}
    for player in trace.honest_player_ids():
        checkpoints = sorted({t for t, _ in trace.confirmed_changes(player)} | {t for t, _ in honest_sends} | {1})
        for t in checkpoints:
            if t > trace.duration:
                continue
            T1 = trace.confirmed_at(player, t)
            if not s.is_valid(T1) or byzantine_share(s, T1, byz) > rho:
                continue
            T2 = frozenset(tx for sent, tx in honest_sends if sent <= t)
            for tx in T2:
                if tx not in required_cache:
                    try:
                        required_cache[tx] = required_set(tx, catalogue, s)
                    except InvalidTransactionSetError:
                        return False
                if not required_cache[tx] <= T1:
                    logger.info("prerequisites of %s unconfirmed for %s at t=%d", tx.tx_id, player, t)
                    return False
            union = T1 | T2
            if not s.is_valid(union) or byzantine_share(s, union, byz) > rho:
                return False
    return True
