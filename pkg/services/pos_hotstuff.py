"""
PoS-HotStuff - Stake-Weighted Three-Stage BFT with Epochs

Protocol artifacts and the honest node:
- Block / Vote / QC / ViewMessage entries, with the genesis block GENESIS
- leader(): canonical coin iteration over stake units
- is_qc(): the QC1-QC4 conditions against a transaction set
- MessagePool: a node's received set M with memoized M-validity, epoch
  geneses B*_{g,e}(M), T*_e(M) and the confirmation rule
- PosHotStuffNode: the per-player state machine (handlers run to a fixpoint
  each ready timeslot, timer counted in the node's own steps)
- blame() / accountability_witness(): double-vote extraction
- liveness_bound() / responsiveness_bound(): the protocol's latency constants

The ephemeral-key variant tags every vote with an ephemeral signature for
the next timeslot and rejects stale top-level votes.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from utils.engine import StateMachine, StepInput, StepOutput
from utils.errors import ConfigurationError
from utils.model import NULL_RESPONSE, Entry, Message, OracleEntry, SignedEntry, TransactionEntry, canonical
from utils.oracles import EphemeralKeyOracle, Query
from utils.transactions import StakeState, Transaction

logger = logging.getLogger(__name__)

PROTOCOL_NAME = "pos-hotstuff"


# ----------------------------------------------------------------------------
# Artifacts
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class QC:
    """A set of votes; B*, e*, v*, h*, s* are read off any member."""

    votes: FrozenSet["Vote"] = frozenset()

    def canonical_form(self) -> str:
        return "Q" + canonical(self.votes)

    @cached_property
    def _sample(self) -> Optional["Vote"]:
        return min(self.votes, key=lambda vote: vote.digest) if self.votes else None

    @property
    def block(self) -> "Block":
        return self._sample.block if self._sample else GENESIS

    @property
    def view(self) -> int:
        return self.block.view

    @property
    def epoch(self) -> int:
        return self.block.epoch

    @property
    def height(self) -> int:
        return self.block.height

    @property
    def stage(self) -> Optional[int]:
        return self._sample.stage if self._sample else None

    def voters(self) -> Set[str]:
        return {vote.voter for vote in self.votes}

    def __len__(self) -> int:
        return len(self.votes)


EMPTY_QC = QC()


@dataclass(frozen=True, eq=False)
class Block(Entry):
    proposer: Optional[str]
    height: int
    epoch: int
    view: int
    txs: FrozenSet[Transaction]
    parent: Optional["Block"]
    qc: QC

    @property
    def kind(self) -> str:
        return "signed" if self.proposer is not None else "general"

    @property
    def signer(self) -> Optional[str]:
        return self.proposer

    def canonical_form(self) -> str:
        parent = self.parent.digest if self.parent is not None else None
        return "B" + canonical((self.proposer, self.height, self.epoch, self.view, self.txs, parent, self.qc))

    def children(self) -> Tuple[Entry, ...]:
        found: List[Entry] = [] if self.parent is None else [self.parent]
        found.extend(TransactionEntry(tx) for tx in sorted(self.txs, key=lambda tx: tx.tx_id))
        found.extend(sorted(self.qc.votes, key=lambda vote: vote.digest))
        return tuple(found)

    @cached_property
    def chain_txs(self) -> FrozenSet[Transaction]:
        """Transactions of this block and all of its ancestors."""
        pending: List[Block] = []
        block: Optional[Block] = self
        while block is not None and "chain_txs" not in block.__dict__:
            pending.append(block)
            block = block.parent
        acc = block.__dict__["chain_txs"] if block is not None else frozenset()
        for item in reversed(pending[1:]):
            acc = acc | item.txs
            item.__dict__["chain_txs"] = acc
        return acc | self.txs

    def ancestor_at(self, height: int) -> Optional["Block"]:
        block: Optional[Block] = self
        while block is not None and block.height > height:
            block = block.parent
        return block if block is not None and block.height == height else None

    def extends(self, other: "Block") -> bool:
        """True if `other` is an ancestor of this block (blocks are their own ancestors)."""
        found = self.ancestor_at(other.height)
        return found is not None and found.digest == other.digest

    def __repr__(self) -> str:
        return f"Block(h={self.height}, e={self.epoch}, v={self.view}, by={self.proposer}, {self.digest[:8]})"


GENESIS = Block(None, 0, -1, 0, frozenset(), None, EMPTY_QC)


def compatible(a: Block, b: Block) -> bool:
    return a.extends(b) or b.extends(a)


@dataclass(frozen=True, eq=False)
class Vote(Entry):
    voter: str
    stake: int
    block: Block
    stage: int
    tag: Optional[Entry] = None

    kind = "signed"

    @property
    def signer(self) -> Optional[str]:
        return self.voter

    def canonical_form(self) -> str:
        return "V" + canonical((self.voter, self.stake, self.block, self.stage, self.tag))

    def children(self) -> Tuple[Entry, ...]:
        return (self.block,) if self.tag is None else (self.block, self.tag)

    @property
    def view(self) -> int:
        return self.block.view

    @property
    def epoch(self) -> int:
        return self.block.epoch

    def tag_payload(self) -> SignedEntry:
        return SignedEntry(self.voter, ("vote", self.stake, self.block.digest, self.stage))

    def tag_time(self) -> Optional[int]:
        tag = self.tag
        if not isinstance(tag, OracleEntry) or tag.oracle_id != EphemeralKeyOracle.oracle_id:
            return None
        entry, target = tag.payload
        if entry != self.tag_payload():
            return None
        return target


@dataclass(frozen=True, eq=False)
class ViewMessage(Entry):
    identifier: str
    stake: int
    epoch: int
    view: int
    qc: QC

    kind = "signed"

    @property
    def signer(self) -> Optional[str]:
        return self.identifier

    def canonical_form(self) -> str:
        return "R" + canonical((self.identifier, self.stake, self.epoch, self.view, self.qc))

    def children(self) -> Tuple[Entry, ...]:
        return tuple(sorted(self.qc.votes, key=lambda vote: vote.digest))


# ----------------------------------------------------------------------------
# Stake helpers
# ----------------------------------------------------------------------------

class StakeView:
    """Cached balances and leader schedules per transaction set."""

    def __init__(self, s: StakeState):
        if not s.conservation:
            raise ConfigurationError("PoS-HotStuff needs a conserved total stake", "stake.conservation")
        self.s = s
        self.N = s.total
        self._balances: Dict[FrozenSet[Transaction], Dict[str, int]] = {}
        self._units: Dict[FrozenSet[Transaction], List[str]] = {}

    def balances(self, T: FrozenSet[Transaction]) -> Dict[str, int]:
        cached = self._balances.get(T)
        if cached is None:
            cached = self.s.balances(T)
            self._balances[T] = cached
        return cached

    def stake(self, T: FrozenSet[Transaction], identifier: str) -> int:
        return self.balances(T).get(identifier, 0)

    def units(self, T: FrozenSet[Transaction]) -> List[str]:
        cached = self._units.get(T)
        if cached is None:
            cached = [identifier for identifier, value in sorted(self.balances(T).items()) for _ in range(value)]
            self._units[T] = cached
        return cached

    def supermajority(self, weight: int) -> bool:
        return 3 * weight > 2 * self.N


def leader(s: StakeState, T: Iterable[Transaction], v: int) -> str:
    """Owner of stake unit (v mod N), units ordered by (identifier, unit index)."""
    balances = s.balances(frozenset(T))
    units = [identifier for identifier, value in sorted(balances.items()) for _ in range(value)]
    if not units:
        raise ConfigurationError("leader schedule needs positive total stake", "stake")
    return units[v % len(units)]


def is_qc(Q: QC, B: Block, stage: int, T: Iterable[Transaction], s: StakeState) -> bool:
    if B.digest == GENESIS.digest:
        return len(Q) == 0
    if not Q.votes:
        return False
    balances = s.balances(frozenset(T))
    voters: Set[str] = set()
    weight = 0
    for vote in Q.votes:
        if vote.block.digest != B.digest or vote.stage != stage:
            return False
        if vote.stake != balances.get(vote.voter, 0):
            return False
        if vote.voter in voters:
            return False
        voters.add(vote.voter)
        weight += vote.stake
    return 3 * weight > 2 * s.total


def liveness_bound(N: int, delta: int, kappa: Fraction = Fraction(1)) -> int:
    return (24 * N + 8) * math.ceil(Fraction(delta) / (Fraction(kappa) ** 2))


def responsiveness_bound(N: int, delta: int, kappa: Fraction = Fraction(1)) -> int:
    return (10 * N + 9) * math.ceil(Fraction(delta) / Fraction(kappa))


def view_timeout(delta: int, kappa: Fraction) -> int:
    return 5 * math.ceil(Fraction(delta) / Fraction(kappa))


# ----------------------------------------------------------------------------
# Message pool
# ----------------------------------------------------------------------------

class MessagePool:
    """
    The received set M of one node and everything derived from it.

    Block validity is memoized per (block, genesis of its epoch, genesis of
    the previous epoch); QC lookups per (block, stage, T) while no new votes
    for that block and stage arrive.
    """

    def __init__(self, stake: StakeView, ephemeral: bool = False):
        self.stake = stake
        self.ephemeral = ephemeral
        self.blocks: Dict[str, Block] = {GENESIS.digest: GENESIS}
        self.block_order: List[Block] = []
        self.by_epoch: Dict[int, List[Block]] = {}
        self.votes: Dict[Tuple[str, int], List[Vote]] = {}
        self.all_votes: List[Vote] = []
        self.view_messages: Dict[Tuple[int, int], List[ViewMessage]] = {}
        self.geneses: List[Block] = [GENESIS]
        self.conflicts: Set[int] = set()
        self._dirty = True
        self._valid: Dict[Tuple[str, Optional[str], Optional[str]], bool] = {}
        self._qc_cache: Dict[Tuple[str, int, FrozenSet[Transaction]], Tuple[int, Optional[QC]]] = {}
        self._seen_votes: Set[str] = set()
        self._seen_views: Set[str] = set()

    # -- ingestion ---------------------------------------------------------------

    def add_block(self, block: Block) -> bool:
        chain = []
        current: Optional[Block] = block
        while current is not None and current.digest not in self.blocks:
            chain.append(current)
            current = current.parent
        for item in reversed(chain):
            self.blocks[item.digest] = item
            self.block_order.append(item)
            self.by_epoch.setdefault(item.epoch, []).append(item)
            for vote in item.qc.votes:
                self.add_vote(vote)
        if chain:
            self._dirty = True
        return bool(chain)

    def add_vote(self, vote: Vote) -> bool:
        if vote.digest in self._seen_votes:
            return False
        if self.ephemeral and vote.tag_time() is None:
            return False
        self._seen_votes.add(vote.digest)
        self.add_block(vote.block)
        self.votes.setdefault((vote.block.digest, vote.stage), []).append(vote)
        self.all_votes.append(vote)
        self._dirty = True
        return True

    def add_view_message(self, message: ViewMessage) -> bool:
        if message.digest in self._seen_views:
            return False
        self._seen_views.add(message.digest)
        for vote in message.qc.votes:
            self.add_vote(vote)
        self.view_messages.setdefault((message.epoch, message.view), []).append(message)
        self._dirty = True
        return True

    # -- epochs --------------------------------------------------------------------

    def tx_set(self, epoch: int) -> Optional[FrozenSet[Transaction]]:
        """T*_e(M): undefined (None) when B*_{g,e}(M) is."""
        if epoch < 0:
            return frozenset()
        self.refresh()
        if epoch >= len(self.geneses):
            return None
        return self.geneses[epoch].chain_txs

    def genesis_of(self, epoch: int) -> Optional[Block]:
        self.refresh()
        if epoch < 0 or epoch >= len(self.geneses):
            return None
        return self.geneses[epoch]

    def top_epoch(self) -> int:
        self.refresh()
        return len(self.geneses) - 1

    def confirm(self) -> FrozenSet[Transaction]:
        self.refresh()
        return self.geneses[-1].chain_txs

    def refresh(self) -> None:
        if not self._dirty:
            return
        self._dirty = False
        geneses = [GENESIS]
        self.geneses = geneses
        N = self.stake.N
        e = 0
        while True:
            T_e = geneses[e].chain_txs
            boundary = e * N + N
            qualifying = [
                block for block in self.by_epoch.get(e, ())
                if block.height >= boundary and self.is_valid(block)
                and all(self.qc_for(block, stage, T_e) is not None for stage in (1, 2, 3))
            ]
            if not qualifying:
                break
            clash = any(not compatible(a, b) for i, a in enumerate(qualifying) for b in qualifying[i + 1:])
            if clash:
                if e + 1 not in self.conflicts:
                    self.conflicts.add(e + 1)
                    logger.warning("incompatible qualifying blocks for epoch %d genesis", e + 1)
                break
            chosen = max(qualifying, key=lambda block: block.height)
            if not chosen.extends(geneses[e]):
                break
            geneses.append(chosen.ancestor_at(boundary))
            e += 1

    # -- validity ------------------------------------------------------------------

    def _genesis_key(self, epoch: int) -> Optional[str]:
        if epoch < 0:
            return "none"
        if epoch >= len(self.geneses):
            return None
        return self.geneses[epoch].digest

    def is_valid(self, block: Block) -> bool:
        if block.digest == GENESIS.digest:
            return True
        key = (block.digest, self._genesis_key(block.epoch), self._genesis_key(block.epoch - 1))
        cached = self._valid.get(key)
        if cached is None:
            cached = self._check_block(block)
            self._valid[key] = cached
        return cached

    def _check_block(self, block: Block) -> bool:
        if block.height < 1 or block.epoch < 0 or block.view < 0 or block.parent is None:
            return False
        if block.epoch >= len(self.geneses):
            return False
        T_e = self.geneses[block.epoch].chain_txs
        parent = block.parent
        units = self.stake.units(T_e)
        if not units or block.proposer != units[block.view % len(units)]:
            return False
        if not self.stake.s.is_valid(block.chain_txs):
            return False
        if parent.height != block.height - 1 or not self.is_valid(parent):
            return False
        if parent.epoch == block.epoch - 1:
            T_q = frozenset() if block.epoch - 1 < 0 else self.geneses[block.epoch - 1].chain_txs
        elif parent.epoch == block.epoch:
            T_q = T_e
        else:
            return False
        if not is_qc(block.qc, parent, 1, T_q, self.stake.s):
            return False
        if self.ephemeral and block.qc.votes:
            times = [vote.tag_time() for vote in block.qc.votes]
            if any(t is None for t in times):
                return False
            if parent.qc.votes:
                parent_times = [vote.tag_time() for vote in parent.qc.votes]
                if any(t is None for t in parent_times) or min(times) <= max(parent_times):
                    return False
        return True

    # -- certificates ----------------------------------------------------------------

    def qc_for(self, block: Block, stage: int, T: FrozenSet[Transaction]) -> Optional[QC]:
        """A stage-s T-QC for the block assembled from received votes, if one exists."""
        if block.digest == GENESIS.digest:
            return EMPTY_QC
        pool = self.votes.get((block.digest, stage), [])
        key = (block.digest, stage, T)
        cached = self._qc_cache.get(key)
        if cached is not None and (cached[1] is not None or cached[0] == len(pool)):
            return cached[1]
        chosen: Dict[str, Vote] = {}
        weight = 0
        for vote in pool:
            if vote.voter in chosen:
                continue
            if vote.stake != self.stake.stake(T, vote.voter) or vote.stake < 1:
                continue
            chosen[vote.voter] = vote
            weight += vote.stake
        result = QC(frozenset(chosen.values())) if self.stake.supermajority(weight) else None
        self._qc_cache[key] = (len(pool), result)
        return result

    def view_certificate(self, epoch: int, view: int) -> Optional[List[ViewMessage]]:
        T_e = self.tx_set(epoch)
        if T_e is None:
            return None
        chosen: Dict[str, ViewMessage] = {}
        weight = 0
        for message in self.view_messages.get((epoch, view), ()):
            if message.identifier in chosen or not self.view_message_valid(message, T_e):
                continue
            chosen[message.identifier] = message
            weight += message.stake
        if not self.stake.supermajority(weight):
            return None
        return list(chosen.values())

    def view_message_valid(self, message: ViewMessage, T_e: FrozenSet[Transaction]) -> bool:
        if message.stake != self.stake.stake(T_e, message.identifier):
            return False
        if not message.qc.votes:
            return True
        block = message.qc.block
        return (block.epoch == message.epoch and is_qc(message.qc, block, 1, T_e, self.stake.s)
                and self.is_valid(block))

    def highest_view_certificate(self, epoch: int, above: int) -> Optional[Tuple[int, List[ViewMessage]]]:
        views = sorted((v for (e, v) in self.view_messages if e == epoch and v > above), reverse=True)
        for view in views:
            certificate = self.view_certificate(epoch, view)
            if certificate is not None:
                return view, certificate
        return None


def pool_from_messages(messages: Iterable[Message], s: StakeState, ephemeral: bool = False) -> MessagePool:
    pool = MessagePool(StakeView(s), ephemeral)
    for message in messages:
        for entry in message.entries:
            _ingest_entry(pool, entry)
    return pool


def _ingest_entry(pool: MessagePool, entry: Entry) -> None:
    if isinstance(entry, Block):
        pool.add_block(entry)
    elif isinstance(entry, Vote):
        pool.add_vote(entry)
    elif isinstance(entry, ViewMessage):
        pool.add_view_message(entry)


def is_block_valid(block: Block, messages: Iterable[Message], s: StakeState) -> bool:
    pool = pool_from_messages(messages, s)
    pool.add_block(block)
    pool.refresh()
    return pool.is_valid(block)


def epoch_genesis(messages: Iterable[Message], epoch: int, s: StakeState) -> Optional[Tuple[Block, FrozenSet[Transaction]]]:
    pool = pool_from_messages(messages, s)
    genesis = pool.genesis_of(epoch)
    if genesis is None:
        return None
    return genesis, genesis.chain_txs


def confirm(messages: Iterable[Message], s: StakeState) -> FrozenSet[Transaction]:
    return pool_from_messages(messages, s).confirm()


# ----------------------------------------------------------------------------
# Honest node
# ----------------------------------------------------------------------------

@dataclass
class _VoteIntent:
    voter: str
    stake: int
    block: Block
    stage: int

    def tag_payload(self) -> SignedEntry:
        return SignedEntry(self.voter, ("vote", self.stake, self.block.digest, self.stage))


class PosHotStuffNode(StateMachine):
    """Honest PoS-HotStuff player; never reads the global timeslot unless ephemeral."""

    def __init__(self, identifiers: Iterable[str], s: StakeState, delta: int, kappa: Fraction = Fraction(1),
                 ephemeral: bool = False):
        self.identifiers = sorted(identifiers)
        self.stake = StakeView(s)
        self.delta = delta
        self.kappa = Fraction(kappa)
        self.ephemeral = ephemeral
        self.knows_time = ephemeral
        self.pool = MessagePool(self.stake, ephemeral)
        self.timeout = view_timeout(delta, self.kappa)

        self.T_star: Dict[str, Transaction] = {}
        self.epoch = -1
        self.view = -1
        self.T_e: Optional[FrozenSet[Transaction]] = None
        self.B_ge: Optional[Block] = None
        self.Q1: QC = EMPTY_QC
        self.Q2: Optional[QC] = None
        self.B: Optional[Block] = None
        self.timer: Optional[int] = None
        self.steps = 0

        self._block_handled = False
        self._stage2_done = False
        self._stage3_done = False
        self._view_sent: Set[Tuple[int, int]] = set()
        self._outbox: List[Message] = []
        self._intents: List[_VoteIntent] = []
        self._flags: List[Tuple[str, Dict[str, Any]]] = []
        self._reported_conflicts: Set[int] = set()

    # -- StateMachine ----------------------------------------------------------------

    def on_step(self, inp: StepInput) -> StepOutput:
        if inp.iteration == 0:
            self.steps += 1
            self._outbox = []
            self._intents = []
            self._ingest(inp.messages, inp.t)
            if self.timer is not None and self.timer > 0:
                self.timer -= 1
            self._run_handlers()
            self._report_conflicts()
            if self.ephemeral and self._intents:
                return StepOutput(queries=[Query(EphemeralKeyOracle.oracle_id, (intent.tag_payload(), inp.t + 1))
                                           for intent in self._intents])
            self._outbox.extend(self._plain_votes())
            return StepOutput(messages=self._outbox)
        tags = {query.payload[0].digest: entry for query, entry in inp.responses}
        for intent in self._intents:
            tag = tags.get(intent.tag_payload().digest)
            if tag is None or tag == NULL_RESPONSE:
                continue
            self._outbox.append(Message.of(Vote(intent.voter, intent.stake, intent.block, intent.stage, tag)))
        self._intents = []
        return StepOutput(messages=self._outbox)

    def confirmed(self) -> FrozenSet[Transaction]:
        return self.pool.confirm()

    def drain_flags(self) -> List[Tuple[str, Dict[str, Any]]]:
        flags, self._flags = self._flags, []
        return flags

    # -- receipt ---------------------------------------------------------------------

    def _learn_tx(self, tx: Transaction) -> None:
        if tx.tx_id not in self.T_star:
            self.T_star[tx.tx_id] = tx
            self._outbox.append(Message.of(TransactionEntry(tx)))

    def _ingest(self, messages: Sequence[Message], t: Optional[int]) -> None:
        for message in messages:
            for entry in message.entries:
                if isinstance(entry, TransactionEntry):
                    self._learn_tx(entry.tx)
                elif isinstance(entry, Block):
                    self.pool.add_block(entry)
                    for tx in sorted(entry.txs, key=lambda tx: tx.tx_id):
                        self._learn_tx(tx)
                elif isinstance(entry, Vote):
                    if self.ephemeral and not self._fresh(entry, t):
                        continue
                    self.pool.add_vote(entry)
                elif isinstance(entry, ViewMessage):
                    self.pool.add_view_message(entry)

    def _fresh(self, vote: Vote, t: Optional[int]) -> bool:
        stamp = vote.tag_time()
        return stamp is not None and t is not None and t - self.delta <= stamp <= t

    # -- handlers --------------------------------------------------------------------

    def _staked(self) -> List[Tuple[str, int]]:
        if self.T_e is None:
            return []
        return [(identifier, self.stake.stake(self.T_e, identifier)) for identifier in self.identifiers
                if self.stake.stake(self.T_e, identifier) > 0]

    def _vote(self, block: Block, stage: int) -> None:
        for identifier, c in self._staked():
            self._intents.append(_VoteIntent(identifier, c, block, stage))

    def _plain_votes(self) -> List[Message]:
        if not self._intents:
            return []
        votes = [Vote(i.voter, i.stake, i.block, i.stage) for i in self._intents]
        self._intents = []
        return [Message.of(vote) for vote in votes]

    def _run_handlers(self) -> None:
        for _ in range(1000):
            fired = (self._on_epoch() or self._on_view_certificate() or self._on_block()
                     or self._on_stage1_qc() or self._on_stage2_qc() or self._on_view_end())
            if not fired:
                return
        logger.warning("handler fixpoint did not settle")

    def _on_epoch(self) -> bool:
        top = self.pool.top_epoch()
        if top <= self.epoch:
            return False
        self.epoch = top
        self.T_e = self.pool.tx_set(top)
        self.B_ge = self.pool.genesis_of(top)
        self.view = -1
        self.Q1 = EMPTY_QC
        self.Q2 = None
        self.B = None
        self.timer = None
        self._block_handled = self._stage2_done = self._stage3_done = False
        for identifier, c in self._staked():
            self._outbox.append(Message.of(ViewMessage(identifier, c, self.epoch, 0, EMPTY_QC)))
        logger.debug("%s enters epoch %d", self.identifiers, self.epoch)
        return True

    def _on_view_certificate(self) -> bool:
        if self.epoch < 0:
            return False
        found = self.pool.highest_view_certificate(self.epoch, self.view)
        if found is None:
            return False
        self.view, certificate = found
        self.B = None
        self._block_handled = self._stage2_done = self._stage3_done = False
        self.timer = self.timeout
        units = self.stake.units(self.T_e)
        chosen = units[self.view % len(units)] if units else None
        if chosen in self.identifiers:
            self._outbox.append(Message.of(self.propose_block(chosen, certificate)))
        return True

    def propose_block(self, identifier: str, certificate: Sequence[ViewMessage]) -> Block:
        """Eq. 1 when every view message carries an empty QC, Eq. 2 otherwise."""
        qcs = [message.qc for message in certificate if message.qc.votes]
        if not qcs:
            parent = self.B_ge
            if parent.digest == GENESIS.digest:
                qc = EMPTY_QC
            else:
                qc = self.pool.qc_for(parent, 1, self.pool.tx_set(self.epoch - 1) or frozenset()) or EMPTY_QC
        else:
            qc = max(qcs, key=lambda q: (q.view, q.canonical_form()))
            parent = qc.block
        return Block(identifier, parent.height + 1, self.epoch, self.view, self._select_txs(parent), parent, qc)

    def _select_txs(self, parent: Block) -> FrozenSet[Transaction]:
        included = parent.chain_txs
        candidates = sorted((tx for tx in self.T_star.values() if tx not in included), key=lambda tx: tx.tx_id)
        chosen: List[Transaction] = []
        progress = True
        while progress and candidates:
            progress = False
            for tx in list(candidates):
                if self.stake.s.is_valid(included | frozenset(chosen) | {tx}):
                    chosen.append(tx)
                    candidates.remove(tx)
                    progress = True
        return frozenset(chosen)

    def _on_block(self) -> bool:
        if self.view < 0 or self._block_handled:
            return False
        for block in self.pool.block_order:
            if block.epoch != self.epoch or block.view != self.view:
                continue
            if not self.pool.is_valid(block):
                continue
            self._block_handled = True
            if self.Q2 is None or self.Q2.view <= block.qc.view:
                self.B = block
                self._vote(block, 1)
            return True
        return False

    def _on_stage1_qc(self) -> bool:
        if self.B is None or self._stage2_done:
            return False
        qc = self.pool.qc_for(self.B, 1, self.T_e)
        if qc is None:
            return False
        self._stage2_done = True
        self.Q1 = qc
        self._vote(self.B, 2)
        return True

    def _on_stage2_qc(self) -> bool:
        if self.B is None or not self._stage2_done or self._stage3_done:
            return False
        qc = self.pool.qc_for(self.B, 2, self.T_e)
        if qc is None:
            return False
        self._stage3_done = True
        self.Q2 = qc
        self._vote(self.B, 3)
        return True

    def _on_view_end(self) -> bool:
        if self.epoch < 0 or self.view < 0 or (self.epoch, self.view) in self._view_sent:
            return False
        expired = self.timer is not None and self.timer <= 0
        finished = self.B is not None and self.pool.qc_for(self.B, 3, self.T_e) is not None
        if not (expired or finished):
            return False
        self._view_sent.add((self.epoch, self.view))
        for identifier, c in self._staked():
            self._outbox.append(Message.of(ViewMessage(identifier, c, self.epoch, self.view + 1, self.Q1)))
        return True

    def _report_conflicts(self) -> None:
        for epoch in sorted(self.pool.conflicts - self._reported_conflicts):
            self._reported_conflicts.add(epoch)
            self._flags.append(("epoch_conflict", {"epoch": epoch}))


# ----------------------------------------------------------------------------
# Accountability
# ----------------------------------------------------------------------------

def collect_votes(entries: Iterable[Entry]) -> List[Vote]:
    """Every vote in or below the given entries, each shared entry walked once."""
    votes: Dict[str, Vote] = {}
    seen: Set[str] = set()
    stack = list(entries)
    while stack:
        item = stack.pop()
        if item.digest in seen:
            continue
        seen.add(item.digest)
        if isinstance(item, Vote):
            votes.setdefault(item.digest, item)
        stack.extend(item.children())
    return sorted(votes.values(), key=lambda vote: vote.digest)


def blame(entries: Iterable[Entry]) -> Set[str]:
    """Identifiers with a stage-3 vote and a later-or-equal stage-1 vote for another block."""
    return blame_votes(collect_votes(entries))


def blame_votes(votes: Iterable[Vote]) -> Set[str]:
    by_voter: Dict[str, List[Vote]] = {}
    for vote in sorted(votes, key=lambda vote: vote.digest):
        by_voter.setdefault(vote.voter, []).append(vote)
    blamed: Set[str] = set()
    for voter, cast in by_voter.items():
        third = [v for v in cast if v.stage == 3]
        first = [v for v in cast if v.stage == 1]
        for V in third:
            for W in first:
                if (W.block.digest != V.block.digest and V.block.epoch == W.block.epoch
                        and V.view <= W.view
                        and (W.block.qc.epoch, W.block.qc.view) < (V.block.epoch, V.view)):
                    blamed.add(voter)
                    break
            if voter in blamed:
                break
    return blamed


@dataclass
class AccountabilityWitness:
    stage3: QC
    stage1: QC
    blamed: Set[str]
    blamed_stake: int
    total: int

    @property
    def weight(self) -> Fraction:
        return Fraction(self.blamed_stake, self.total) if self.total else Fraction(0)


def accountability_witness(entries: Iterable[Entry], s: StakeState,
                           T_e: Iterable[Transaction]) -> Optional[AccountabilityWitness]:
    """
    Pick a stage-3 T_e-QC for B and, among incompatible blocks with a stage-1
    T_e-QC at a view >= v*(B), one of minimal view; blame their union.
    """
    T = frozenset(T_e)
    stake = StakeView(s)
    votes = collect_votes(entries)
    grouped: Dict[Tuple[str, int], List[Vote]] = {}
    blocks: Dict[str, Block] = {}
    for vote in votes:
        grouped.setdefault((vote.block.digest, vote.stage), []).append(vote)
        blocks[vote.block.digest] = vote.block

    def certificate(block: Block, stage: int) -> Optional[QC]:
        chosen: Dict[str, Vote] = {}
        for vote in grouped.get((block.digest, stage), ()):
            if vote.voter not in chosen and vote.stake == stake.stake(T, vote.voter) and vote.stake > 0:
                chosen[vote.voter] = vote
        weight = sum(v.stake for v in chosen.values())
        return QC(frozenset(chosen.values())) if stake.supermajority(weight) else None

    below: Dict[str, FrozenSet[Vote]] = {}

    def votes_below(block: Block) -> FrozenSet[Vote]:
        if block.digest not in below:
            below[block.digest] = frozenset(collect_votes([block]))
        return below[block.digest]

    ordered = sorted(blocks.values(), key=lambda b: (b.view, b.height, b.digest))
    fallback: Optional[AccountabilityWitness] = None
    for block in ordered:
        q3 = certificate(block, 3)
        if q3 is None:
            continue
        rivals = [other for other in ordered
                  if other.epoch == block.epoch and other.view >= block.view and not compatible(block, other)]
        for rival in rivals:
            q1 = certificate(rival, 1)
            if q1 is None:
                continue
            blamed = blame_votes(q3.votes | q1.votes | votes_below(block) | votes_below(rival))
            blamed_stake = sum(stake.stake(T, identifier) for identifier in blamed)
            found = AccountabilityWitness(q3, q1, blamed, blamed_stake, stake.N)
            if blamed:
                return found
            fallback = fallback or found
    return fallback
