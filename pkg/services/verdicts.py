"""
Verdicts - Trace-Level Adjudication

Checks a finished ExecutionTrace against the properties a protocol claims:
- consistency (no roll-backs, no conflicting confirmations)
- liveness within a latency parameter, and optimistic responsiveness
- accountability: blame sets and their weight
- Byzantine Agreement: termination, agreement and validity

Every failing verdict carries the first violating event as its witness.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple

from config import get_settings
from services.pos_hotstuff import accountability_witness, blame
from services.settings import confirmed_sets_during
from utils.errors import SearchCapExceeded
from utils.model import Entry, fraction_text
from utils.trace import ExecutionTrace
from utils.transactions import Transaction

logger = logging.getLogger(__name__)

__all__ = [
    "Status", "Verdict", "blame", "check_accountability", "check_ba", "check_consistency",
    "check_liveness", "check_optimistic_responsiveness", "realized_delta", "weight_at_least",
]


class Status(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "n/a"


@dataclass
class Verdict:
    prop: str
    status: Status
    witness: Dict[str, Any] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status is Status.PASS

    @property
    def failed(self) -> bool:
        return self.status is Status.FAIL

    def to_dict(self) -> Dict[str, Any]:
        return {"property": self.prop, "status": self.status.value, "witness": self.witness, "params": self.params}


def _txs(trace: ExecutionTrace, ids: Iterable[str]) -> FrozenSet[Transaction]:
    return frozenset(trace.tx(i) for i in ids)


# ----------------------------------------------------------------------------
# Consistency
# ----------------------------------------------------------------------------

def _conflicting_pair(a: FrozenSet[Transaction], b: FrozenSet[Transaction]) -> Optional[Tuple[str, str]]:
    for x in sorted(a - b, key=lambda tx: tx.tx_id):
        for y in sorted(b - a, key=lambda tx: tx.tx_id):
            if x.inputs & y.inputs:
                return x.tx_id, y.tx_id
    return None


def check_consistency(trace: ExecutionTrace) -> Verdict:
    """Fails on an honest roll-back or on two honest confirmed sets whose union is invalid."""
    s = trace.stake_state()
    honest = trace.honest_player_ids()
    for player in honest:
        held: Dict[str, int] = {}
        for t, ids in trace.confirmed_changes(player):
            dropped = sorted(set(held) - ids)
            if dropped:
                tx_id = dropped[0]
                return Verdict("consistency", Status.FAIL, {
                    "kind": "rollback", "player": player, "tx": tx_id,
                    "confirmed_at": held[tx_id], "dropped_at": t,
                })
            for tx_id in ids:
                held.setdefault(tx_id, t)

    snapshots = sorted(trace.distinct_confirmed_sets(honest).items(), key=lambda item: (item[1][1], item[1][0]))
    resolved = [(ids, where, _txs(trace, ids)) for ids, where in snapshots]
    for ids, (player, t), txs in resolved:
        if not s.is_valid(txs):
            return Verdict("consistency", Status.FAIL, {"kind": "invalid", "player": player, "t": t,
                                                        "txs": sorted(ids)})
    for (ids_a, where_a, a), (ids_b, where_b, b) in itertools.combinations(resolved, 2):
        if ids_a <= ids_b or ids_b <= ids_a:
            continue
        if not s.is_valid(a | b):
            pair = _conflicting_pair(a, b)
            witness: Dict[str, Any] = {
                "kind": "conflict",
                "players": [where_a[0], where_b[0]],
                "times": [where_a[1], where_b[1]],
            }
            if pair is not None:
                witness["txs"] = list(pair)
            else:
                witness["only_a"] = sorted(ids_a - ids_b)
                witness["only_b"] = sorted(ids_b - ids_a)
            return Verdict("consistency", Status.FAIL, witness)
    return Verdict("consistency", Status.PASS, {"snapshots": len(resolved)})


# ----------------------------------------------------------------------------
# Liveness and responsiveness
# ----------------------------------------------------------------------------

def _stays_valid(trace: ExecutionTrace, tx: Transaction, honest: List[str], start: int, end: int) -> bool:
    """Whether T + {tx} is valid for every honest confirmed set T held during [start, end]."""
    s = trace.stake_state()
    for q in honest:
        for ids in confirmed_sets_during(trace, q, start, end):
            if tx.tx_id in ids:
                continue
            if not s.is_valid(_txs(trace, ids) | {tx}):
                return False
    return True


def _latency_check(trace: ExecutionTrace, prop: str, deadline: Callable[[int], int],
                   params: Dict[str, Any]) -> Verdict:
    honest = trace.honest_player_ids()
    checked = 0
    exempt = 0
    for tx in trace.catalogue():
        received = trace.first_tx_receipt(tx.tx_id, honest)
        if received is None:
            continue
        t_star = deadline(received)
        if t_star > trace.duration or not _stays_valid(trace, tx, honest, received, t_star):
            exempt += 1
            continue
        checked += 1
        for q in honest:
            t_q = trace.first_active(q, t_star)
            if t_q is None:
                continue
            if tx.tx_id not in trace.confirmed_ids_at(q, t_q):
                return Verdict(prop, Status.FAIL, {
                    "tx": tx.tx_id, "player": q, "received_at": received, "deadline": t_star, "checked_at": t_q,
                }, params)
    return Verdict(prop, Status.PASS, {"checked": checked, "exempt": exempt}, params)


def check_liveness(trace: ExecutionTrace, ell: int) -> Verdict:
    """Transactions received by t and valid throughout are confirmed by max{GST, t} + ell."""
    gst = trace.cfg.gst
    return _latency_check(trace, "liveness", lambda t: max(gst, t) + ell, {"ell": ell})


def realized_delta(trace: ExecutionTrace) -> Optional[int]:
    """Smallest delta with every delivery at or before max(GST, sent) + delta; None without deliveries."""
    gst = trace.cfg.gst
    gaps = [d.delivered_at - max(gst, d.sent_at) for d in trace.deliveries
            if d.sender != d.receiver and d.delivered_at is not None and d.delivered_at <= trace.duration]
    return max(1, max(gaps)) if gaps else None


def check_optimistic_responsiveness(trace: ExecutionTrace, ell_of_delta: Callable[[int], int],
                                    delta_star: int = 0) -> Verdict:
    """Liveness template with t* = max{GST + delta_star, t} + ell(delta) for the realized delta."""
    if trace.byzantine_player_ids():
        return Verdict("responsiveness", Status.NOT_APPLICABLE, {"reason": "Byzantine players present"})
    delta = realized_delta(trace)
    if delta is None:
        return Verdict("responsiveness", Status.NOT_APPLICABLE, {"reason": "no deliveries"})
    ell = ell_of_delta(delta)
    start = trace.cfg.gst + delta_star
    return _latency_check(trace, "responsiveness", lambda t: max(start, t) + ell,
                          {"delta": delta, "ell": ell, "delta_star": delta_star})


# ----------------------------------------------------------------------------
# Accountability
# ----------------------------------------------------------------------------

def _stake_weight_subset(trace: ExecutionTrace, identifiers: FrozenSet[str], rho1: Fraction,
                         T: FrozenSet[Transaction], cap: int) -> bool:
    s = trace.stake_state()

    def heavy(subset: FrozenSet[Transaction]) -> bool:
        balances = s.balances(subset)
        total = sum(balances.values())
        return total > 0 and Fraction(sum(balances.get(i, 0) for i in identifiers), total) >= rho1

    if heavy(frozenset()) or (s.is_valid(T) and heavy(T)):
        return True
    if len(T) > cap:
        raise SearchCapExceeded(len(T), cap)
    ordered = sorted(T, key=lambda tx: tx.tx_id)
    for size in range(1, len(ordered)):
        for combo in itertools.combinations(ordered, size):
            subset = frozenset(combo)
            if s.is_valid(subset) and heavy(subset):
                return True
    return False


def weight_at_least(identifiers: Iterable[str], rho1: Any, trace: ExecutionTrace,
                    cap: Optional[int] = None) -> bool:
    """
    Whether the identifiers carry at least rho1 of some external resource at some
    timeslot, or of the stake under some subset of an honest confirmed set.
    """
    ids = frozenset(identifiers)
    rho1 = Fraction(rho1)
    cap = get_settings().search_cap if cap is None else cap
    owners = {trace.roster.owner_of(i) for i in ids} - {None}
    for allocation in trace.allocations.values():
        for t in sorted({1} | set(allocation.change_points())):
            total = allocation.total(t)
            if total > 0 and Fraction(allocation.total(t, owners & set(allocation.players())), total) >= rho1:
                return True
    for ids_set in trace.distinct_confirmed_sets(trace.honest_player_ids()):
        if _stake_weight_subset(trace, ids, rho1, _txs(trace, ids_set), cap):
            return True
    return False


def check_accountability(trace: ExecutionTrace, entries: Iterable[Entry], T_e: Iterable[Transaction] = (),
                         rho1: Any = Fraction(1, 3)) -> Verdict:
    """
    After a consistency failure, the two conflicting certificates must blame
    only Byzantine identifiers, of weight at least rho1 under T_e.
    """
    rho1 = Fraction(rho1)
    params = {"rho1": fraction_text(rho1)}
    if check_consistency(trace).passed:
        return Verdict("accountability", Status.NOT_APPLICABLE, {"reason": "no consistency violation"}, params)
    witness = accountability_witness(entries, trace.stake_state(), T_e)
    if witness is None:
        return Verdict("accountability", Status.FAIL, {"reason": "no conflicting certificates found"}, params)
    blamed = sorted(witness.blamed)
    honest_blamed = sorted(set(blamed) & trace.honest_identifiers())
    record = {"blamed": blamed, "weight": fraction_text(witness.weight),
              "stage3_view": witness.stage3.view, "stage1_view": witness.stage1.view}
    if honest_blamed:
        record["honest_blamed"] = honest_blamed
        return Verdict("accountability", Status.FAIL, record, params)
    if witness.weight < rho1:
        return Verdict("accountability", Status.FAIL, record, params)
    return Verdict("accountability", Status.PASS, record, params)


# ----------------------------------------------------------------------------
# Byzantine Agreement
# ----------------------------------------------------------------------------

def check_ba(trace: ExecutionTrace) -> List[Verdict]:
    honest = trace.honest_player_ids()
    outputs = {p: trace.output_of(p) for p in honest}
    given = {p: out for p, out in outputs.items() if out is not None}

    if not given:
        anyone_active = any(trace.first_active(p, 1) is not None for p in honest)
        termination = Verdict("termination", Status.FAIL if anyone_active else Status.NOT_APPLICABLE,
                              {"reason": "no honest output by the end of the trace", "horizon": trace.duration})
    else:
        t_star = max(t for t, _ in given.values())
        silent = sorted(p for p in honest if p not in given and trace.first_active(p, t_star) is not None)
        if silent:
            termination = Verdict("termination", Status.FAIL,
                                  {"player": silent[0], "after": t_star, "horizon": trace.duration})
        else:
            termination = Verdict("termination", Status.PASS, {"t_star": t_star})

    values = sorted({repr(v) for _, v in given.values()})
    if len(values) > 1:
        first = {}
        for p in sorted(given):
            first.setdefault(repr(given[p][1]), p)
        pair = sorted(first.values())[:2]
        agreement = Verdict("agreement", Status.FAIL,
                            {"players": pair, "outputs": [given[p][1] for p in pair]})
    else:
        agreement = Verdict("agreement", Status.PASS, {"outputs": len(given)})

    inputs = {p: trace.inputs[p] for p in honest if p in trace.inputs}
    if inputs and len(set(inputs.values())) == 1:
        expected = next(iter(inputs.values()))
        wrong = sorted(p for p, (_, v) in given.items() if v != expected)
        if wrong:
            validity = Verdict("validity", Status.FAIL,
                               {"player": wrong[0], "output": given[wrong[0]][1], "input": expected})
        else:
            validity = Verdict("validity", Status.PASS, {"input": expected})
    else:
        validity = Verdict("validity", Status.PASS, {"reason": "mixed honest inputs"})
    return [termination, agreement, validity]
