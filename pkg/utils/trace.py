"""
Execution Trace - Event Record, Indexes and JSONL Persistence

The trace is the single artifact every verdict check consumes:
- header: config, roster, S0, transaction catalogue, allocations, protocol inputs
- events: one record per dissemination, receipt, oracle call, status change,
  confirmation change, output, delivery, injection, corruption and flag
- indexes rebuilt from events so a loaded file answers the same queries as a
  live run (confirmed sets, outputs, deliveries, activity, per-player views)

Files are JSON lines terminated by a sha256 trace-hash record.
"""

import bisect
import hashlib
import json
import logging
import os
from collections import defaultdict
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple

from .errors import SimulationError
from .model import Activity, ExecutionConfig, Roster
from .permitters import ResourceAllocation
from .timing import Delivery
from .transactions import StakeState, Transaction

logger = logging.getLogger(__name__)

TRACE_VERSION = 1


def _line(record: Mapping[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class ExecutionTrace:
    """Totally ordered record of one execution plus the indexes the checkers read."""

    def __init__(self, cfg: ExecutionConfig, roster: Roster, stake_state: StakeState,
                 protocol: str = "", scenario: str = "", instance: str = ""):
        self.cfg = cfg
        self.roster = roster
        self._stake_state = stake_state
        self.protocol = protocol
        self.scenario = scenario
        self.instance = instance
        self.allocations: Dict[str, ResourceAllocation] = {}
        self.inputs: Dict[str, Any] = {}
        self.meta: Dict[str, Any] = {}
        self.events: List[Dict[str, Any]] = []
        self.duration: int = 0

        self._catalogue: Dict[str, Transaction] = {}
        self._confirmed: Dict[str, List[Tuple[int, FrozenSet[str]]]] = defaultdict(list)
        self._outputs: Dict[str, Tuple[int, Any]] = {}
        self._tx_receipts: Dict[str, Dict[str, int]] = defaultdict(dict)
        self._status: Dict[str, List[Tuple[int, Activity]]] = defaultdict(list)
        self._views: Dict[str, Dict[int, Tuple[str, ...]]] = defaultdict(dict)
        self._injections: List[Tuple[str, str, int]] = []
        self._corrupted: Dict[str, int] = {}
        self.deliveries: List[Delivery] = []
        self.flags: List[Dict[str, Any]] = []

    # -- recording -----------------------------------------------------------

    def record(self, t: int, player: str, event_kind: str, payload_digest: str = "",
               data: Optional[Dict[str, Any]] = None) -> None:
        event: Dict[str, Any] = {"t": t, "player": player, "event_kind": event_kind,
                                 "payload_digest": payload_digest}
        if data is not None:
            event["data"] = data
        self.events.append(event)
        self._index(event)

    def register_tx(self, tx: Transaction) -> None:
        self._catalogue.setdefault(tx.tx_id, tx)

    def flag(self, t: int, player: str, reason: str, **detail: Any) -> None:
        logger.warning("t=%d %s: %s %s", t, player, reason, detail or "")
        self.record(t, player, "flag", data={"reason": reason, **detail})

    def _index(self, event: Dict[str, Any]) -> None:
        kind = event["event_kind"]
        t = event["t"]
        player = event["player"]
        data = event.get("data") or {}
        self.duration = max(self.duration, t)
        if kind == "confirm":
            self._confirmed[player].append((t, frozenset(data.get("txs", ()))))
        elif kind == "output":
            self._outputs.setdefault(player, (t, data.get("value")))
        elif kind == "tx_receipt":
            self._tx_receipts[player].setdefault(data["tx"], t)
        elif kind == "status":
            self._status[player].append((t, Activity(data["status"])))
        elif kind == "receipt":
            self._views[player][t] = tuple(data.get("messages", ()))
        elif kind == "injection":
            self._injections.append((player, data["tx"], t))
        elif kind == "delivery":
            self.deliveries.append(Delivery(data["sender"], player, event["payload_digest"],
                                            data["sent"], data["delivered"]))
        elif kind == "corruption":
            self._corrupted.setdefault(player, t)
        elif kind == "flag":
            self.flags.append(event)

    # -- header accessors ------------------------------------------------------

    def stake_state(self) -> StakeState:
        return self._stake_state

    def catalogue(self) -> List[Transaction]:
        return [self._catalogue[k] for k in sorted(self._catalogue)]

    def tx(self, tx_id: str) -> Transaction:
        return self._catalogue[tx_id]

    def injections(self) -> List[Tuple[str, str, int]]:
        return list(self._injections)

    def corrupted(self) -> Dict[str, int]:
        return dict(self._corrupted)

    def is_byzantine(self, player: str) -> bool:
        """Byzantine at some point of the execution (corrupted players count for the whole trace)."""
        return (player in self.roster and self.roster[player].byzantine) or player in self._corrupted

    def honest_player_ids(self) -> List[str]:
        return [pid for pid in self.roster.ids() if not self.is_byzantine(pid)]

    def byzantine_player_ids(self) -> List[str]:
        return [pid for pid in self.roster.ids() if self.is_byzantine(pid)]

    def byzantine_identifiers(self) -> FrozenSet[str]:
        return frozenset(i for pid in self.byzantine_player_ids() for i in self.roster[pid].identifiers)

    def honest_identifiers(self) -> FrozenSet[str]:
        return frozenset(i for pid in self.honest_player_ids() for i in self.roster[pid].identifiers)

    # -- queries ---------------------------------------------------------------

    def status_at(self, player: str, t: int) -> Activity:
        changes = self._status.get(player)
        if not changes:
            return Activity.INACTIVE
        index = bisect.bisect_right(changes, t, key=lambda item: item[0]) - 1
        return changes[index][1] if index >= 0 else Activity.INACTIVE

    def is_active(self, player: str, t: int) -> bool:
        return self.status_at(player, t) is not Activity.INACTIVE

    def first_active(self, player: str, start: int, end: Optional[int] = None) -> Optional[int]:
        stop = self.duration if end is None else end
        for t in range(max(1, start), stop + 1):
            if self.is_active(player, t):
                return t
        return None

    def confirmed_ids_at(self, player: str, t: int) -> FrozenSet[str]:
        changes = self._confirmed.get(player)
        if not changes:
            return frozenset()
        index = bisect.bisect_right(changes, t, key=lambda item: item[0]) - 1
        return changes[index][1] if index >= 0 else frozenset()

    def confirmed_at(self, player: str, t: int) -> FrozenSet[Transaction]:
        return frozenset(self._catalogue[i] for i in self.confirmed_ids_at(player, t))

    def confirmed_changes(self, player: str) -> List[Tuple[int, FrozenSet[str]]]:
        return list(self._confirmed.get(player, ()))

    def distinct_confirmed_sets(self, players: Iterable[str]) -> Dict[FrozenSet[str], Tuple[str, int]]:
        """Every confirmed snapshot of the given players, with its first (player, t)."""
        seen: Dict[FrozenSet[str], Tuple[str, int]] = {frozenset(): ("", 0)}
        for player in players:
            for t, ids in self._confirmed.get(player, ()):
                seen.setdefault(ids, (player, t))
        return seen

    def output_of(self, player: str) -> Optional[Tuple[int, Any]]:
        return self._outputs.get(player)

    def first_tx_receipt(self, tx_id: str, players: Iterable[str]) -> Optional[int]:
        times = [self._tx_receipts[p][tx_id] for p in players if tx_id in self._tx_receipts.get(p, {})]
        return min(times) if times else None

    def tx_receipts(self, player: str) -> Dict[str, int]:
        return dict(self._tx_receipts.get(player, {}))

    def view(self, player: str, until: int) -> Tuple[Tuple[int, Tuple[str, ...]], ...]:
        """Received-message digests of a player per timeslot, up to `until` inclusive."""
        log = self._views.get(player, {})
        return tuple((t, log[t]) for t in sorted(log) if t <= until)

    def events_of(self, kind: str) -> Iterator[Dict[str, Any]]:
        return (event for event in self.events if event["event_kind"] == kind)

    def flag_reasons(self) -> List[str]:
        return [event["data"]["reason"] for event in self.flags]

    # -- persistence -------------------------------------------------------------

    def header(self) -> Dict[str, Any]:
        return {
            "event_kind": "header",
            "version": TRACE_VERSION,
            "config": self.cfg.to_dict(),
            "roster": self.roster.to_list(),
            "stake": self._stake_state.to_dict(),
            "catalogue": [tx.to_dict() for tx in self.catalogue()],
            "allocations": {oid: alloc.to_dict() for oid, alloc in sorted(self.allocations.items())},
            "inputs": dict(sorted(self.inputs.items())),
            "protocol": self.protocol,
            "scenario": self.scenario,
            "instance": self.instance,
            "duration": self.duration,
            "meta": self.meta,
        }

    def lines(self) -> List[str]:
        return [_line(self.header())] + [_line(event) for event in self.events]

    def trace_hash(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode("utf-8")).hexdigest()

    def save(self, path: str) -> str:
        """Write the trace as JSON lines; returns the trace hash."""
        lines = self.lines()
        digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")
            f.write(_line({"trace_hash": digest}) + "\n")
        logger.info("saved trace %s (%d events)", path, len(self.events))
        return digest

    @classmethod
    def from_lines(cls, lines: List[str]) -> "ExecutionTrace":
        body = [line for line in lines if line.strip()]
        if not body:
            raise SimulationError("empty trace file")
        last = json.loads(body[-1])
        if "trace_hash" in last:
            body = body[:-1]
            expected = hashlib.sha256("\n".join(body).encode("utf-8")).hexdigest()
            if expected != last["trace_hash"]:
                raise SimulationError("trace hash does not match the trace contents")
        header = json.loads(body[0])
        if header.get("event_kind") != "header":
            raise SimulationError("trace file does not start with a header record")
        trace = cls(
            ExecutionConfig.from_dict(header["config"]),
            Roster.from_list(header["roster"]),
            StakeState.from_dict(header["stake"]),
            protocol=header.get("protocol", ""),
            scenario=header.get("scenario", ""),
            instance=header.get("instance", ""),
        )
        for row in header.get("catalogue", ()):
            trace.register_tx(Transaction.from_dict(row))
        trace.allocations = {oid: ResourceAllocation.from_dict(row)
                             for oid, row in header.get("allocations", {}).items()}
        trace.inputs = dict(header.get("inputs", {}))
        trace.meta = dict(header.get("meta", {}))
        for line in body[1:]:
            event = json.loads(line)
            trace.events.append(event)
            trace._index(event)
        trace.duration = max(trace.duration, int(header.get("duration", 0)))
        return trace

    @classmethod
    def load(cls, path: str) -> "ExecutionTrace":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_lines(f.read().splitlines())


