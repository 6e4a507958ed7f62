"""
Permitters - External Resources, Query Budgets, PoW and PoSp Oracles

- ResourceAllocation: piecewise-constant R(p, t) schedules per permitter
- check_query_budget: single-use (sum of b) and multi-use (each b) budgets
- rho_bounded_external: R(t) in [1, R_max] and Byzantine share <= rho
- PowOracle / pow_query: minimum of b keyed 256-bit strings, as four big-endian words
- PospOracle / posp_query: Poisson(1) proof counts per (id, y), independent of t
"""

import logging
import math
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .model import OracleEntry, SignedEntry, canonical, digest_of, keyed_bytes, keyed_uniform
from .oracles import Oracle, Query, Response

logger = logging.getLogger(__name__)


class PermitterMode(str, Enum):
    SINGLE_USE = "single_use"
    MULTI_USE = "multi_use"


class ResourceAllocation:
    """R(p, t) for one permitter: per player, a sorted list of (start timeslot, balance)."""

    def __init__(self, oracle_id: str, segments: Optional[Mapping[str, Sequence[Tuple[int, int]]]] = None):
        self.oracle_id = oracle_id
        self.segments: Dict[str, List[Tuple[int, int]]] = {}
        for player, rows in (segments or {}).items():
            for start, value in rows:
                self.set(player, start, value)

    def set(self, player: str, start: int, value: int) -> "ResourceAllocation":
        if value < 0:
            raise ValueError(f"resource balance must be non-negative, got {value} for {player}")
        rows = [row for row in self.segments.get(player, []) if row[0] != start]
        rows.append((int(start), int(value)))
        self.segments[player] = sorted(rows)
        return self

    def balance(self, player: str, t: int) -> int:
        value = 0
        for start, amount in self.segments.get(player, ()):
            if start > t:
                break
            value = amount
        return value

    def players(self) -> List[str]:
        return sorted(self.segments)

    def total(self, t: int, players: Optional[Iterable[str]] = None) -> int:
        return sum(self.balance(p, t) for p in (players if players is not None else self.segments))

    def change_points(self) -> List[int]:
        return sorted({start for rows in self.segments.values() for start, _ in rows})

    def to_dict(self) -> Dict[str, Any]:
        return {"oracle_id": self.oracle_id,
                "segments": {p: [list(row) for row in rows] for p, rows in sorted(self.segments.items())}}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ResourceAllocation":
        return cls(data["oracle_id"], {p: [tuple(row) for row in rows] for p, rows in data["segments"].items()})


def check_query_budget(allocation: ResourceAllocation, player: str, t: int, previous: Sequence[int],
                       b: int, mode: PermitterMode) -> bool:
    """Whether a new query (b, sigma) fits the player's budget this timeslot."""
    if b < 0:
        return False
    if b == 0:
        return True
    available = allocation.balance(player, t)
    if PermitterMode(mode) is PermitterMode.SINGLE_USE:
        return sum(previous) + b <= available
    return b <= available


def rho_bounded_external(allocations: Iterable[ResourceAllocation], byzantine_players: Iterable[str],
                         rho: Fraction, r_max: int, horizon: int) -> bool:
    byz = set(byzantine_players)
    for allocation in allocations:
        checkpoints = sorted({1} | {t for t in allocation.change_points() if 1 <= t <= horizon})
        # balances are piecewise constant, so change points cover every t <= horizon
        for t in checkpoints:
            total = allocation.total(t)
            if not (1 <= total <= r_max):
                logger.info("%s: R(%d)=%d outside [1, %d]", allocation.oracle_id, t, total, r_max)
                return False
            if Fraction(allocation.total(t, byz & set(allocation.players())), total) > rho:
                logger.info("%s: Byzantine share above %s at t=%d", allocation.oracle_id, rho, t)
                return False
    return True


# ----------------------------------------------------------------------------
# Proof of work
# ----------------------------------------------------------------------------

def pow_tau(b: int, sigma: Any, t: int, seed: int) -> np.ndarray:
    """Lexicographically smallest of b keyed 256-bit strings, as four big-endian 64-bit words."""
    if b < 1:
        raise ValueError("a PoW query needs b >= 1")
    key = canonical(sigma)
    raw = b"".join(keyed_bytes(seed, "pow", b, key, t, i, size=32) for i in range(b))
    words = np.frombuffer(raw, dtype=">u8").reshape(b, 4)
    order = np.lexsort(words.T[::-1])
    return words[order[0]].copy()


def tau_hex(tau: np.ndarray) -> str:
    return "".join(f"{int(word):016x}" for word in tau)


def quality(tau: np.ndarray) -> int:
    """Number of leading zero bits."""
    for index, word in enumerate(int(w) for w in tau):
        if word:
            return 64 * index + (64 - word.bit_length())
    return 256


class PowOracle(Oracle):
    """Single-use permitter answering (b, sigma) with (sigma, tau) at the same timeslot."""

    oracle_id = "pow"
    declared_time_malleable = False
    permitter = True
    mode = PermitterMode.SINGLE_USE

    def respond(self, query: Query, t: int) -> List[Response]:
        if query.b < 1:
            return []
        tau = pow_tau(query.b, query.payload, t, self.seed)
        return [(OracleEntry(self.oracle_id, (query.payload, tau_hex(tau))), t)]

    def sample_queries(self) -> List[Query]:
        return [Query(self.oracle_id, "probe", 1)]


def pow_query(oracle: PowOracle, b: int, sigma: Any, t: int) -> Optional[Response]:
    responses = oracle.respond(Query(oracle.oracle_id, sigma, b), t)
    return responses[0] if responses else None


# ----------------------------------------------------------------------------
# Proof of space
# ----------------------------------------------------------------------------

def poisson_one(u: float) -> int:
    """Inverse-CDF sample of Poisson(1) from a uniform u in [0, 1)."""
    k = 0
    p = math.exp(-1.0)
    cdf = p
    while u >= cdf and k < 64:
        k += 1
        p /= k
        cdf += p
    return k


def posp_proofs(seed: int, identifier: str, y: Any) -> Tuple[str, ...]:
    count = poisson_one(keyed_uniform(seed, "posp", identifier, canonical(y)))
    return tuple(digest_of(("posp-proof", seed, identifier, y, j)) for j in range(count))


class PospOracle(Oracle):
    """Multi-use permitter: a signed challenge (id, y) returns (y, id, X(id, y))."""

    oracle_id = "posp"
    declared_time_malleable = True
    permitter = True
    mode = PermitterMode.MULTI_USE

    def respond(self, query: Query, t: int) -> List[Response]:
        entry = query.payload
        if not isinstance(entry, SignedEntry) or query.b < 1:
            return []
        proofs = posp_proofs(self.seed, entry.identifier, entry.payload)
        return [(OracleEntry(self.oracle_id, (entry.payload, entry.identifier, proofs)), t)]

    def sample_queries(self) -> List[Query]:
        return [Query(self.oracle_id, SignedEntry("probe", "y"), 1)]


def posp_query(oracle: PospOracle, identifier: str, y: Any, t: int) -> Response:
    return oracle.respond(Query(oracle.oracle_id, SignedEntry(identifier, y), 1), t)[0]


# ----------------------------------------------------------------------------
# Statistics
# ----------------------------------------------------------------------------

def pow_quality_samples(samples: int, seed: int, b: int = 1) -> np.ndarray:
    """Leading-zero counts of `samples` distinct b-queries."""
    return np.array([quality(pow_tau(b, ("sample", i), 1, seed)) for i in range(samples)], dtype=np.int64)


def posp_count_samples(pairs: int, seed: int) -> np.ndarray:
    return np.array([len(posp_proofs(seed, f"id{i}", ("y", i))) for i in range(pairs)], dtype=np.int64)


def leading_zero_law(qualities: np.ndarray, k_max: int = 10) -> List[Dict[str, float]]:
    """Empirical P(quality >= k) against 2^-k with a 3-sigma binomial band."""
    n = len(qualities)
    rows = []
    for k in range(1, k_max + 1):
        expected = 2.0 ** -k
        observed = float(np.mean(qualities >= k)) if n else 0.0
        sigma = math.sqrt(expected * (1 - expected) / n) if n else 0.0
        rows.append({"k": k, "observed": observed, "expected": expected,
                     "within": abs(observed - expected) <= 3 * sigma})
    return rows
