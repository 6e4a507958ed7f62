"""
Execution Model - Configuration, Players, Entries and Messages

Core value types of the discrete-time execution model:
- ExecutionConfig: the determined parameters of a protocol instance
- Player / Roster: players, their identifier sets and Byzantine flags
- Entry kinds (general, signed, oracle-typed, transaction) and Message tuples
- Canonical encoding and digests used for identity, traces and keyed sampling

Entries compare and hash by digest, so structurally equal entries are equal
and nested entries are referenced by digest inside their parents.
"""

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Any, ClassVar, Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple, Union

from .errors import ConfigurationError


def as_fraction(value: Union[Fraction, int, float, str]) -> Fraction:
    """Parse kappa/rho style values given as Fraction, number or 'num/den' text."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ConfigurationError(f"expected a fraction, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**6)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(f"expected a fraction, got {value!r}")
    raise ConfigurationError(f"expected a fraction, got {value!r}")


def fraction_text(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


# ----------------------------------------------------------------------------
# Canonical encoding
# ----------------------------------------------------------------------------

def canonical(obj: Any) -> str:
    """Stable text encoding of a payload; entries contribute only their digest."""
    if obj is None:
        return "N"
    if isinstance(obj, bool):
        return "T" if obj else "F"
    if isinstance(obj, Enum):
        return canonical(obj.value)
    if isinstance(obj, int):
        return f"i{obj}"
    if isinstance(obj, str):
        return f"s{len(obj)}:{obj}"
    if isinstance(obj, Fraction):
        return f"q{obj.numerator}/{obj.denominator}"
    if isinstance(obj, float):
        return f"f{obj!r}"
    if isinstance(obj, bytes):
        return f"b{obj.hex()}"
    if isinstance(obj, Entry):
        return "E" + obj.digest
    if hasattr(obj, "canonical_form"):
        return obj.canonical_form()
    if isinstance(obj, (tuple, list)):
        return "(" + ",".join(canonical(item) for item in obj) + ")"
    if isinstance(obj, (frozenset, set)):
        return "{" + ",".join(sorted(canonical(item) for item in obj)) + "}"
    if isinstance(obj, dict):
        pairs = sorted(canonical(k) + "=" + canonical(v) for k, v in obj.items())
        return "<" + ",".join(pairs) + ">"
    raise TypeError(f"cannot canonically encode {type(obj).__name__}")


def digest_text(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def digest_of(obj: Any) -> str:
    """Digest of any canonically encodable value."""
    return digest_text(canonical(obj))


def keyed_bytes(seed: int, *parts: Any, size: int = 32) -> bytes:
    """Keyed hash of (seed, parts): the lazily evaluated up-front coin flips."""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
    return hashlib.blake2b(canonical(parts).encode("utf-8"), key=key, digest_size=size).digest()


def keyed_uniform(seed: int, *parts: Any) -> float:
    """Uniform sample in [0, 1) determined by (seed, parts)."""
    return int.from_bytes(keyed_bytes(seed, *parts, size=8), "big") / 2.0**64


def keyed_int(seed: int, low: int, high: int, *parts: Any) -> int:
    """Uniform integer in [low, high] determined by (seed, parts)."""
    if high <= low:
        return low
    span = high - low + 1
    return low + int.from_bytes(keyed_bytes(seed, *parts, size=8), "big") % span


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------

class Activity(str, Enum):
    INACTIVE = "inactive"
    WAITING = "waiting"
    ACTIVE = "active"


@dataclass(frozen=True)
class ExecutionConfig:
    """Determined parameters of a protocol instance."""

    delta: int = 2
    duration: Optional[int] = 100
    gst: int = 0
    kappa: Fraction = Fraction(1)
    rho: Fraction = Fraction(0)
    epsilon: float = 0.0
    r_max: int = 1
    seed: int = 0
    authenticated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kappa", as_fraction(self.kappa))
        object.__setattr__(self, "rho", as_fraction(self.rho))
        if not isinstance(self.delta, int) or self.delta < 2:
            raise ConfigurationError(f"delta must be an integer >= 2, got {self.delta!r}", "config.delta")
        if not (0 < self.kappa <= 1):
            raise ConfigurationError(f"kappa must lie in (0, 1], got {self.kappa}", "config.kappa")
        if not (0 <= self.rho <= 1):
            raise ConfigurationError(f"rho must lie in [0, 1], got {self.rho}", "config.rho")
        if not (0 <= self.epsilon < 1):
            raise ConfigurationError(f"epsilon must lie in [0, 1), got {self.epsilon}", "config.epsilon")
        if self.r_max < 1:
            raise ConfigurationError(f"r_max must be >= 1, got {self.r_max}", "config.r_max")
        if self.gst < 0:
            raise ConfigurationError(f"gst must be >= 0, got {self.gst}", "config.gst")
        if self.duration is not None:
            if self.duration < 0:
                raise ConfigurationError(f"duration must be >= 0, got {self.duration}", "config.duration")
            if self.gst > self.duration:
                raise ConfigurationError(
                    f"gst ({self.gst}) must not exceed duration ({self.duration})", "config.gst"
                )
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    @property
    def synchronous(self) -> bool:
        return self.gst == 0

    def delivery_bound(self, sent_at: int) -> int:
        """Latest timeslot by which a ready receiver must hold a dissemination from sent_at."""
        if self.kappa < 1:
            return max(self.gst, sent_at + self.delta)
        return max(self.gst, sent_at) + self.delta

    def with_seed(self, seed: int) -> "ExecutionConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "duration": self.duration,
            "gst": self.gst,
            "kappa": fraction_text(self.kappa),
            "rho": fraction_text(self.rho),
            "epsilon": self.epsilon,
            "r_max": self.r_max,
            "seed": self.seed,
            "authenticated": self.authenticated,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExecutionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", "config")
        return cls(**data)


# ----------------------------------------------------------------------------
# Entries and messages
# ----------------------------------------------------------------------------

def find_entries(payload: Any) -> Tuple["Entry", ...]:
    """Entries directly contained in a payload (not the entries nested inside them)."""
    found: List[Entry] = []
    stack = [payload]
    while stack:
        item = stack.pop()
        if isinstance(item, Entry):
            found.append(item)
        elif isinstance(item, (tuple, list)):
            stack.extend(reversed(item))
        elif isinstance(item, (frozenset, set)):
            stack.extend(sorted(item, key=canonical, reverse=True))
        elif isinstance(item, dict):
            stack.extend(item.values())
    return tuple(found)


class Entry:
    """Base class for message entries; identity is the digest of the canonical form."""

    kind: ClassVar[str] = "general"

    @property
    def signer(self) -> Optional[str]:
        return None

    def canonical_form(self) -> str:
        raise NotImplementedError

    def children(self) -> Tuple["Entry", ...]:
        return ()

    @cached_property
    def digest(self) -> str:
        return digest_text(self.canonical_form())

    def walk(self) -> Iterator["Entry"]:
        """Every entry nested below this one, each yielded once."""
        seen = set()
        stack = list(self.children())
        while stack:
            entry = stack.pop()
            if entry.digest in seen:
                continue
            seen.add(entry.digest)
            yield entry
            stack.extend(entry.children())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Entry) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)


@dataclass(frozen=True, eq=False)
class GeneralEntry(Entry):
    payload: Any

    kind: ClassVar[str] = "general"

    def canonical_form(self) -> str:
        return "G" + canonical(self.payload)

    def children(self) -> Tuple[Entry, ...]:
        return find_entries(self.payload)


@dataclass(frozen=True, eq=False)
class SignedEntry(Entry):
    identifier: str
    payload: Any

    kind: ClassVar[str] = "signed"

    @property
    def signer(self) -> Optional[str]:
        return self.identifier

    def canonical_form(self) -> str:
        return "S" + canonical((self.identifier, self.payload))

    def children(self) -> Tuple[Entry, ...]:
        return find_entries(self.payload)


@dataclass(frozen=True, eq=False)
class OracleEntry(Entry):
    oracle_id: str
    payload: Any

    kind: ClassVar[str] = "oracle"

    def canonical_form(self) -> str:
        return "O" + canonical((self.oracle_id, self.payload))

    def children(self) -> Tuple[Entry, ...]:
        return find_entries(self.payload)


@dataclass(frozen=True, eq=False)
class TransactionEntry(Entry):
    tx: Any

    kind: ClassVar[str] = "transaction"

    def canonical_form(self) -> str:
        return "X" + self.tx.canonical_form()


# Distinguished null response of the ephemeral-key oracle; general-typed so it
# can never pass for an oracle-typed signature.
NULL_RESPONSE = GeneralEntry("null-response")


@dataclass(frozen=True, eq=False)
class Message:
    """A disseminated message: an ordered tuple of entries."""

    entries: Tuple[Entry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def of(cls, *entries: Entry) -> "Message":
        return cls(tuple(entries))

    @cached_property
    def digest(self) -> str:
        return digest_text("M" + canonical(self.entries))

    def walk(self) -> Iterator[Entry]:
        """Top-level entries followed by everything nested inside them."""
        seen = set()
        for entry in self.entries:
            if entry.digest not in seen:
                seen.add(entry.digest)
                yield entry
            for nested in entry.walk():
                if nested.digest not in seen:
                    seen.add(nested.digest)
                    yield nested

    def transactions(self) -> List[Any]:
        return [entry.tx for entry in self.walk() if isinstance(entry, TransactionEntry)]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Message) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)

    def __len__(self) -> int:
        return len(self.entries)


# ----------------------------------------------------------------------------
# Players
# ----------------------------------------------------------------------------

@dataclass
class Player:
    player_id: str
    identifiers: FrozenSet[str]
    byzantine: bool = False
    joined_at: int = 1
    labels: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        self.identifiers = frozenset(self.identifiers)
        self.labels = frozenset(self.labels)
        if not self.identifiers:
            raise ConfigurationError(f"player {self.player_id} needs at least one identifier", "players")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "player_id": self.player_id,
            "identifiers": sorted(self.identifiers),
            "byzantine": self.byzantine,
            "joined_at": self.joined_at,
            "labels": sorted(self.labels),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Player":
        return cls(
            player_id=data["player_id"],
            identifiers=frozenset(data["identifiers"]),
            byzantine=bool(data.get("byzantine", False)),
            joined_at=int(data.get("joined_at", 1)),
            labels=frozenset(data.get("labels", ())),
        )


class Roster:
    """Players of an execution, indexed by player id and by identifier."""

    def __init__(self, players: Iterable[Player] = ()):
        self.players: Dict[str, Player] = {}
        self._owner: Dict[str, str] = {}
        for player in players:
            self.add(player)

    def add(self, player: Player) -> None:
        if player.player_id in self.players:
            raise ConfigurationError(f"duplicate player id {player.player_id}", "players")
        clash = [i for i in player.identifiers if i in self._owner]
        if clash:
            raise ConfigurationError(
                f"identifiers {sorted(clash)} of {player.player_id} already belong to another player", "players"
            )
        self.players[player.player_id] = player
        for identifier in player.identifiers:
            self._owner[identifier] = player.player_id

    def __contains__(self, player_id: str) -> bool:
        return player_id in self.players

    def __getitem__(self, player_id: str) -> Player:
        return self.players[player_id]

    def __iter__(self) -> Iterator[Player]:
        return iter(self.players[pid] for pid in sorted(self.players))

    def __len__(self) -> int:
        return len(self.players)

    def ids(self) -> List[str]:
        return sorted(self.players)

    def owner_of(self, identifier: str) -> Optional[str]:
        return self._owner.get(identifier)

    def honest(self) -> List[Player]:
        return [p for p in self if not p.byzantine]

    def byzantine(self) -> List[Player]:
        return [p for p in self if p.byzantine]

    def honest_identifiers(self) -> FrozenSet[str]:
        return frozenset(i for p in self.honest() for i in p.identifiers)

    def byzantine_identifiers(self) -> FrozenSet[str]:
        return frozenset(i for p in self.byzantine() for i in p.identifiers)

    def with_label(self, label: str) -> List[Player]:
        return [p for p in self if label in p.labels]

    def to_list(self) -> List[Dict[str, Any]]:
        return [p.to_dict() for p in self]

    @classmethod
    def from_list(cls, rows: Iterable[Dict[str, Any]]) -> "Roster":
        return cls(Player.from_dict(row) for row in rows)
