"""
Timing - Activity Schedules, Delivery Scripts and Timing-Rule Validation

- ActivitySchedule: per-player inactive / waiting / active status at each timeslot
- drifting_waits / check_clock_drift: clock-drift (kappa) accounting
- TimingScript implementations that decide delivery timeslots for disseminations
- TimingRule: the realized (sender, receiver, message, t) -> t' map of an execution
- validate_timing_rule / find_timing_violation: (partially) synchronous bounds
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Set, Tuple

import numpy as np

from .model import Activity, ExecutionConfig, Message, keyed_int, keyed_uniform

logger = logging.getLogger(__name__)


class ActivitySchedule:
    """Status of every player at every timeslot, inactive before joining."""

    def __init__(self, default: Activity = Activity.ACTIVE):
        self.default = default
        self._joins: Dict[str, int] = {}
        self._leaves: Dict[str, int] = {}
        self._overrides: Dict[str, Dict[int, Activity]] = {}
        self._windows: Dict[str, List[Tuple[int, int, Activity]]] = {}

    def join(self, player: str, t: int) -> "ActivitySchedule":
        self._joins[player] = t
        return self

    def leave(self, player: str, t: int) -> "ActivitySchedule":
        """Player is inactive from timeslot t on."""
        self._leaves[player] = t
        return self

    def set(self, player: str, t: int, status: Activity) -> "ActivitySchedule":
        self._overrides.setdefault(player, {})[t] = Activity(status)
        return self

    def window(self, player: str, start: int, end: int, status: Activity) -> "ActivitySchedule":
        """Status for timeslots start..end inclusive; later windows win."""
        self._windows.setdefault(player, []).append((start, end, Activity(status)))
        return self

    def add_waits(self, player: str, timeslots: Iterable[int]) -> "ActivitySchedule":
        for t in timeslots:
            self.set(player, t, Activity.WAITING)
        return self

    def joined_at(self, player: str) -> int:
        return self._joins.get(player, 1)

    def status(self, player: str, t: int) -> Activity:
        if t < self._joins.get(player, 1):
            return Activity.INACTIVE
        leave = self._leaves.get(player)
        if leave is not None and t >= leave:
            return Activity.INACTIVE
        override = self._overrides.get(player, {}).get(t)
        if override is not None:
            return override
        for start, end, status in reversed(self._windows.get(player, ())):
            if start <= t <= end:
                return status
        return self.default

    def is_active(self, player: str, t: int) -> bool:
        """Active in the model's sense; waiting players count as active."""
        return self.status(player, t) is not Activity.INACTIVE

    def is_ready(self, player: str, t: int) -> bool:
        """Active and not waiting: the player steps at t."""
        return self.status(player, t) is Activity.ACTIVE

    def first_ready(self, player: str, start: int, end: int) -> Optional[int]:
        for t in range(max(start, 1), end + 1):
            if self.is_ready(player, t):
                return t
        return None

    def first_active(self, player: str, start: int, end: int) -> Optional[int]:
        for t in range(max(start, 1), end + 1):
            if self.is_active(player, t):
                return t
        return None


def _allowed_waits(lengths: np.ndarray, kappa: Fraction) -> np.ndarray:
    return lengths - (lengths * kappa.numerator) // kappa.denominator


def drifting_waits(seed: int, player: str, kappa: Fraction, start: int, end: int,
                   wait_probability: float = 0.5) -> Set[int]:
    """
    Seeded waiting timeslots that respect the clock-drift bound.

    A wait is placed at t only if every interval ending at t keeps at least
    floor(kappa * length) ready timeslots; later ready slots never break an
    interval, so the greedy choice is globally sound.
    """
    waits: Set[int] = set()
    if kappa >= 1 or end < start:
        return waits
    horizon = end - start + 1
    wait_flags = np.zeros(horizon, dtype=np.int64)
    for index in range(horizon):
        t = start + index
        if keyed_uniform(seed, "wait", player, t) >= wait_probability:
            continue
        wait_flags[index] = 1
        counts = np.cumsum(wait_flags[: index + 1][::-1])
        lengths = np.arange(1, index + 2, dtype=np.int64)
        if np.all(counts <= _allowed_waits(lengths, kappa)):
            waits.add(t)
        else:
            wait_flags[index] = 0
    return waits


def check_clock_drift(schedule: ActivitySchedule, player: str, kappa: Fraction,
                      start: int, end: int) -> Optional[Tuple[int, int]]:
    """First interval (s, t] over which the player is active throughout but ready too rarely."""
    last_inactive = start - 1
    flags: List[int] = []
    for t in range(start, end + 1):
        status = schedule.status(player, t)
        flags.append(1 if status is Activity.WAITING else 0)
        if status is Activity.INACTIVE:
            last_inactive = t
            continue
        span = t - last_inactive
        window = np.array(flags[len(flags) - span:], dtype=np.int64)
        counts = np.cumsum(window[::-1])
        lengths = np.arange(1, span + 1, dtype=np.int64)
        bad = np.nonzero(counts > _allowed_waits(lengths, kappa))[0]
        if bad.size:
            length = int(bad[0]) + 1
            return (t - length, t)
    return None


# ----------------------------------------------------------------------------
# Delivery scripts
# ----------------------------------------------------------------------------

class TimingScript(ABC):
    """Decides when a dissemination reaches a receiver (None: not before the horizon)."""

    @abstractmethod
    def deliver(self, sender: str, receiver: str, message: Message, sent_at: int,
                hint: Any = None) -> Optional[int]:
        ...


class FixedDelay(TimingScript):
    def __init__(self, delay: int = 1):
        if delay < 1:
            raise ValueError("delay must be at least one timeslot")
        self.delay = delay

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        return sent_at + self.delay


class RandomDelay(TimingScript):
    """Seeded uniform delay in [1, delta] per (sender, receiver, message, t)."""

    def __init__(self, seed: int, delta: int):
        self.seed = seed
        self.delta = delta

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        return sent_at + keyed_int(self.seed, 1, self.delta, "delay", sender, receiver, message.digest, sent_at)


class PartialSynchrony(TimingScript):
    """Seeded delays: anywhere up to max(GST, t + delta) before GST, within delta after."""

    def __init__(self, cfg: ExecutionConfig):
        self.cfg = cfg

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        cfg = self.cfg
        parts = ("psync", sender, receiver, message.digest, sent_at)
        if sent_at < cfg.gst:
            latest = max(cfg.gst, sent_at + cfg.delta)
            return keyed_int(cfg.seed, sent_at + 1, latest, *parts)
        return sent_at + keyed_int(cfg.seed, 1, cfg.delta, *parts)


class Scripted(TimingScript):
    """Delivery decided by a scenario callable(sender, receiver, message, sent_at, hint)."""

    def __init__(self, rule: Callable[[str, str, Message, int, Any], Optional[int]], name: str = "scripted"):
        self.rule = rule
        self.name = name

    def deliver(self, sender, receiver, message, sent_at, hint=None):
        return self.rule(sender, receiver, message, sent_at, hint)


# ----------------------------------------------------------------------------
# Realized timing rule
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Delivery:
    sender: str
    receiver: str
    message_digest: str
    sent_at: int
    delivered_at: Optional[int]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sender": self.sender,
            "receiver": self.receiver,
            "message": self.message_digest,
            "sent": self.sent_at,
            "delivered": self.delivered_at,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Delivery":
        return cls(data["sender"], data["receiver"], data["message"], data["sent"], data["delivered"])


class TimingRule:
    """The partial map (sender, receiver, message, t) -> receive timeslot realized by a run."""

    def __init__(self, deliveries: Iterable[Delivery] = ()):
        self.deliveries: List[Delivery] = list(deliveries)

    def add(self, delivery: Delivery) -> None:
        self.deliveries.append(delivery)

    def __iter__(self) -> Iterator[Delivery]:
        return iter(self.deliveries)

    def __len__(self) -> int:
        return len(self.deliveries)

    def lookup(self, sender: str, receiver: str, message_digest: str, sent_at: int) -> Optional[int]:
        for d in self.deliveries:
            if (d.sender, d.receiver, d.message_digest, d.sent_at) == (sender, receiver, message_digest, sent_at):
                return d.delivered_at
        return None


def delivery_violates(delivery: Delivery, cfg: ExecutionConfig, schedule: ActivitySchedule,
                      horizon: int) -> bool:
    if delivery.delivered_at is not None and delivery.delivered_at <= delivery.sent_at:
        return True
    bound = cfg.delivery_bound(delivery.sent_at)
    ready = schedule.first_ready(delivery.receiver, bound, horizon)
    if ready is None:
        return False
    return delivery.delivered_at is None or delivery.delivered_at > ready


def find_timing_violation(deliveries: Iterable[Delivery], cfg: ExecutionConfig,
                          schedule: ActivitySchedule, horizon: Optional[int] = None) -> Optional[Delivery]:
    """First delivery that a ready receiver would get later than the bound allows."""
    end = horizon if horizon is not None else (cfg.duration or 0)
    for delivery in deliveries:
        if delivery_violates(delivery, cfg, schedule, end):
            return delivery
    return None


def validate_timing_rule(rule: TimingRule, cfg: ExecutionConfig, schedule: ActivitySchedule,
                         horizon: Optional[int] = None) -> bool:
    violation = find_timing_violation(rule, cfg, schedule, horizon)
    if violation is not None:
        logger.warning("timing rule violated by %s", violation.to_dict())
        return False
    return True
