"""Seeded message transport: bounded-delay and Bernoulli-drop channels.

Every (edge, sender, receiver, message kind) tuple gets its own RNG
stream, derived from the master seed by hashing the key string
``"{seed}|{src}->{dst}|{head}<-{tail}|{kind}"`` with SHA-256 and seeding
``random.Random`` with the first 8 bytes of the digest.  Streams are
consumed strictly in send order on their own link, so a full replay with
the same seed reproduces every delay draw and drop decision bit for bit,
and retuning one link never shifts the draws of another.
"""

from __future__ import annotations

import hashlib
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Mapping

from flowbal.graph import Edge

Direction = tuple[int, int]  # (src, dst) of a transmission


class NetworkError(ValueError):
    """Invalid channel configuration."""


@dataclass(frozen=True)
class Message:
    """One protocol payload in transit.

    kind is "change" for unit-delta exchanges, "desired" or "new" for the
    absolute-flow exchanges; payload is always a single integer.
    """

    src: int
    dst: int
    edge: Edge
    kind: str
    payload: int
    sent_at: int


def _derive_stream(seed: int, src: int, dst: int, edge: Edge, kind: str) -> random.Random:
    key = f"{seed}|{src}->{dst}|{edge[0]}<-{edge[1]}|{kind}"
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class _StreamPool:
    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[tuple[int, int, Edge, str], random.Random] = {}

    def for_message(self, m: Message) -> random.Random:
        key = (m.src, m.dst, m.edge, m.kind)
        stream = self._streams.get(key)
        if stream is None:
            stream = _derive_stream(self.seed, m.src, m.dst, m.edge, m.kind)
            self._streams[key] = stream
        return stream


class DelayChannel:
    """Delivers every message after an integer delay in [low, high] <= bound.

    ``bound`` is the uniform per-direction delay cap; ``per_direction``
    overrides it for individual (src, dst) pairs.  The draw range defaults
    to the full [0, bound] and can be narrowed with ``delay_range``.  A
    ``schedule`` callable (msg, k) -> delay replaces the random draw
    entirely, for tests that need a handcrafted delivery pattern.
    """

    kind = "delay"

    def __init__(
        self,
        bound: int,
        *,
        seed: int = 0,
        delay_range: tuple[int, int] | None = None,
        per_direction: Mapping[Direction, int] | None = None,
        schedule: Callable[[Message, int], int] | None = None,
    ):
        if bound < 0:
            raise NetworkError(f"delay bound must be nonnegative, got {bound}")
        self.bound = int(bound)
        self.per_direction = dict(per_direction or {})
        for d, v in self.per_direction.items():
            if v < 0:
                raise NetworkError(f"delay bound for {d} must be nonnegative, got {v}")
        if delay_range is not None:
            lo, hi = delay_range
            cap = max([self.bound, *self.per_direction.values()])
            if not 0 <= lo <= hi <= cap:
                raise NetworkError(f"delay range {delay_range} outside [0, {cap}]")
        self.delay_range = delay_range
        self.schedule = schedule
        self._pool = _StreamPool(seed)

    def bound_for(self, src: int, dst: int) -> int:
        return self.per_direction.get((src, dst), self.bound)

    def max_bound(self) -> int:
        return max([self.bound, *self.per_direction.values()])

    def delay_for(self, m: Message, k: int) -> int:
        cap = self.bound_for(m.src, m.dst)
        if self.schedule is not None:
            tau = int(self.schedule(m, k))
            if not 0 <= tau <= cap:
                raise NetworkError(f"scheduled delay {tau} outside [0, {cap}]")
            return tau
        if self.delay_range is None:
            lo, hi = 0, cap
        else:
            lo, hi = min(self.delay_range[0], cap), min(self.delay_range[1], cap)
        return self._pool.for_message(m).randint(lo, hi)


class DropChannel:
    """Delivers within the sending iteration with probability 1 - q, else never."""

    kind = "drop"

    def __init__(
        self,
        q: float,
        *,
        seed: int = 0,
        per_direction: Mapping[Direction, float] | None = None,
    ):
        if not 0.0 <= q < 1.0:
            raise NetworkError(f"drop probability must be in [0, 1), got {q}")
        self.q = float(q)
        self.per_direction = dict(per_direction or {})
        for d, v in self.per_direction.items():
            if not 0.0 <= v < 1.0:
                raise NetworkError(f"drop probability for {d} must be in [0, 1), got {v}")
        self._pool = _StreamPool(seed)

    def q_for(self, src: int, dst: int) -> float:
        return self.per_direction.get((src, dst), self.q)

    def dropped(self, m: Message) -> bool:
        q = self.q_for(m.src, m.dst)
        draw = self._pool.for_message(m).random()
        return draw < q


class ComposedChannel:
    """Drop first, then delay; for exploratory runs outside the pure models."""

    kind = "mixed"

    def __init__(self, drop: DropChannel, delay: DelayChannel):
        self.drop = drop
        self.delay = delay

    def max_bound(self) -> int:
        return self.delay.max_bound()


Channel = DelayChannel | DropChannel | ComposedChannel


def send(m: Message, channel: Channel, k: int) -> int | None:
    """Route one message; returns its delivery step, or None when dropped."""
    if isinstance(channel, DropChannel):
        return None if channel.dropped(m) else k
    if isinstance(channel, DelayChannel):
        return k + channel.delay_for(m, k)
    if isinstance(channel, ComposedChannel):
        if channel.drop.dropped(m):
            return None
        return k + channel.delay.delay_for(m, k)
    raise NetworkError(f"unknown channel {channel!r}")


class InFlightQueue:
    """Messages scheduled for future delivery, keyed by delivery step."""

    def __init__(self) -> None:
        self._by_step: dict[int, list[Message]] = defaultdict(list)
        self._pending = 0

    def schedule(self, step: int, m: Message) -> None:
        self._by_step[step].append(m)
        self._pending += 1

    def arrivals(self, k: int) -> list[Message]:
        """Messages landing at step k; non-destructive."""
        return list(self._by_step.get(k, ()))

    def pop_step(self, k: int) -> list[Message]:
        msgs = self._by_step.pop(k, [])
        self._pending -= len(msgs)
        return msgs

    def pending(self) -> int:
        return self._pending


def collect_changes(dst: int, edge: Edge, k: int, queue: InFlightQueue) -> int:
    """Sum of change payloads landing at step k for one edge at one node.

    Aggregation is a plain sum, so reordering in transit is harmless; with
    nothing arriving the neighbor contribution is zero.
    """
    return sum(m.payload for m in queue.arrivals(k) if m.dst == dst and m.edge == edge)


@dataclass(frozen=True)
class ChannelConfig:
    """Scenario-level channel description; builds the live channel per run.

    kind "delay" uses tau (+ optional delay_range and per-direction taus),
    kind "drop" uses q (+ per-direction overrides), kind "mixed" composes
    both.  Kept declarative so scenarios stay serializable and the RNG
    seed can be injected at run time.
    """

    kind: str
    tau: int = 0
    q: float = 0.0
    delay_range: tuple[int, int] | None = None
    tau_overrides: tuple[tuple[Direction, int], ...] = ()
    q_overrides: tuple[tuple[Direction, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("delay", "drop", "mixed"):
            raise NetworkError(f"unknown channel kind {self.kind!r}")
        if self.kind == "delay" and (self.q or self.q_overrides):
            raise NetworkError("delay channel takes no drop probability")
        if self.kind == "drop" and (self.tau or self.delay_range or self.tau_overrides):
            raise NetworkError("drop channel takes no delay parameters")

    def max_delay(self) -> int:
        if self.kind == "drop":
            return 0
        return max([self.tau, *(v for _, v in self.tau_overrides)])

    def max_drop(self) -> float:
        if self.kind == "delay":
            return 0.0
        return max([self.q, *(v for _, v in self.q_overrides)])

    def build(self, seed: int) -> Channel:
        delay = None
        drop = None
        if self.kind in ("delay", "mixed"):
            delay = DelayChannel(
                self.tau,
                seed=seed,
                delay_range=self.delay_range,
                per_direction=dict(self.tau_overrides),
            )
        if self.kind in ("drop", "mixed"):
            drop = DropChannel(self.q, seed=seed, per_direction=dict(self.q_overrides))
        if self.kind == "delay":
            return delay
        if self.kind == "drop":
            return drop
        return ComposedChannel(drop, delay)
