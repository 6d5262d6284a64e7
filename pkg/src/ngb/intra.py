"""In-process topic channels: payload handles move between nodes without serialization."""

from __future__ import annotations

import itertools
import threading
import time
from collections import deque
from typing import Callable, List, Optional

from .core import MessageEnvelope, Payload, QoSProfile, Reliability, TopicName, validate_topic_name
from .errors import BackpressureTimeout

DEFAULT_BACKPRESSURE_TIMEOUT = 1.0


class MessageQueue:
    """Bounded FIFO governed by a QoS profile.

    BEST_EFFORT keeps the newest ``history_depth`` items and evicts the oldest on
    overflow. RELIABLE blocks the producer until a slot frees up or ``timeout`` elapses.
    """

    def __init__(self, qos: QoSProfile, timeout: float = DEFAULT_BACKPRESSURE_TIMEOUT):
        self.qos = qos
        self.timeout = timeout
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._listeners: List[Callable[[], None]] = []
        self.evicted = 0
        self.closed = False

    def add_listener(self, fn: Callable[[], None]) -> None:
        """``fn`` is called (outside the queue lock) after every successful put."""
        self._listeners.append(fn)

    def put(self, item, timeout: Optional[float] = None) -> bool:
        """Enqueue ``item``. Returns True if an older item was evicted to make room."""
        depth = self.qos.history_depth
        evicted = False
        with self._cond:
            if self.qos.reliability is Reliability.BEST_EFFORT:
                if len(self._items) >= depth:
                    self._items.popleft()
                    self.evicted += 1
                    evicted = True
            else:
                limit = self.timeout if timeout is None else timeout
                deadline = time.monotonic() + limit
                while len(self._items) >= depth and not self.closed:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise BackpressureTimeout(f"queue full (depth {depth}) for {limit:.3f} s")
                    self._cond.wait(remaining)
            self._items.append(item)
        for fn in self._listeners:
            fn()
        return evicted

    def take(self):
        with self._cond:
            if not self._items:
                return None
            item = self._items.popleft()
            self._cond.notify_all()
            return item

    def close(self) -> None:
        """Release any producer blocked in :meth:`put`."""
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def __len__(self) -> int:
        return len(self._items)

    def snapshot(self) -> list:
        with self._cond:
            return list(self._items)


class IntraSubscription:
    def __init__(self, channel: "IntraChannel", queue: MessageQueue):
        self.channel = channel
        self.queue = queue

    def take(self) -> Optional[MessageEnvelope]:
        return self.queue.take()

    def __len__(self) -> int:
        return len(self.queue)


class IntraChannel:
    def __init__(
        self,
        topic,
        qos: QoSProfile,
        domain: int = 0,
        timeout: float = DEFAULT_BACKPRESSURE_TIMEOUT,
    ):
        self.topic: TopicName = topic if isinstance(topic, TopicName) else validate_topic_name(topic)
        self.qos = qos
        self.domain = int(domain)
        self.timeout = timeout
        self._subs: List[IntraSubscription] = []
        self._lock = threading.Lock()
        self._seq = itertools.count()

    def subscribe(self) -> IntraSubscription:
        sub = IntraSubscription(self, MessageQueue(self.qos, self.timeout))
        with self._lock:
            self._subs.append(sub)
        return sub

    @property
    def subscriber_count(self) -> int:
        return len(self._subs)

    def publish_unique(self, msg: Payload, seq: Optional[int] = None) -> Optional[MessageEnvelope]:
        """Hand ``msg`` to every subscriber without copying it.

        The caller gives up ownership: with one subscriber it receives this exact object,
        with several they all share it (payloads are immutable). With no subscriber the
        message is dropped and None returned.
        """
        with self._lock:
            subs = list(self._subs)
            if seq is None:
                seq = next(self._seq)
        if not subs:
            return None
        env = MessageEnvelope(str(self.topic), seq, self.domain, msg)
        deadline = time.monotonic() + self.timeout
        for sub in subs:
            sub.queue.put(env, timeout=max(0.0, deadline - time.monotonic()))
        return env

    def close(self) -> None:
        for sub in self._subs:
            sub.queue.close()


def publish_unique(ch: IntraChannel, msg: Payload) -> Optional[MessageEnvelope]:
    return ch.publish_unique(msg)


def take(sub: IntraSubscription) -> Optional[MessageEnvelope]:
    """Next envelope in FIFO order, or None when the queue is empty."""
    return sub.take()
