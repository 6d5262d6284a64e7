"""Nodes, executors and containers.

A :class:`Container` owns a set of nodes and one executor. When it is wired, each
topic with both ends inside the container is routed either through an in-process
:class:`~ngb.intra.IntraChannel` (only for IPC-enabled topics in composed-ipc mode)
or through the loopback transports, exactly as if the peer lived in another process.
"""

from __future__ import annotations

import enum
import itertools
import logging
import threading
import time
from typing import Callable, Dict, List, Optional, Sequence

from .core import PAYLOAD_TYPES, MessageEnvelope, Payload, QoSProfile, reliable_qos
from .errors import ConfigInvalidError, ConnectionLostError, NGBError
from .inter import Endpoint, Sender, port_for
from .intra import IntraChannel, MessageQueue
from .topology import ExecutorKind, Mode, Topology, default_threads
from .wire import encode_payload, frame, tag_for

log = logging.getLogger(__name__)

_MAX_WAIT = 0.1


class Route(str, enum.Enum):
    INTRA = "INTRA"
    INTER = "INTER"


# --------------------------------------------------------------------------- entities


class Publisher:
    def __init__(self, node: "Node", topic: str, msg_type: type):
        self.node = node
        self.topic = topic
        self.msg_type = msg_type
        self.channel: Optional[IntraChannel] = None
        self.senders: List[Sender] = []
        self.domain = 0
        self.published = 0
        self.lost_connections = 0
        self._seq = itertools.count()
        self._lock = threading.Lock()

    def publish(self, msg: Payload) -> int:
        """Publish ``msg`` and return its sequence number. Ownership passes to the middleware."""
        if not isinstance(msg, self.msg_type):
            raise TypeError(f"{self.topic} carries {self.msg_type.__name__}, got {type(msg).__name__}")
        with self._lock:
            seq = next(self._seq)
            self.published += 1
        if self.channel is not None:
            self.channel.publish_unique(msg, seq)
        if self.senders:
            data = frame(self.domain, self.topic, seq, tag_for(msg), encode_payload(msg))
            for s in self.senders:
                try:
                    s.send_frame(data)
                except ConnectionLostError as exc:
                    self.lost_connections += 1
                    log.info("%s: peer on port %d went away: %s", self.topic, s.port, exc)
        return seq


class Subscription:
    def __init__(self, node: "Node", topic: str, msg_type: type, callback: Callable[[MessageEnvelope], None]):
        self.node = node
        self.topic = topic
        self.msg_type = msg_type
        self.callback = callback
        self.queue: Optional[MessageQueue] = None
        self.busy = False
        self.calls = 0
        self.reentry_violations = 0
        self._active = 0
        self._guard = threading.Lock()

    def ready(self, now: float) -> bool:
        return self.queue is not None and len(self.queue) > 0

    def claim(self, now: float) -> None:
        pass

    def execute(self) -> None:
        env = self.queue.take()
        if env is None:
            return
        with self._guard:
            self._active += 1
            if self._active > 1:
                self.reentry_violations += 1
        try:
            self.calls += 1
            self.callback(env)
        finally:
            with self._guard:
                self._active -= 1


class Timer:
    def __init__(self, node: "Node", period: float, callback: Callable[[], None]):
        if period < 0:
            raise ValueError("timer period must be >= 0")
        self.node = node
        self.period = period
        self.callback = callback
        self.next_due = time.monotonic() + period
        self.busy = False
        self.calls = 0

    def ready(self, now: float) -> bool:
        return now >= self.next_due

    def claim(self, now: float) -> None:
        self.next_due += self.period
        if self.next_due < now:
            # fell behind: skip missed ticks instead of bursting
            self.next_due = now + self.period

    def execute(self) -> None:
        self.calls += 1
        self.callback()


class Node:
    def __init__(self, name: str):
        self.name = name
        self.publishers: List[Publisher] = []
        self.subscriptions: List[Subscription] = []
        self.timers: List[Timer] = []
        self.container: Optional["Container"] = None
        self._start_hooks: List[Callable[[], None]] = []
        self._shutdown_hooks: List[Callable[[], None]] = []

    def create_publisher(self, topic: str, msg_type: type) -> Publisher:
        pub = Publisher(self, topic, msg_type)
        self.publishers.append(pub)
        return pub

    def create_subscription(self, topic: str, msg_type: type, callback) -> Subscription:
        sub = Subscription(self, topic, msg_type, callback)
        self.subscriptions.append(sub)
        return sub

    def create_timer(self, period: float, callback) -> Timer:
        t = Timer(self, period, callback)
        self.timers.append(t)
        return t

    def on_start(self, fn: Callable[[], None]) -> None:
        """``fn`` runs once the container is wired, before the first callback."""
        self._start_hooks.append(fn)

    def on_shutdown(self, fn: Callable[[], None]) -> None:
        self._shutdown_hooks.append(fn)

    def request_shutdown(self, status: int = 0) -> None:
        if self.container is not None:
            self.container.shutdown(status)

    def entities(self) -> list:
        return [*self.timers, *self.subscriptions]


# --------------------------------------------------------------------------- executor


class Executor:
    """Fair round-robin scheduler over timers and subscriptions.

    With one thread, entities are served strictly in rotation: between two servings of
    a ready entity every other ready entity is served once. With ``n`` threads up to
    ``n`` callbacks run at once, but an entity is never handed to two threads at the
    same time.
    """

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise ValueError("executor needs at least one thread")
        self.threads = threads
        self.entities: list = []
        self.error: Optional[BaseException] = None
        self._cond = threading.Condition()
        self._stop = False
        self._cursor = 0

    def add(self, entity) -> None:
        with self._cond:
            self.entities.append(entity)
            self._cond.notify_all()

    def notify(self) -> None:
        with self._cond:
            self._cond.notify()

    def stop(self) -> None:
        with self._cond:
            self._stop = True
            self._cond.notify_all()

    @property
    def stopped(self) -> bool:
        return self._stop

    def _pick(self):
        now = time.monotonic()
        n = len(self.entities)
        wait = _MAX_WAIT
        for i in range(n):
            idx = (self._cursor + i) % n
            ent = self.entities[idx]
            if ent.busy:
                continue
            if ent.ready(now):
                self._cursor = idx + 1
                ent.claim(now)
                return ent, 0.0
            if isinstance(ent, Timer):
                wait = min(wait, ent.next_due - now)
        return None, max(wait, 0.0)

    def _worker(self) -> None:
        while True:
            with self._cond:
                while True:
                    if self._stop:
                        return
                    ent, wait = self._pick()
                    if ent is not None:
                        ent.busy = True
                        break
                    self._cond.wait(wait)
            try:
                ent.execute()
            except BaseException as exc:  # noqa: B902 - any callback failure ends the container
                log.error("callback in node %s failed: %r", getattr(ent.node, "name", "?"), exc)
                with self._cond:
                    if self.error is None:
                        self.error = exc
                    self._stop = True
            finally:
                with self._cond:
                    ent.busy = False
                    self._cond.notify_all()

    def spin(self) -> None:
        if self.threads == 1:
            self._worker()
        else:
            workers = [threading.Thread(target=self._worker, name=f"executor-{i}", daemon=True) for i in range(self.threads)]
            for w in workers:
                w.start()
            for w in workers:
                w.join()
        if self.error is not None:
            raise self.error


# --------------------------------------------------------------------------- container


class Container:
    def __init__(
        self,
        nodes: Sequence[Node],
        executor: ExecutorKind = ExecutorKind.MULTI_THREADED,
        threads: Optional[int] = None,
        ipc_topics: Sequence[str] = (),
        mode: Mode = Mode.COMPOSED_IPC,
        topology: Optional[Topology] = None,
    ):
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise ConfigInvalidError(f"duplicate node names in {names}")
        self.nodes = list(nodes)
        self.executor_kind = ExecutorKind(executor)
        if self.executor_kind is ExecutorKind.SINGLE_THREADED:
            self.threads = 1
        else:
            self.threads = threads or default_threads()
        self.ipc_topics = set(ipc_topics)
        self.mode = Mode(mode)
        self.topology = topology
        self.domain = topology.domain if topology is not None else 0
        self.exit_status = 0
        self.channels: Dict[str, IntraChannel] = {}
        self.endpoints: Dict[str, Endpoint] = {}
        self._executor = Executor(self.threads)
        self._readers: List[threading.Thread] = []
        self._wired = False
        self._closed = False
        self._shutdown_lock = threading.Lock()
        self._shutdown_requested = False
        for n in self.nodes:
            n.container = self

    # ------------------------------------------------------------ routing

    def route(self, topic: str) -> Route:
        if self.mode is Mode.COMPOSED_IPC and topic in self.ipc_topics:
            return Route.INTRA
        return Route.INTER

    def _qos(self, topic: str) -> QoSProfile:
        if self.topology is not None:
            return self.topology.topic(topic).qos
        return reliable_qos()

    def _timeout(self) -> float:
        return self.topology.backpressure_timeout_s if self.topology is not None else 1.0

    def _check_type(self, topic: str, msg_type: type) -> None:
        if self.topology is None:
            return
        declared = PAYLOAD_TYPES[self.topology.topic(topic).type]
        if declared is not msg_type:
            raise ConfigInvalidError(f"{topic} is declared as {declared.__name__}, node uses {msg_type.__name__}")

    def wire(self) -> None:
        if self._wired:
            return
        self._wired = True
        pubs = [p for n in self.nodes for p in n.publishers]
        subs = [s for n in self.nodes for s in n.subscriptions]
        for p in pubs + subs:
            self._check_type(p.topic, p.msg_type)
        topics = {p.topic for p in pubs} | {s.topic for s in subs}
        for topic in sorted(topics):
            t_pubs = [p for p in pubs if p.topic == topic]
            t_subs = [s for s in subs if s.topic == topic]
            if t_pubs and t_subs and self.route(topic) is Route.INTRA:
                ch = IntraChannel(topic, self._qos(topic), self.domain, self._timeout())
                self.channels[topic] = ch
                for s in t_subs:
                    s.queue = ch.subscribe().queue
                for p in t_pubs:
                    p.channel = ch
                continue
            if self.topology is None:
                if t_pubs and t_subs:
                    raise ConfigInvalidError(f"{topic} needs a topology to be routed between processes")
                # lone endpoint without a topology: nothing to connect to
                for s in t_subs:
                    s.queue = MessageQueue(self._qos(topic), self._timeout())
                continue
            spec = self.topology.topic(topic)
            for p in t_pubs:
                p.domain = self.domain
                domains = [self.domain] + [d for d in self.topology.shared_segment_domains if d != self.domain]
                p.senders = [Sender(self.domain, topic, spec.transport, port_for(d, spec.slot)) for d in domains]
            if t_subs:
                ep = Endpoint(self.domain, topic, spec.transport, slot=spec.slot).open()
                self.endpoints[topic] = ep
                for s in t_subs:
                    s.queue = MessageQueue(spec.qos, self._timeout())
        for n in self.nodes:
            for ent in n.entities():
                self._executor.add(ent)
        for s in subs:
            s.queue.add_listener(self._executor.notify)

    def _reader(self, topic: str, ep: Endpoint, subs: List[Subscription]) -> None:
        while not self._executor.stopped:
            got = ep.recv_message(timeout=_MAX_WAIT)
            if got is None:
                continue
            fr, msg = got
            env = MessageEnvelope(topic, fr.seq, fr.domain_id, msg)
            for s in subs:
                while not self._executor.stopped:
                    try:
                        if s.queue.put(env, timeout=_MAX_WAIT):
                            ep.counters.incr("queue_full")
                        break
                    except NGBError:
                        continue

    # ------------------------------------------------------------ lifecycle

    def spin(self) -> None:
        """Run callbacks until :meth:`shutdown`. A failing callback stops the container and is re-raised."""
        self.wire()
        for topic, ep in self.endpoints.items():
            subs = [s for n in self.nodes for s in n.subscriptions if s.topic == topic]
            th = threading.Thread(target=self._reader, args=(topic, ep, subs), name=f"reader{topic}", daemon=True)
            th.start()
            self._readers.append(th)
        try:
            for n in self.nodes:
                for hook in n._start_hooks:
                    hook()
            self._executor.spin()
        except BaseException:
            self.exit_status = self.exit_status or 3
            raise
        finally:
            self._executor.stop()
            self.close()

    def shutdown(self, status: int = 0) -> None:
        """Ask the container to stop. Idempotent; the first non-zero status wins."""
        with self._shutdown_lock:
            if status and not self.exit_status:
                self.exit_status = status
            self._shutdown_requested = True
        self._executor.stop()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for n in self.nodes:
            for hook in n._shutdown_hooks:
                try:
                    hook()
                except Exception:
                    log.exception("shutdown hook of %s failed", n.name)
        for s in (s for n in self.nodes for s in n.subscriptions):
            if s.queue is not None:
                s.queue.close()
        for th in self._readers:
            th.join(timeout=2.0)
        for ep in self.endpoints.values():
            ep.close()
        for p in (p for n in self.nodes for p in n.publishers):
            for s in p.senders:
                s.close()

    @property
    def error(self) -> Optional[BaseException]:
        return self._executor.error

    def counters(self) -> dict:
        return {
            "endpoints": {t: ep.counters.as_dict() for t, ep in self.endpoints.items()},
            "publishers": {
                f"{p.node.name}:{p.topic}": {
                    "published": p.published,
                    "unmatched": sum(s.unmatched for s in p.senders),
                    "lost_connections": p.lost_connections,
                }
                for n in self.nodes
                for p in n.publishers
            },
            "evicted": {
                f"{s.node.name}:{s.topic}": s.queue.evicted for n in self.nodes for s in n.subscriptions if s.queue is not None
            },
            "reentry_violations": sum(s.reentry_violations for n in self.nodes for s in n.subscriptions),
        }


def route(container: Container, topic: str) -> Route:
    return container.route(topic)


def spin(container: Container) -> None:
    container.spin()
