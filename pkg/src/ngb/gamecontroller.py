"""GameController packets and the bridge that republishes them on ``/game_state``.

The packet is a frozen 24-byte subset of the league's referee broadcast (magic
``RGme``, version 12). It is not interoperable with the official tool; it carries just
enough for game phase, clock, kick-off and scores.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from typing import Callable, Optional, Union

from .core import GamePhase, GameState, TeamInfo
from .errors import BadEnumError, BadLengthError, BadMagicError, BadVersionError, BindFailedError
from .runtime import Node, Publisher
from .topology import NodeSpec, Topology

log = logging.getLogger(__name__)

GC_MAGIC = b"RGme"
GC_VERSION = 12
GC_PACKET_SIZE = 24
DEFAULT_GC_PORT = 3838

_PACKET = struct.Struct("<4sH6B2h8B")
assert _PACKET.size == GC_PACKET_SIZE


def encode_gc_packet(state: GameState) -> bytes:
    a, b = state.teams
    return _PACKET.pack(
        GC_MAGIC,
        GC_VERSION,
        state.packet_number,
        state.players_per_team,
        int(state.state),
        int(state.first_half),
        state.kickoff_team,
        state.secondary_state,
        state.secs_remaining,
        state.secondary_time,
        a.team_number, a.team_colour, a.score, a.penalty_shot,
        b.team_number, b.team_colour, b.score, b.penalty_shot,
    )


def parse_gc_packet(data: bytes) -> GameState:
    if len(data) != GC_PACKET_SIZE:
        raise BadLengthError(f"GameController packet must be {GC_PACKET_SIZE} bytes, got {len(data)}")
    v = _PACKET.unpack(data)
    if v[0] != GC_MAGIC:
        raise BadMagicError(f"expected {GC_MAGIC!r}, got {v[0]!r}")
    if v[1] != GC_VERSION:
        raise BadVersionError(f"expected version {GC_VERSION}, got {v[1]}")
    if v[4] > max(GamePhase):
        raise BadEnumError(f"game_state {v[4]} is not one of 0..{int(max(GamePhase))}")
    if v[5] > 1:
        raise BadEnumError(f"first_half {v[5]} is not 0 or 1")
    return GameState(
        packet_number=v[2],
        players_per_team=v[3],
        state=GamePhase(v[4]),
        first_half=bool(v[5]),
        kickoff_team=v[6],
        secondary_state=v[7],
        secs_remaining=v[8],
        secondary_time=v[9],
        teams=(TeamInfo(*v[10:14]), TeamInfo(*v[14:18])),
    )


def send_gc_packet(state: GameState, port: int = DEFAULT_GC_PORT, host: str = "127.0.0.1",
                   sock: Optional[socket.socket] = None) -> None:
    """Test double for the referee application: one datagram per call."""
    own = sock is None
    if own:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.sendto(encode_gc_packet(state), (host, port))
    finally:
        if own:
            sock.close()


class GameControllerBridge:
    """Listens for GameController datagrams on one thread and publishes every valid one.

    Duplicate packet numbers are published as-is. Invalid datagrams only bump
    :attr:`malformed`.
    """

    def __init__(self, listen_port: int, publisher: Union[Publisher, Callable[[GameState], object]],
                 host: str = ""):
        self.listen_port = listen_port
        self.host = host
        self._publish = publisher.publish if hasattr(publisher, "publish") else publisher
        self.published = 0
        self.malformed = 0
        self._sock: Optional[socket.socket] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def bind(self) -> "GameControllerBridge":
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.bind((self.host, self.listen_port))
        except OSError as exc:
            sock.close()
            raise BindFailedError(f"GameController port {self.listen_port}: {exc}") from exc
        sock.settimeout(0.1)
        self._sock = sock
        return self

    def handle(self, data: bytes) -> Optional[GameState]:
        try:
            state = parse_gc_packet(data)
        except ValueError as exc:
            self.malformed += 1
            log.debug("dropping GameController datagram: %s", exc)
            return None
        self._publish(state)
        self.published += 1
        return state

    def run(self) -> None:
        if self._sock is None:
            self.bind()
        try:
            while not self._stop.is_set():
                try:
                    data = self._sock.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    if self._stop.is_set():
                        break
                    raise
                self.handle(data)
        finally:
            self._sock.close()

    def start(self) -> "GameControllerBridge":
        if self._sock is None:
            self.bind()
        self._thread = threading.Thread(target=self.run, name="gc-bridge", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        elif self._sock is not None:
            self._sock.close()


def bridge_run(listen_port: int, publisher, stop: Optional[threading.Event] = None) -> GameControllerBridge:
    """Run a bridge in the calling thread until ``stop`` is set."""
    bridge = GameControllerBridge(listen_port, publisher)
    if stop is not None:
        bridge._stop = stop
    bridge.run()
    return bridge


def gc_bridge_node(node: Node, spec: NodeSpec, topo: Topology) -> GameControllerBridge:
    pub = node.create_publisher(spec.publishes[0], GameState)
    bridge = GameControllerBridge(int(spec.params.get("port", DEFAULT_GC_PORT)), pub)
    # bind eagerly so a port clash fails the node at startup, not later
    bridge.bind()
    node.on_start(bridge.start)
    node.on_shutdown(bridge.stop)
    return bridge
