"""Shared vocabulary: time stamps, topic names, QoS, domains and the four payload types.

Payloads are frozen dataclasses. Each carries a :class:`PayloadDiag` that counts how
many times its bytes were duplicated on the way to the current holder; the counter is
excluded from equality so round-trip comparisons look only at content.
"""

from __future__ import annotations

import datetime as _dt
import enum
import math
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Tuple, Union

from .errors import InvariantViolation, MalformedTopicError

I64_MIN, I64_MAX = -(2**63), 2**63 - 1
MAX_DOMAIN_ID = 232


# --------------------------------------------------------------------------- time


@dataclass(frozen=True, order=True)
class Time:
    nanos: int = 0

    def __post_init__(self):
        if not isinstance(self.nanos, int) or not I64_MIN <= self.nanos <= I64_MAX:
            raise InvariantViolation(f"Time.nanos must be a signed 64-bit int, got {self.nanos!r}")

    def isoformat(self) -> str:
        secs, frac = divmod(self.nanos, 1_000_000_000)
        stamp = _dt.datetime.fromtimestamp(secs, tz=_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")
        if frac:
            return f"{stamp}.{frac:09d}Z"
        return stamp + "Z"

    def seconds(self) -> float:
        return self.nanos / 1e9

    def __str__(self) -> str:
        return self.isoformat()


_clock_lock = threading.Lock()
_last_nanos = 0


def now() -> Time:
    """Wall-clock time, clamped so successive calls in one process never go backwards."""
    global _last_nanos
    t = time.time_ns()
    with _clock_lock:
        if t < _last_nanos:
            t = _last_nanos
        _last_nanos = t
    return Time(t)


# --------------------------------------------------------------------------- names, domains, qos

_SEGMENT = re.compile(r"[a-z0-9_]+")


@dataclass(frozen=True)
class TopicName:
    value: str

    def __post_init__(self):
        _check_topic(self.value)

    def __str__(self) -> str:
        return self.value


def _check_topic(raw: str) -> None:
    if not isinstance(raw, str) or not raw:
        raise MalformedTopicError("empty: topic name must be non-empty")
    if not raw.startswith("/"):
        raise MalformedTopicError(f"leading-slash: {raw!r} must start with '/'")
    if raw.endswith("/"):
        raise MalformedTopicError(f"trailing-slash: {raw!r} must not end with '/'")
    for seg in raw[1:].split("/"):
        if not seg:
            raise MalformedTopicError(f"empty-segment: {raw!r} contains '//'")
        if not _SEGMENT.fullmatch(seg):
            raise MalformedTopicError(f"segment-charset: {seg!r} in {raw!r} must match [a-z0-9_]+")


def validate_topic_name(raw: str) -> TopicName:
    return TopicName(raw)


@dataclass(frozen=True)
class DomainId:
    id: int = 0

    def __post_init__(self):
        if not isinstance(self.id, int) or not 0 <= self.id <= MAX_DOMAIN_ID:
            raise InvariantViolation(f"domain id must be in [0, {MAX_DOMAIN_ID}], got {self.id!r}")

    def __int__(self) -> int:
        return self.id


class Reliability(str, enum.Enum):
    RELIABLE = "RELIABLE"
    BEST_EFFORT = "BEST_EFFORT"


@dataclass(frozen=True)
class QoSProfile:
    reliability: Reliability
    history_depth: int

    def __post_init__(self):
        object.__setattr__(self, "reliability", Reliability(self.reliability))
        if not isinstance(self.history_depth, int) or self.history_depth < 1:
            raise InvariantViolation(f"history_depth must be >= 1, got {self.history_depth!r}")

    def to_dict(self) -> dict:
        return {"reliability": self.reliability.value, "depth": self.history_depth}

    @classmethod
    def from_dict(cls, d: dict) -> "QoSProfile":
        return cls(Reliability(d["reliability"]), int(d["depth"]))


def sensor_qos() -> QoSProfile:
    return QoSProfile(Reliability.BEST_EFFORT, 5)


def reliable_qos() -> QoSProfile:
    return QoSProfile(Reliability.RELIABLE, 10)


# --------------------------------------------------------------------------- diagnostics


class PayloadDiag:
    """Deep-copy counter attached to a payload. Starts at 0, only ever grows."""

    __slots__ = ("_count", "_lock")

    def __init__(self, count: int = 0):
        self._count = count
        self._lock = threading.Lock()

    @property
    def deep_copy_count(self) -> int:
        return self._count

    def bump(self, n: int = 1) -> int:
        if n < 0:
            raise ValueError("copy counter cannot decrease")
        with self._lock:
            self._count += n
            return self._count

    def __repr__(self) -> str:
        return f"PayloadDiag(deep_copy_count={self._count})"


def _diag_field():
    return field(default_factory=PayloadDiag, compare=False, repr=False, hash=False)


# --------------------------------------------------------------------------- payloads


@dataclass(frozen=True)
class Header:
    stamp: Time = Time(0)
    frame_id: str = ""


class Encoding(enum.IntEnum):
    MONO8 = 0
    RGB8 = 1

    @property
    def bytes_per_pixel(self) -> int:
        return 1 if self is Encoding.MONO8 else 3


@dataclass(frozen=True)
class Image:
    header: Header
    width: int
    height: int
    encoding: Encoding
    step: int
    data: bytes
    diag: PayloadDiag = _diag_field()

    def __post_init__(self):
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        if not isinstance(self.data, bytes):
            raise InvariantViolation("Image.data must be bytes")
        if self.step != self.width * self.encoding.bytes_per_pixel:
            raise InvariantViolation(
                f"step {self.step} != width {self.width} x {self.encoding.bytes_per_pixel} bytes/pixel"
            )
        if len(self.data) != self.step * self.height:
            raise InvariantViolation(f"data length {len(self.data)} != step x height {self.step * self.height}")


Vec3 = Tuple[float, float, float]
Quat = Tuple[float, float, float, float]
IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Imu:
    header: Header
    orientation: Quat = IDENTITY_QUAT
    angular_velocity: Vec3 = (0.0, 0.0, 0.0)
    linear_acceleration: Vec3 = (0.0, 0.0, 0.0)
    diag: PayloadDiag = _diag_field()

    def __post_init__(self):
        object.__setattr__(self, "orientation", tuple(float(v) for v in self.orientation))
        object.__setattr__(self, "angular_velocity", tuple(float(v) for v in self.angular_velocity))
        object.__setattr__(self, "linear_acceleration", tuple(float(v) for v in self.linear_acceleration))
        if len(self.orientation) != 4 or len(self.angular_velocity) != 3 or len(self.linear_acceleration) != 3:
            raise InvariantViolation("Imu vectors must have 4/3/3 components")
        norm = math.sqrt(sum(v * v for v in self.orientation))
        if abs(norm - 1.0) > 1e-9:
            raise InvariantViolation(f"Imu orientation is not a unit quaternion (|q| = {norm!r})")


@dataclass(frozen=True)
class JointState:
    header: Header
    names: Tuple[str, ...] = ()
    positions: Tuple[float, ...] = ()
    velocities: Tuple[float, ...] = ()
    efforts: Tuple[float, ...] = ()
    diag: PayloadDiag = _diag_field()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        for name in ("positions", "velocities", "efforts"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n = len(self.names)
        if len(self.positions) != n:
            raise InvariantViolation(f"{n} names but {len(self.positions)} positions")
        for name in ("velocities", "efforts"):
            if len(getattr(self, name)) not in (0, n):
                raise InvariantViolation(f"{name} must be empty or have {n} entries")


class GamePhase(enum.IntEnum):
    INITIAL = 0
    READY = 1
    SET = 2
    PLAYING = 3
    FINISHED = 4


def _check_uint(name: str, value: int, bits: int) -> None:
    if not isinstance(value, int) or not 0 <= value < 2**bits:
        raise InvariantViolation(f"{name} must be u{bits}, got {value!r}")


def _check_int(name: str, value: int, bits: int) -> None:
    lim = 2 ** (bits - 1)
    if not isinstance(value, int) or not -lim <= value < lim:
        raise InvariantViolation(f"{name} must be i{bits}, got {value!r}")


@dataclass(frozen=True)
class TeamInfo:
    team_number: int = 0
    team_colour: int = 0
    score: int = 0
    penalty_shot: int = 0

    def __post_init__(self):
        for name in ("team_number", "team_colour", "score", "penalty_shot"):
            _check_uint(name, getattr(self, name), 8)


@dataclass(frozen=True)
class GameState:
    packet_number: int = 0
    players_per_team: int = 0
    state: GamePhase = GamePhase.INITIAL
    first_half: bool = False
    kickoff_team: int = 0
    secondary_state: int = 0
    secs_remaining: int = 0
    secondary_time: int = 0
    teams: Tuple[TeamInfo, TeamInfo] = (TeamInfo(), TeamInfo())
    diag: PayloadDiag = _diag_field()

    def __post_init__(self):
        try:
            object.__setattr__(self, "state", GamePhase(self.state))
        except ValueError as exc:
            raise InvariantViolation(f"unknown game state {self.state!r}") from exc
        object.__setattr__(self, "first_half", bool(self.first_half))
        object.__setattr__(self, "teams", tuple(self.teams))
        if len(self.teams) != 2:
            raise InvariantViolation(f"GameState needs exactly 2 teams, got {len(self.teams)}")
        for name in ("packet_number", "players_per_team", "kickoff_team", "secondary_state"):
            _check_uint(name, getattr(self, name), 8)
        _check_int("secs_remaining", self.secs_remaining, 16)
        _check_int("secondary_time", self.secondary_time, 16)


Payload = Union[Image, Imu, JointState, GameState]
PAYLOAD_TYPES = {"Image": Image, "Imu": Imu, "JointState": JointState, "GameState": GameState}


def copy_payload(msg: Payload) -> Payload:
    """Explicit deep copy for a holder that needs its own bytes. Counts as one copy."""
    import dataclasses

    kwargs = {f.name: getattr(msg, f.name) for f in dataclasses.fields(msg) if f.name != "diag"}
    if isinstance(msg, Image):
        kwargs["data"] = bytes(bytearray(msg.data))
    dup = type(msg)(**kwargs)
    dup.diag.bump(msg.diag.deep_copy_count + 1)
    return dup


@dataclass(frozen=True)
class MessageEnvelope:
    """One delivery: where the payload came from and the payload handle itself."""

    topic: str
    seq: int
    domain: int
    payload: Payload
