"""Binary codec for payloads and the frame that carries them between processes.

All integers are little-endian. See docs/wire-format.md for the byte tables.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

from .core import (
    DomainId,
    Encoding,
    GamePhase,
    GameState,
    Header,
    Image,
    Imu,
    JointState,
    Payload,
    TeamInfo,
    Time,
    TopicName,
    validate_topic_name,
)
from .errors import BadMagicError, BadTagError, InvariantViolation, TruncatedError

MAGIC = b"BHW1"
TAG_IMAGE, TAG_IMU, TAG_JOINT_STATE, TAG_GAME_STATE = 1, 2, 3, 4
TYPE_TAGS = {Image: TAG_IMAGE, Imu: TAG_IMU, JointState: TAG_JOINT_STATE, GameState: TAG_GAME_STATE}
TAG_NAMES = {TAG_IMAGE: "Image", TAG_IMU: "Imu", TAG_JOINT_STATE: "JointState", TAG_GAME_STATE: "GameState"}

Buffer = Union[bytes, bytearray, memoryview]

_I64 = struct.Struct("<q")
_U32 = struct.Struct("<I")
_IMAGE_DIMS = struct.Struct("<IIBI")
_IMU_BODY = struct.Struct("<10d")
_GAME_BODY = struct.Struct("<6B2h8B")
_FRAME_HEAD = struct.Struct("<4sIH")
_FRAME_TAIL = struct.Struct("<BQI")


def tag_for(msg: Payload) -> int:
    try:
        return TYPE_TAGS[type(msg)]
    except KeyError:
        raise BadTagError(f"no wire tag for {type(msg).__name__}") from None


# --------------------------------------------------------------------------- encode


def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def _enc_header(h: Header) -> bytes:
    return _I64.pack(h.stamp.nanos) + _enc_str(h.frame_id)


def _enc_floats(values) -> bytes:
    return _U32.pack(len(values)) + struct.pack(f"<{len(values)}d", *values)


def encode_payload(msg: Payload) -> bytes:
    if isinstance(msg, Image):
        return b"".join(
            (
                _enc_header(msg.header),
                _IMAGE_DIMS.pack(msg.width, msg.height, int(msg.encoding), msg.step),
                _U32.pack(len(msg.data)),
                msg.data,
            )
        )
    if isinstance(msg, Imu):
        return _enc_header(msg.header) + _IMU_BODY.pack(
            *msg.orientation, *msg.angular_velocity, *msg.linear_acceleration
        )
    if isinstance(msg, JointState):
        parts = [_enc_header(msg.header), _U32.pack(len(msg.names))]
        parts.extend(_enc_str(n) for n in msg.names)
        parts += [_enc_floats(msg.positions), _enc_floats(msg.velocities), _enc_floats(msg.efforts)]
        return b"".join(parts)
    if isinstance(msg, GameState):
        a, b = msg.teams
        return _GAME_BODY.pack(
            msg.packet_number,
            msg.players_per_team,
            int(msg.state),
            int(msg.first_half),
            msg.kickoff_team,
            msg.secondary_state,
            msg.secs_remaining,
            msg.secondary_time,
            a.team_number, a.team_colour, a.score, a.penalty_shot,
            b.team_number, b.team_colour, b.score, b.penalty_shot,
        )
    raise BadTagError(f"cannot encode {type(msg).__name__}")


# --------------------------------------------------------------------------- decode


class _Reader:
    __slots__ = ("buf", "off")

    def __init__(self, buf: Buffer):
        self.buf = memoryview(buf).cast("B") if not isinstance(buf, memoryview) else buf.cast("B")
        self.off = 0

    def need(self, n: int) -> int:
        start = self.off
        if n < 0 or start + n > len(self.buf):
            raise TruncatedError(f"need {n} bytes at offset {start}, have {len(self.buf) - start}")
        self.off = start + n
        return start

    def unpack(self, st: struct.Struct):
        return st.unpack_from(self.buf, self.need(st.size))

    def u32(self) -> int:
        return self.unpack(_U32)[0]

    def raw(self, n: int) -> memoryview:
        start = self.need(n)
        return self.buf[start : start + n]

    def text(self) -> str:
        try:
            return str(self.raw(self.u32()), "utf-8")
        except UnicodeDecodeError as exc:
            raise InvariantViolation(f"string is not valid UTF-8: {exc}") from None

    def floats(self) -> tuple:
        n = self.u32()
        start = self.need(8 * n)
        return struct.unpack_from(f"<{n}d", self.buf, start)

    def header(self) -> Header:
        stamp = self.unpack(_I64)[0]
        return Header(Time(stamp), self.text())

    def finish(self) -> None:
        if self.off != len(self.buf):
            raise InvariantViolation(f"{len(self.buf) - self.off} trailing bytes after payload")


def _dec_image(r: _Reader) -> Image:
    header = r.header()
    width, height, enc, step = r.unpack(_IMAGE_DIMS)
    try:
        encoding = Encoding(enc)
    except ValueError:
        raise InvariantViolation(f"unknown image encoding {enc}") from None
    data = bytes(r.raw(r.u32()))
    return Image(header, width, height, encoding, step, data)


def _dec_imu(r: _Reader) -> Imu:
    header = r.header()
    v = r.unpack(_IMU_BODY)
    return Imu(header, v[0:4], v[4:7], v[7:10])


def _dec_joint_state(r: _Reader) -> JointState:
    header = r.header()
    names = tuple(r.text() for _ in range(r.u32()))
    return JointState(header, names, r.floats(), r.floats(), r.floats())


def _dec_game_state(r: _Reader) -> GameState:
    v = r.unpack(_GAME_BODY)
    if v[2] > max(GamePhase):
        raise InvariantViolation(f"game state byte {v[2]} out of range")
    if v[3] > 1:
        raise InvariantViolation(f"first_half byte {v[3]} is not 0/1")
    return GameState(
        packet_number=v[0],
        players_per_team=v[1],
        state=GamePhase(v[2]),
        first_half=bool(v[3]),
        kickoff_team=v[4],
        secondary_state=v[5],
        secs_remaining=v[6],
        secondary_time=v[7],
        teams=(TeamInfo(*v[8:12]), TeamInfo(*v[12:16])),
    )


_DECODERS = {
    TAG_IMAGE: _dec_image,
    TAG_IMU: _dec_imu,
    TAG_JOINT_STATE: _dec_joint_state,
    TAG_GAME_STATE: _dec_game_state,
}


def decode_payload(tag: int, data: Buffer) -> Payload:
    """Inverse of :func:`encode_payload`. The result's copy counter reads 1: its bytes were materialized."""
    try:
        decoder = _DECODERS[tag]
    except KeyError:
        raise BadTagError(f"unknown type tag {tag}") from None
    r = _Reader(data)
    msg = decoder(r)
    r.finish()
    msg.diag.bump()
    return msg


# --------------------------------------------------------------------------- frames


@dataclass(frozen=True)
class WireFrame:
    domain_id: int
    topic: str
    type_tag: int
    seq: int
    payload_len: int
    payload: Buffer

    @property
    def magic(self) -> bytes:
        return MAGIC


def frame(domain: Union[DomainId, int], topic: Union[TopicName, str], seq: int, tag: int, payload: Buffer) -> bytes:
    topic_raw = str(validate_topic_name(str(topic))).encode("utf-8")
    return b"".join(
        (
            _FRAME_HEAD.pack(MAGIC, int(DomainId(int(domain))), len(topic_raw)),
            topic_raw,
            _FRAME_TAIL.pack(tag, seq, len(payload)),
            payload,
        )
    )


def parse_frame(data: Buffer) -> WireFrame:
    """Parse one complete frame. The payload is a view into ``data``; nothing is copied."""
    r = _Reader(data)
    if len(r.buf) >= 4 and bytes(r.buf[:4]) != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r}, got {bytes(r.buf[:4])!r}")
    _, domain_id, topic_len = r.unpack(_FRAME_HEAD)
    try:
        topic = str(r.raw(topic_len), "utf-8")
    except UnicodeDecodeError:
        raise InvariantViolation("topic is not valid UTF-8") from None
    validate_topic_name(topic)
    tag, seq, payload_len = r.unpack(_FRAME_TAIL)
    payload = r.raw(payload_len)
    r.finish()
    return WireFrame(domain_id, topic, tag, seq, payload_len, payload)
