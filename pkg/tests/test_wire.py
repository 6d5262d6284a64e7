import random
import struct

import pytest
from hypothesis import given, settings, strategies as st

from ngb.core import Encoding, GameState, Header, Image, Imu, JointState, Time
from ngb.errors import BadMagicError, BadTagError, InvariantViolation, MalformedTopicError, NGBError, TruncatedError
from ngb.wire import MAGIC, TAG_IMAGE, TAG_IMU, decode_payload, encode_payload, frame, parse_frame, tag_for

from strategies import GENERATORS, any_message, seeded


def roundtrip(msg):
    return decode_payload(tag_for(msg), encode_payload(msg))


@pytest.mark.parametrize("kind", sorted(GENERATORS))
def test_seeded_roundtrips_are_bit_exact(kind):
    for msg in seeded(kind, 1000):
        raw = encode_payload(msg)
        back = decode_payload(tag_for(msg), raw)
        assert back == msg
        assert encode_payload(back) == raw


@settings(max_examples=300)
@given(any_message)
def test_frame_roundtrip_property(msg):
    payload = encode_payload(msg)
    data = frame(11, "/some/topic", 99, tag_for(msg), payload)
    f = parse_frame(data)
    assert (f.domain_id, f.topic, f.seq, f.type_tag) == (11, "/some/topic", 99, tag_for(msg))
    assert f.payload_len == len(payload)
    assert decode_payload(f.type_tag, f.payload) == msg


def test_one_pixel_image_byte_layout():
    img = Image(Header(Time(0), ""), 1, 1, Encoding.MONO8, 1, b"\x7f")
    raw = encode_payload(img)
    # header 8+4, dims 4+4+1+4, data length 4, data 1
    assert len(raw) == 30
    assert raw == struct.pack("<qI", 0, 0) + struct.pack("<IIBI", 1, 1, 0, 1) + struct.pack("<I", 1) + b"\x7f"


def test_imu_payload_size():
    raw = encode_payload(Imu(Header(Time(1), "imu")))
    assert len(raw) == 8 + 4 + 3 + 80


def test_decoded_payload_counts_exactly_one_copy():
    img = Image(Header(), 2, 2, Encoding.MONO8, 2, b"abcd")
    back = roundtrip(img)
    assert back.diag.deep_copy_count == 1
    assert isinstance(back.data, bytes)


def test_golden_frames(golden):
    imu = Imu(Header(Time(1_000_000_123), "imu_link"), angular_velocity=(0.1, -0.2, 0.3),
              linear_acceleration=(0.0, 0.0, 9.80665))
    assert frame(3, "/imu/raw", 42, TAG_IMU, encode_payload(imu)) == golden("frame_imu.bin")
    img = Image(Header(Time(0), ""), 1, 1, Encoding.MONO8, 1, b"\x7f")
    data = golden("frame_image_1x1.bin")
    assert frame(0, "/image_raw", 7, TAG_IMAGE, encode_payload(img)) == data
    f = parse_frame(data)
    assert f.payload_len == 30 and decode_payload(f.type_tag, f.payload) == img


def test_frame_header_layout():
    data = frame(200, "/ab", 2**64 - 1, 2, b"xyz")
    assert data[:4] == MAGIC
    assert data[4:8] == (200).to_bytes(4, "little")
    assert data[8:10] == b"\x03\x00" and data[10:13] == b"/ab"
    assert data[13] == 2
    assert data[14:22] == b"\xff" * 8
    assert data[22:26] == b"\x03\x00\x00\x00" and data[26:] == b"xyz"
    assert parse_frame(data).seq == 2**64 - 1


def test_empty_payload_frame():
    f = parse_frame(frame(0, "/t", 0, TAG_IMU, b""))
    assert f.payload_len == 0 and bytes(f.payload) == b""
    with pytest.raises(TruncatedError):
        decode_payload(TAG_IMU, f.payload)


def test_parse_frame_payload_is_a_view():
    data = bytearray(frame(0, "/t", 1, TAG_IMU, b"abc"))
    f = parse_frame(data)
    data[-1] = ord("z")
    assert bytes(f.payload) == b"abz"


def test_unknown_tag():
    with pytest.raises(BadTagError):
        decode_payload(9, b"")
    with pytest.raises(BadTagError):
        decode_payload(0, encode_payload(Imu(Header())))


def test_bad_magic():
    data = bytearray(frame(0, "/t", 1, TAG_IMU, b""))
    data[0:4] = b"XXXX"
    with pytest.raises(BadMagicError):
        parse_frame(bytes(data))


def test_frame_rejects_bad_topic_and_domain():
    with pytest.raises(MalformedTopicError):
        frame(0, "no_slash", 0, TAG_IMU, b"")
    with pytest.raises(InvariantViolation):
        frame(233, "/t", 0, TAG_IMU, b"")
    raw = bytearray(frame(0, "/tt", 0, TAG_IMU, b""))
    raw[10:13] = b"/T!"
    with pytest.raises(MalformedTopicError):
        parse_frame(bytes(raw))


def test_trailing_bytes_rejected():
    raw = encode_payload(Imu(Header()))
    with pytest.raises(InvariantViolation):
        decode_payload(TAG_IMU, raw + b"\0")
    with pytest.raises(InvariantViolation):
        parse_frame(frame(0, "/t", 0, TAG_IMU, raw) + b"\0")


def test_every_truncation_of_every_type_is_rejected_cleanly():
    rng = random.Random(5)
    for kind, gen in GENERATORS.items():
        for _ in range(20):
            msg = gen(rng)
            raw = encode_payload(msg)
            data = frame(1, "/x", 3, tag_for(msg), raw)
            for cut in range(len(raw)):
                with pytest.raises(NGBError):
                    decode_payload(tag_for(msg), raw[:cut])
            for cut in range(len(data)):
                with pytest.raises(NGBError):
                    parse_frame(data[:cut])


def _decode_any(data: bytes):
    try:
        f = parse_frame(data)
        decode_payload(f.type_tag, f.payload)
    except NGBError:
        pass


@settings(max_examples=500)
@given(st.binary(max_size=200))
def test_arbitrary_bytes_never_crash(data):
    _decode_any(data)
    _decode_any(MAGIC + data)


@settings(max_examples=300)
@given(any_message, st.data())
def test_bit_flips_never_crash(msg, data):
    raw = bytearray(frame(0, "/fuzz", 1, tag_for(msg), encode_payload(msg)))
    for _ in range(data.draw(st.integers(1, 4))):
        i = data.draw(st.integers(0, len(raw) - 1))
        raw[i] ^= 1 << data.draw(st.integers(0, 7))
    _decode_any(bytes(raw))


def test_game_state_payload_is_fixed_size():
    assert len(encode_payload(GameState())) == 18


def test_joint_state_roundtrip_with_unicode_names():
    js = JointState(Header(Time(-5), "β"), ("héad", "ß"), (1.0, -0.0), (), (2.0, 3.0))
    assert roundtrip(js) == js
