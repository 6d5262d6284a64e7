import socket
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from ngb.core import Encoding, Header, Image, Imu, JointState, Time
from ngb.errors import PayloadTooLargeError, TruncatedStreamError
from ngb.inter import (
    UDP_MAX_DATAGRAM,
    Endpoint,
    Sender,
    StreamReassembler,
    TransportKind,
    encode_record,
    port_for,
    recv,
    send,
)
from ngb.wire import TAG_IMU, decode_payload, encode_payload, frame

UDP = TransportKind.UDP_BEST_EFFORT
TCP = TransportKind.TCP_RELIABLE
# domains far from the ones the benchmarks use
D = 150


def mono(w, h, fill=None):
    data = bytes((i * 7) & 0xFF for i in range(w * h)) if fill is None else bytes([fill]) * (w * h)
    return Image(Header(Time(123), "camera"), w, h, Encoding.MONO8, w, data)


def test_port_law():
    assert port_for(0, 0) == 20000
    assert port_for(1, 0) == 20008
    assert port_for(3, 5) == 20029
    assert port_for(232, 7) == 20000 + 232 * 8 + 7 < 65536
    with pytest.raises(ValueError):
        port_for(0, 8)


def test_port_law_is_injective():
    ports = {port_for(d, s) for d in range(233) for s in range(8)}
    assert len(ports) == 233 * 8


def test_udp_imu_single_datagram():
    imu = Imu(Header(Time(5), "imu"), angular_velocity=(1, 2, 3))
    with Endpoint(D, "/imu/raw", UDP, slot=3) as ep:
        size = len(frame(D, "/imu/raw", 0, TAG_IMU, encode_payload(imu)))
        assert size < 200
        send(ep, 9, imu)
        got = ep.recv_message(timeout=2)
    assert got is not None
    fr, msg = got
    assert (fr.seq, fr.domain_id, fr.topic) == (9, D, "/imu/raw")
    assert msg == imu


def test_full_size_image_too_large_for_udp():
    img = mono(640, 480, 0)
    n = len(frame(0, "/image_raw", 0, 1, encode_payload(img)))
    assert n > UDP_MAX_DATAGRAM
    s = Sender(D, "/image_raw", UDP, port_for(D, 0))
    with pytest.raises(PayloadTooLargeError):
        s.send(0, img)
    s.close()


def test_full_size_image_over_tcp_intact():
    img = mono(640, 480)
    with Endpoint(D, "/image_raw", TCP, slot=0) as ep:
        s = Sender(D, "/image_raw", TCP, ep.port)
        s.send(1, img)
        got = ep.recv_message(timeout=5)
        s.close()
    assert got is not None and got[1] == img
    assert got[1].diag.deep_copy_count == 1


def test_one_megabyte_payload_over_tcp():
    img = mono(1024, 1024)
    with Endpoint(D, "/big", TCP, slot=1) as ep:
        s = Sender(D, "/big", TCP, ep.port)
        s.send(0, img)
        got = ep.recv_message(timeout=5)
        s.close()
    assert got[1].data == img.data


def test_tcp_preserves_send_order():
    with Endpoint(D, "/ordered", TCP, slot=2) as ep:
        s = Sender(D, "/ordered", TCP, ep.port)
        for i in range(200):
            s.send(i, Imu(Header(Time(i))))
        seqs = []
        while len(seqs) < 200:
            fr = ep.recv(timeout=2)
            assert fr is not None
            seqs.append(fr.seq)
        s.close()
    assert seqs == list(range(200))


@pytest.mark.parametrize("kind", [UDP, TCP])
def test_wrong_domain_never_surfaced(kind):
    with Endpoint(7 + D, "/imu/raw", kind, slot=4) as ep:
        s = Sender(5 + D, "/imu/raw", kind, ep.port)
        s.send(1, Imu(Header()))
        assert ep.recv(timeout=0.5) is None
        ok = Sender(7 + D, "/imu/raw", kind, ep.port)
        ok.send(2, Imu(Header()))
        fr = ep.recv(timeout=2)
        s.close()
        ok.close()
    assert fr.seq == 2 and fr.domain_id == 7 + D
    assert ep.counters.wrong_domain == 1
    assert ep.counters.surfaced == 1


def test_malformed_datagrams_are_counted_and_skipped():
    with Endpoint(D, "/imu/raw", UDP, slot=5) as ep:
        raw = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        raw.sendto(b"nonsense", ep.address)
        raw.sendto(frame(D, "/imu/raw", 1, TAG_IMU, b"short"), ep.address)
        raw.sendto(frame(D, "/imu/raw", 2, TAG_IMU, encode_payload(Imu(Header()))), ep.address)
        got = ep.recv_message(timeout=2)
        raw.close()
    assert got[0].seq == 2
    assert ep.counters.malformed == 2


def test_other_topic_on_same_port_is_not_surfaced():
    with Endpoint(D, "/a", UDP, slot=6) as ep:
        Sender(D, "/b", UDP, ep.port).send(1, Imu(Header()))
        assert ep.recv(timeout=0.3) is None
    assert ep.counters.malformed == 1


def test_truncated_stream_surfaces_nothing():
    with Endpoint(D, "/image_raw", TCP, slot=7) as ep:
        data = encode_record(frame(D, "/image_raw", 0, 1, encode_payload(mono(64, 64))))
        c = socket.create_connection(ep.address)
        c.sendall(data[: len(data) // 2])
        c.close()
        assert ep.recv(timeout=0.5) is None
    assert ep.counters.truncated_stream == 1
    assert ep.counters.surfaced == 0


def test_sender_without_listener_counts_unmatched():
    s = Sender(D, "/nobody", TCP, port_for(D + 1, 7))
    s.send(0, Imu(Header()))
    assert s.unmatched == 1 and not s.connected


def test_reassembler_rejects_partial_on_close():
    r = StreamReassembler()
    assert r.feed(b"\x05\x00\x00\x00ab") == []
    with pytest.raises(TruncatedStreamError):
        r.close()


@settings(max_examples=200)
@given(st.lists(st.binary(max_size=300), max_size=10), st.lists(st.integers(1, 64), min_size=1, max_size=20))
def test_reassembly_is_independent_of_chunking(records, cuts):
    stream = b"".join(encode_record(r) for r in records)
    r = StreamReassembler()
    out, pos, i = [], 0, 0
    while pos < len(stream):
        step = cuts[i % len(cuts)]
        out.extend(r.feed(stream[pos : pos + step]))
        pos += step
        i += 1
    r.close()
    assert out == records


def test_concurrent_udp_senders_only_surface_valid_frames():
    js = JointState(Header(), ("a",), (1.0,))
    with Endpoint(D + 2, "/joint_states", UDP, slot=2) as ep:
        senders = [Sender(D + 2, "/joint_states", UDP, ep.port) for _ in range(3)]

        def blast(s):
            for i in range(100):
                s.send(i, js)

        ts = [threading.Thread(target=blast, args=(s,)) for s in senders]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        got = []
        deadline = time.monotonic() + 2
        while len(got) < 300 and time.monotonic() < deadline:
            fr = recv(ep, timeout=0.1)
            if fr is not None:
                got.append(decode_payload(fr.type_tag, fr.payload))
    assert got and all(m == js for m in got)
