"""Simulated robot node set: camera, Sobel sink, CM-730, IMU fusion and the Case-2 consumers.

The pure functions (:func:`generate_frame`, :func:`sobel`, :func:`fusion_step`,
:func:`cm730_tick`) are deterministic and usable on their own. The ``*_node``
factories attach them to a :class:`~ngb.runtime.Node` according to a topology entry.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .core import (
    IDENTITY_QUAT,
    Encoding,
    Header,
    Image,
    Imu,
    JointState,
    MessageEnvelope,
    Quat,
    Time,
    Vec3,
    now,
)
from .errors import UnsupportedEncodingError
from .runtime import Node
from .topology import NodeSpec, Topology

GRAVITY = 9.80665
EXIT_TIMEOUT = 4

# --------------------------------------------------------------------------- camera


@functools.lru_cache(maxsize=8)
def _frame_basis(width: int, height: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.indices((height, width), dtype=np.uint32)
    diagonal = ((xs + ys) % 256).astype(np.uint8)
    noise = np.random.Generator(np.random.PCG64(seed)).integers(0, 256, size=(height, width), dtype=np.uint8)
    diagonal.setflags(write=False)
    noise.setflags(write=False)
    return diagonal, noise


def generate_frame(width: int, height: int, frame_index: int, seed: int = 0, frame_id: str = "camera") -> Image:
    """Synthetic MONO8 frame: ``(x + y + 3*frame_index) mod 256`` XOR a seeded noise mask.

    The pixel bytes depend only on the arguments. The header is stamped once the
    pixels exist, which is the capture time that latency is measured from.
    """
    if width < 3 or height < 3:
        raise ValueError(f"frame must be at least 3x3, got {width}x{height}")
    diagonal, noise = _frame_basis(width, height, seed)
    shifted = diagonal + np.uint8((3 * frame_index) % 256)
    data = np.bitwise_xor(shifted, noise).tobytes()
    return Image(Header(now(), frame_id), width, height, Encoding.MONO8, width, data)


# --------------------------------------------------------------------------- sobel


def sobel(img: Image) -> Image:
    """L1 Sobel gradient magnitude, ``min(255, |gx| + |gy|)``, replicate borders."""
    if img.encoding is not Encoding.MONO8:
        raise UnsupportedEncodingError(f"sobel needs MONO8, got {img.encoding.name}")
    src = np.frombuffer(img.data, dtype=np.uint8).reshape(img.height, img.width)
    p = np.pad(src, 1, mode="edge").astype(np.int16)
    # column and row smoothing shared by both kernels
    vert = p[:-2] + 2 * p[1:-1] + p[2:]
    horiz = p[:, :-2] + 2 * p[:, 1:-1] + p[:, 2:]
    gx = vert[:, 2:] - vert[:, :-2]
    gy = horiz[2:] - horiz[:-2]
    mag = np.abs(gx)
    mag += np.abs(gy)
    np.minimum(mag, 255, out=mag)
    out = mag.astype(np.uint8).tobytes()
    return Image(img.header, img.width, img.height, Encoding.MONO8, img.width, out)


# --------------------------------------------------------------------------- quaternions


def q_mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def q_from_rotvec(rx: float, ry: float, rz: float) -> Quat:
    angle = math.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        # second-order small-angle form; renormalized by the caller
        return (1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz)
    s = math.sin(0.5 * angle) / angle
    return (math.cos(0.5 * angle), rx * s, ry * s, rz * s)


def q_normalize(q: Quat) -> Quat:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def gravity_in_body(q: Quat) -> Vec3:
    """World up axis expressed in the body frame, for a body-to-world rotation ``q``."""
    w, x, y, z = q
    return (2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y))


def angle_between(a: Vec3, b: Vec3) -> float:
    cx = a[1] * b[2] - a[2] * b[1]
    cy = a[2] * b[0] - a[0] * b[2]
    cz = a[0] * b[1] - a[1] * b[0]
    return math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), a[0] * b[0] + a[1] * b[1] + a[2] * b[2])


def roll_pitch(q: Quat) -> Tuple[float, float]:
    w, x, y, z = q
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = math.asin(max(-1.0, min(1.0, 2.0 * (w * y - z * x))))
    return roll, pitch


# --------------------------------------------------------------------------- fusion


@dataclass(frozen=True)
class FusionState:
    q: Quat = IDENTITY_QUAT
    alpha: float = 0.98
    last_stamp: Time = Time(0)


def fusion_step(state: FusionState, gyro: Vec3, accel: Vec3, dt: float, stamp: Optional[Time] = None) -> FusionState:
    """One complementary-filter update.

    The gyro rate is integrated over ``dt``; then, if the accelerometer magnitude is
    within [0.5 g, 1.5 g], the orientation is turned by ``1 - alpha`` of the angle
    separating predicted and measured gravity. Each correction shrinks that angle by
    a factor ``alpha``.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    q = q_mul(state.q, q_from_rotvec(gyro[0] * dt, gyro[1] * dt, gyro[2] * dt))

    ax, ay, az = accel
    norm = math.sqrt(ax * ax + ay * ay + az * az)
    if 0.5 * GRAVITY <= norm <= 1.5 * GRAVITY:
        q = q_normalize(q)
        mx, my, mz = ax / norm, ay / norm, az / norm
        px, py, pz = gravity_in_body(q)
        ex, ey, ez = py * mz - pz * my, pz * mx - px * mz, px * my - py * mx
        s = math.sqrt(ex * ex + ey * ey + ez * ez)
        if s > 1e-15:
            theta = math.atan2(s, px * mx + py * my + pz * mz)
            phi = -(1.0 - state.alpha) * theta / s
            q = q_mul(q, q_from_rotvec(ex * phi, ey * phi, ez * phi))

    return FusionState(q_normalize(q), state.alpha, stamp if stamp is not None else state.last_stamp)


# --------------------------------------------------------------------------- CM-730

N_JOINTS = 20
_TILT = math.radians(5.0)
RAW_ACCEL: Vec3 = (0.0, -GRAVITY * math.sin(_TILT), GRAVITY * math.cos(_TILT))
JOINT_NAMES = tuple(f"j{i}" for i in range(N_JOINTS))


def cm730_tick(t: Time) -> Tuple[JointState, Imu]:
    """Servo positions and raw inertial readings of the simulated sub-controller at time ``t``."""
    ts = t.nanos / 1e9
    positions = tuple(0.5 * math.sin(2.0 * math.pi * 0.25 * ts + i * 0.1) for i in range(N_JOINTS))
    joints = JointState(Header(t, "base_link"), JOINT_NAMES, positions)
    gyro = (0.0, 0.0, 0.2 * math.sin(2.0 * math.pi * 0.1 * ts))
    imu = Imu(Header(t, "imu_link"), IDENTITY_QUAT, gyro, RAW_ACCEL)
    return joints, imu


# --------------------------------------------------------------------------- node factories

NodeFactory = Callable[[Node, NodeSpec, Topology], object]
NODE_KINDS: Dict[str, NodeFactory] = {}


def node_kind(name: str):
    def register(fn: NodeFactory) -> NodeFactory:
        NODE_KINDS[name] = fn
        return fn

    return register


@node_kind("camera")
def camera_node(node: Node, spec: NodeSpec, topo: Topology):
    width = int(spec.params.get("width", 640))
    height = int(spec.params.get("height", 480))
    fps = float(spec.params.get("fps", 30.0))
    seed = int(spec.params.get("seed", 0))
    pub = node.create_publisher(spec.publishes[0], Image)
    state = {"index": 0}

    def capture():
        pub.publish(generate_frame(width, height, state["index"], seed))
        state["index"] += 1

    node.create_timer(1.0 / fps, capture)
    return state


class SobelSink:
    """Runs Sobel on every received frame and records its end-to-end latency.

    Finishes (and asks its container to stop) after ``warmup + target`` frames, or
    with status :data:`EXIT_TIMEOUT` if no frame arrives for ``stall_timeout`` seconds.
    Whatever was collected is flushed to ``output_dir`` on any kind of exit.
    """

    def __init__(self, node: Node, image_topic: str, gradient_topic: Optional[str], target: Optional[int],
                 stall_timeout: float, output_dir: Optional[str]):
        self.node = node
        self.target = target
        self.stall_timeout = stall_timeout
        self.output_dir = output_dir
        self.rows: List[Tuple[int, int, int, int, int]] = []
        self.status: Optional[str] = None
        self._last_activity = time.monotonic()
        self.gradient_pub = node.create_publisher(gradient_topic, Image) if gradient_topic else None
        node.create_subscription(image_topic, Image, self.on_image)
        node.create_timer(0.25, self.check_stall)
        node.on_shutdown(lambda: self.finish("terminated"))

    def on_image(self, env: MessageEnvelope) -> None:
        img = env.payload
        grad = sobel(img)
        done = now()
        self.rows.append((env.seq, img.header.stamp.nanos, done.nanos, img.diag.deep_copy_count, env.domain))
        self._last_activity = time.monotonic()
        if self.gradient_pub is not None:
            self.gradient_pub.publish(grad)
        if self.target is not None and len(self.rows) >= self.target and self.status is None:
            self.finish("complete")
            self.node.request_shutdown(0)

    def check_stall(self) -> None:
        if self.status is None and time.monotonic() - self._last_activity > self.stall_timeout:
            self.finish("timeout")
            self.node.request_shutdown(EXIT_TIMEOUT)

    def finish(self, status: str) -> None:
        if self.status is not None:
            return
        self.status = status
        if self.output_dir is None:
            return
        out = Path(self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        tmp = out / "sink_samples.csv.tmp"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seq", "capture_ns", "done_ns", "deep_copy_count", "domain"])
            w.writerows(self.rows)
        os.replace(tmp, out / "sink_samples.csv")
        (out / "sink_status.json").write_text(
            json.dumps({"status": status, "collected": len(self.rows), "node": self.node.name}) + "\n"
        )


@node_kind("sobel_sink")
def sobel_sink_node(node: Node, spec: NodeSpec, topo: Topology):
    target = spec.params.get("target", topo.sample_target + topo.warmup_discard)
    return SobelSink(
        node,
        spec.subscribes[0],
        spec.publishes[0] if spec.publishes else None,
        None if target is None else int(target),
        float(spec.params.get("stall_timeout_s", topo.stall_timeout_s)),
        topo.output_dir,
    )


@node_kind("cm730")
def cm730_node(node: Node, spec: NodeSpec, topo: Topology):
    rate = float(spec.params.get("rate_hz", 125.0))
    joints_pub = node.create_publisher(spec.publishes[0], JointState)
    imu_pub = node.create_publisher(spec.publishes[1], Imu)

    def tick():
        joints, imu = cm730_tick(now())
        joints_pub.publish(joints)
        imu_pub.publish(imu)

    node.create_timer(1.0 / rate, tick)


class FusionNode:
    def __init__(self, node: Node, raw_topic: str, out_topic: str, alpha: float, nominal_dt: float):
        self.state = FusionState(alpha=alpha)
        self.nominal_dt = nominal_dt
        self.pub = node.create_publisher(out_topic, Imu)
        node.create_subscription(raw_topic, Imu, self.on_raw)

    def on_raw(self, env: MessageEnvelope) -> None:
        raw = env.payload
        stamp = raw.header.stamp
        dt = (stamp.nanos - self.state.last_stamp.nanos) / 1e9 if self.state.last_stamp.nanos else 0.0
        if not 0.0 < dt < 1.0:
            dt = self.nominal_dt
        self.state = fusion_step(self.state, raw.angular_velocity, raw.linear_acceleration, dt, stamp)
        self.pub.publish(replace(raw, orientation=self.state.q, diag=type(raw.diag)()))


@node_kind("imu_fusion")
def imu_fusion_node(node: Node, spec: NodeSpec, topo: Topology):
    return FusionNode(
        node,
        spec.subscribes[0],
        spec.publishes[0],
        float(spec.params.get("alpha", 0.98)),
        1.0 / float(spec.params.get("rate_hz", 125.0)),
    )


@node_kind("head_controller")
def head_controller_node(node: Node, spec: NodeSpec, topo: Topology):
    gain = float(spec.params.get("gain", 1.0))
    pub = node.create_publisher(spec.publishes[0], JointState)

    def on_imu(env: MessageEnvelope):
        roll, pitch = roll_pitch(env.payload.orientation)
        pub.publish(JointState(Header(env.payload.header.stamp, "head"), ("head_pan", "head_tilt"), (-gain * roll, -gain * pitch)))

    node.create_subscription(spec.subscribes[0], Imu, on_imu)


class Monitor:
    def __init__(self, node: Node, topics: List[str], types: Dict[str, type]):
        self.counts = {t: 0 for t in topics}
        self.last: Dict[str, object] = {}
        for t in topics:
            node.create_subscription(t, types[t], functools.partial(self._on, t))

    def _on(self, topic: str, env: MessageEnvelope) -> None:
        self.counts[topic] += 1
        self.last[topic] = env.payload


@node_kind("monitor")
def monitor_node(node: Node, spec: NodeSpec, topo: Topology):
    from .core import PAYLOAD_TYPES

    return Monitor(node, spec.subscribes, {t: PAYLOAD_TYPES[topo.topic(t).type] for t in spec.subscribes})
