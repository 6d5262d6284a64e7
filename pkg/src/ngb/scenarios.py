"""The two benchmark node graphs.

Case 1 is camera -> Sobel sink. Case 2 adds the CM-730 simulator, IMU fusion, a head
controller, a monitor and the GameController bridge: 7 nodes on 7 topics. Only the
camera, processor, CM-730 and fusion nodes are named by the original experiment; the
remaining three are a reconstruction chosen to reach its node and topic counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import QoSProfile, Reliability, reliable_qos, sensor_qos
from .errors import ConfigInvalidError
from .gamecontroller import DEFAULT_GC_PORT
from .inter import TransportKind
from .topology import ExecutorKind, Mode, NodeSpec, TopicSpec, Topology, default_threads

IMAGE_TOPIC = "/image_raw"

TCP = TransportKind.TCP_RELIABLE
UDP = TransportKind.UDP_BEST_EFFORT


@dataclass
class CaseConfig:
    width: int = 640
    height: int = 480
    fps: float = 30.0
    image_qos: Reliability = Reliability.RELIABLE
    threads: Optional[int] = None
    seed: int = 0
    domain: int = 0
    gc_port: int = DEFAULT_GC_PORT
    warmup: int = 100
    executor: ExecutorKind = ExecutorKind.MULTI_THREADED
    stall_timeout_s: float = 10.0

    def image_profile(self) -> QoSProfile:
        return reliable_qos() if Reliability(self.image_qos) is Reliability.RELIABLE else sensor_qos()


def case_topology(case: int, mode, samples: int, cfg: Optional[CaseConfig] = None,
                  output_dir: Optional[str] = None) -> Topology:
    cfg = cfg or CaseConfig()
    mode = Mode(mode)
    if case not in (1, 2):
        raise ConfigInvalidError(f"unknown case {case}; expected 1 or 2")
    if cfg.width < 3 or cfg.height < 3 or cfg.fps <= 0:
        raise ConfigInvalidError("image must be at least 3x3 and fps positive")

    camera = NodeSpec(
        "camera", "camera",
        {"width": cfg.width, "height": cfg.height, "fps": cfg.fps, "seed": cfg.seed},
        publishes=[IMAGE_TOPIC],
    )
    topics = [TopicSpec(IMAGE_TOPIC, "Image", cfg.image_profile(), 0, TCP)]

    if case == 1:
        nodes = [camera, NodeSpec("sobel", "sobel_sink", subscribes=[IMAGE_TOPIC])]
    else:
        topics += [
            TopicSpec("/image_gradient", "Image", reliable_qos(), 1, TCP),
            TopicSpec("/joint_states", "JointState", sensor_qos(), 2, UDP),
            TopicSpec("/imu/raw", "Imu", sensor_qos(), 3, UDP),
            TopicSpec("/imu/data", "Imu", sensor_qos(), 4, UDP),
            TopicSpec("/cmd_head", "JointState", reliable_qos(), 5, TCP),
            TopicSpec("/game_state", "GameState", reliable_qos(), 6, TCP),
        ]
        nodes = [
            camera,
            NodeSpec("sobel", "sobel_sink", publishes=["/image_gradient"], subscribes=[IMAGE_TOPIC]),
            NodeSpec("cm730", "cm730", {"rate_hz": 125.0}, publishes=["/joint_states", "/imu/raw"]),
            NodeSpec("imu_fusion", "imu_fusion", {"alpha": 0.98, "rate_hz": 125.0},
                     publishes=["/imu/data"], subscribes=["/imu/raw"]),
            NodeSpec("head_controller", "head_controller", {"gain": 1.0},
                     publishes=["/cmd_head"], subscribes=["/imu/data"]),
            NodeSpec("monitor", "monitor", subscribes=["/image_gradient", "/cmd_head", "/game_state"]),
            NodeSpec("gc_bridge", "gc_bridge", {"port": cfg.gc_port}, publishes=["/game_state"]),
        ]

    return Topology(
        scenario=f"case{case}",
        domain=cfg.domain,
        mode=mode,
        nodes=nodes,
        topics=topics,
        ipc_topics=[IMAGE_TOPIC] if mode is Mode.COMPOSED_IPC else [],
        sample_target=samples,
        warmup_discard=cfg.warmup,
        executor=cfg.executor,
        threads=cfg.threads or default_threads(),
        output_dir=output_dir,
        stall_timeout_s=cfg.stall_timeout_s,
    ).validate()
