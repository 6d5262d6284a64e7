"""Declarative description of one benchmark scenario (schema ``topology_v1``).

A topology is stored as indented JSON and handed, by path, to every spawned node
process. The environment variable ``NGB_DOMAIN`` overrides the stored domain id at
load time.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .core import MAX_DOMAIN_ID, PAYLOAD_TYPES, QoSProfile, validate_topic_name
from .errors import ConfigInvalidError, NGBError
from .inter import SLOTS_PER_DOMAIN, TransportKind

SCHEMA = "topology_v1"


class Mode(str, enum.Enum):
    STANDALONE = "standalone"
    COMPOSED_NOIPC = "composed-noipc"
    COMPOSED_IPC = "composed-ipc"


class ExecutorKind(str, enum.Enum):
    SINGLE_THREADED = "single"
    MULTI_THREADED = "multi"


def default_threads() -> int:
    return max(1, min(os.cpu_count() or 1, 4))


@dataclass
class TopicSpec:
    name: str
    type: str
    qos: QoSProfile
    slot: int
    transport: TransportKind

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "type": self.type,
            "qos": self.qos.to_dict(),
            "slot": self.slot,
            "transport": self.transport.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TopicSpec":
        return cls(d["name"], d["type"], QoSProfile.from_dict(d["qos"]), int(d["slot"]), TransportKind(d["transport"]))


@dataclass
class NodeSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)
    publishes: List[str] = field(default_factory=list)
    subscribes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "params": dict(self.params),
            "publishes": list(self.publishes),
            "subscribes": list(self.subscribes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NodeSpec":
        return cls(d["name"], d["kind"], dict(d.get("params", {})), list(d.get("publishes", [])), list(d.get("subscribes", [])))


@dataclass
class Topology:
    scenario: str
    domain: int
    mode: Mode
    nodes: List[NodeSpec]
    topics: List[TopicSpec]
    ipc_topics: List[str] = field(default_factory=list)
    sample_target: int = 10000
    warmup_discard: int = 100
    executor: ExecutorKind = ExecutorKind.MULTI_THREADED
    threads: int = field(default_factory=default_threads)
    output_dir: Optional[str] = None
    # domains whose publishers also deliver to this domain's ports, as on a shared wire
    shared_segment_domains: List[int] = field(default_factory=list)
    stall_timeout_s: float = 10.0
    backpressure_timeout_s: float = 1.0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.executor = ExecutorKind(self.executor)

    # ------------------------------------------------------------ lookups

    def topic(self, name: str) -> TopicSpec:
        for t in self.topics:
            if t.name == name:
                return t
        raise ConfigInvalidError(f"topic {name!r} is not declared")

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise ConfigInvalidError(f"node {name!r} is not declared")

    def publishers_of(self, topic: str) -> List[str]:
        return [n.name for n in self.nodes if topic in n.publishes]

    def subscribers_of(self, topic: str) -> List[str]:
        return [n.name for n in self.nodes if topic in n.subscribes]

    # ------------------------------------------------------------ validation

    def validate(self) -> "Topology":
        def bad(msg):
            raise ConfigInvalidError(msg)

        if not 0 <= self.domain <= MAX_DOMAIN_ID:
            bad(f"domain {self.domain} outside [0, {MAX_DOMAIN_ID}]")
        for d in self.shared_segment_domains:
            if not 0 <= d <= MAX_DOMAIN_ID:
                bad(f"shared segment domain {d} outside [0, {MAX_DOMAIN_ID}]")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            bad(f"duplicate node names in {names}")
        seen = set()
        for t in self.topics:
            try:
                validate_topic_name(t.name)
            except NGBError as exc:
                bad(str(exc))
            if t.name in seen:
                bad(f"topic {t.name} declared twice")
            seen.add(t.name)
            if t.type not in PAYLOAD_TYPES:
                bad(f"topic {t.name} has unknown type {t.type!r}")
        slots = sorted(t.slot for t in self.topics)
        if slots != list(range(len(self.topics))):
            bad(f"topic slots must be dense from 0, got {slots}")
        if len(self.topics) > SLOTS_PER_DOMAIN:
            bad(f"at most {SLOTS_PER_DOMAIN} topics per domain")
        for n in self.nodes:
            for t in n.publishes + n.subscribes:
                if t not in seen:
                    bad(f"node {n.name} uses undeclared topic {t}")
        for t in self.ipc_topics:
            if t not in seen:
                bad(f"ipc topic {t} is not declared")
        if self.sample_target < 1:
            bad("sample_target must be >= 1")
        if self.warmup_discard < 0:
            bad("warmup_discard must be >= 0")
        if self.threads < 1:
            bad("threads must be >= 1")
        return self

    # ------------------------------------------------------------ io

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "scenario": self.scenario,
            "domain": self.domain,
            "mode": self.mode.value,
            "executor": self.executor.value,
            "threads": self.threads,
            "sample_target": self.sample_target,
            "warmup_discard": self.warmup_discard,
            "stall_timeout_s": self.stall_timeout_s,
            "backpressure_timeout_s": self.backpressure_timeout_s,
            "ipc_topics": list(self.ipc_topics),
            "shared_segment_domains": list(self.shared_segment_domains),
            "output_dir": self.output_dir,
            "topics": [t.to_dict() for t in self.topics],
            "nodes": [n.to_dict() for n in self.nodes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        if d.get("schema") != SCHEMA:
            raise ConfigInvalidError(f"unsupported topology schema {d.get('schema')!r}, expected {SCHEMA!r}")
        try:
            topo = cls(
                scenario=d["scenario"],
                domain=int(d["domain"]),
                mode=Mode(d["mode"]),
                nodes=[NodeSpec.from_dict(n) for n in d["nodes"]],
                topics=[TopicSpec.from_dict(t) for t in d["topics"]],
                ipc_topics=list(d.get("ipc_topics", [])),
                sample_target=int(d.get("sample_target", 10000)),
                warmup_discard=int(d.get("warmup_discard", 100)),
                executor=ExecutorKind(d.get("executor", "multi")),
                threads=int(d.get("threads", default_threads())),
                output_dir=d.get("output_dir"),
                shared_segment_domains=[int(x) for x in d.get("shared_segment_domains", [])],
                stall_timeout_s=float(d.get("stall_timeout_s", 10.0)),
                backpressure_timeout_s=float(d.get("backpressure_timeout_s", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalidError(f"bad topology: {exc!r}") from exc
        return topo.validate()

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def load_topology(path, env: Optional[Dict[str, str]] = None) -> Topology:
    env = os.environ if env is None else env
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalidError(f"cannot read topology {path}: {exc}") from exc
    if env.get("NGB_DOMAIN"):
        try:
            data["domain"] = int(env["NGB_DOMAIN"])
        except ValueError:
            raise ConfigInvalidError(f"NGB_DOMAIN={env['NGB_DOMAIN']!r} is not an integer") from None
    return Topology.from_dict(data)
