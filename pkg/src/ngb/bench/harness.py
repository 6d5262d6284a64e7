"""Run benchmark cases as child processes and turn their sample files into reports."""

from __future__ import annotations

import csv
import json
import logging
import shutil
import socket
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..core import GamePhase, GameState, TeamInfo, Time
from ..errors import BenchTimeoutError, ConfigInvalidError, SpawnFailedError
from ..gamecontroller import encode_gc_packet
from ..launch import EXIT_ERROR, NodeProcess, launch_composed, launch_standalone
from ..nodes import EXIT_TIMEOUT
from ..scenarios import CaseConfig, case_topology
from ..topology import Mode, Topology
from .report import BenchReport, LatencySample, build_report, emit_all

log = logging.getLogger(__name__)

SINK_NODE = "sobel"
_POLL = 0.1


def read_sink_samples(run_dir) -> List[LatencySample]:
    path = Path(run_dir) / "sink_samples.csv"
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return [
            LatencySample(int(r["seq"]), Time(int(r["capture_ns"])), Time(int(r["done_ns"])),
                          int(r["deep_copy_count"]), int(r["domain"]))
            for r in csv.DictReader(fh)
        ]


def read_counters(run_dir) -> Dict[str, dict]:
    return {
        p.stem.removeprefix("counters-"): json.loads(p.read_text())
        for p in sorted(Path(run_dir).glob("counters-*.json"))
    }


def config_echo(topo: Topology) -> dict:
    cam = topo.node("camera").params
    return {
        "case": topo.scenario,
        "mode": topo.mode.value,
        "width": cam["width"],
        "height": cam["height"],
        "fps": cam["fps"],
        "seed": cam["seed"],
        "image_qos": topo.topic("/image_raw").qos.to_dict(),
        "executor": topo.executor.value,
        "threads": topo.threads,
        "samples": topo.sample_target,
        "warmup": topo.warmup_discard,
        "domain": topo.domain,
        "nodes": len(topo.nodes),
        "topics": len(topo.topics),
        "ipc_topics": list(topo.ipc_topics),
    }


class _GameControllerDouble:
    """Stands in for the referee: one packet per interval, cycling through the game phases."""

    def __init__(self, port: int, interval: float = 0.5):
        self.port = port
        self.interval = interval
        self.sent = 0
        self._next = 0.0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def tick(self) -> None:
        now = time.monotonic()
        if now < self._next:
            return
        self._next = now + self.interval
        state = GameState(
            packet_number=self.sent % 256,
            players_per_team=4,
            state=GamePhase(min(self.sent // 4, int(GamePhase.PLAYING))),
            first_half=True,
            secs_remaining=600 - self.sent % 600,
            teams=(TeamInfo(1, 0, 0, 0), TeamInfo(2, 1, 0, 0)),
        )
        self._sock.sendto(encode_gc_packet(state), ("127.0.0.1", self.port))
        self.sent += 1

    def close(self) -> None:
        self._sock.close()


def _tail(path: Optional[Path], n: int = 15) -> str:
    if path is None or not path.exists():
        return ""
    return "\n".join(path.read_text(errors="replace").splitlines()[-n:])


@dataclass
class RunHandle:
    """Processes of one launched topology."""

    topology: Topology
    run_dir: Path
    procs: List[NodeProcess]
    sink: NodeProcess

    def others(self) -> List[NodeProcess]:
        return [p for p in self.procs if p is not self.sink]

    def stop(self) -> None:
        # sink first so its partial samples are flushed while its peers are still up
        self.sink.terminate()
        for p in self.others():
            p.terminate()


def prepare_run(topo: Topology, run_dir: Path) -> Path:
    run_dir.mkdir(parents=True, exist_ok=True)
    for stale in ("sink_samples.csv", "sink_status.json", "report.json", "samples.csv", "plotdata.txt"):
        (run_dir / stale).unlink(missing_ok=True)
    for stale in run_dir.glob("counters-*.json"):
        stale.unlink()
    return topo.save(run_dir / "topology.json")


def start(topo: Topology, run_dir: Path) -> RunHandle:
    path = prepare_run(topo, run_dir)
    logs = run_dir / "logs"
    if topo.mode is Mode.STANDALONE:
        procs = launch_standalone(topo, path, logs)
        sink = next(p for p in procs if p.name == SINK_NODE)
    else:
        procs = launch_composed(topo, path, logs)
        sink = procs[0]
    return RunHandle(topo, run_dir, procs, sink)


def supervise(handle: RunHandle, deadline_s: float, gc_port: Optional[int] = None) -> BenchReport:
    """Wait for the sink of a started run to finish and build its report.

    A peer that fails at startup (exit status 3) aborts the run. A peer that dies any
    other way, e.g. killed mid-run, is left for the sink's stall timer to notice, so
    the run ends as TIMEOUT with the samples gathered so far.
    """
    topo, run_dir = handle.topology, handle.run_dir
    gc = _GameControllerDouble(gc_port) if gc_port is not None else None
    t_end = time.monotonic() + deadline_s
    reported = set()
    try:
        while True:
            rc = handle.sink.poll()
            if rc is not None:
                break
            for p in handle.others():
                prc = p.poll()
                if prc == EXIT_ERROR:
                    handle.stop()
                    raise SpawnFailedError(f"node {p.name} failed with status {prc}\n{_tail(p.log_path)}")
                if prc is not None and p.name not in reported:
                    reported.add(p.name)
                    log.warning("node %s exited with status %s before the sink finished", p.name, prc)
            if time.monotonic() > t_end:
                handle.stop()
                raise BenchTimeoutError(
                    f"sink did not reach {topo.sample_target} samples within {deadline_s:.0f} s",
                    partial_samples=read_sink_samples(run_dir),
                )
            if gc is not None:
                gc.tick()
            time.sleep(_POLL)
    finally:
        if gc is not None:
            gc.close()
    handle.stop()
    if rc == EXIT_TIMEOUT:
        raise BenchTimeoutError("sink stalled: no frames arrived", partial_samples=read_sink_samples(run_dir))
    if rc != 0:
        raise SpawnFailedError(f"sink exited with status {rc}\n{_tail(handle.sink.log_path)}")

    samples = read_sink_samples(run_dir)
    report = build_report(
        topo.scenario,
        topo.mode.value,
        samples,
        topo.warmup_discard,
        config_echo(topo),
        topology={"nodes": [n.name for n in topo.nodes], "topics": [t.name for t in topo.topics],
                  "processes": len(handle.procs)},
        counters=read_counters(run_dir),
    )
    emit_all(report, run_dir)
    return report


def run_topology(topo: Topology, run_dir: Path, deadline_s: float, gc_port: Optional[int] = None) -> BenchReport:
    """Launch ``topo``, wait for the sink to collect its samples and build the report."""
    return supervise(start(topo, run_dir), deadline_s, gc_port)


def default_deadline(samples: int, cfg: CaseConfig) -> float:
    return 60.0 + 3.0 * (samples + cfg.warmup) / cfg.fps


def run_case(case: int, mode, samples: int, cfg: Optional[CaseConfig] = None, out=None,
             deadline_s: Optional[float] = None) -> BenchReport:
    """Run Case 1 or 2 in one execution mode until ``samples`` post-warmup samples exist.

    Results land in ``out/case{case}-{mode}/`` (report.json, samples.csv, plotdata.txt).
    """
    if samples < 1:
        raise ConfigInvalidError("samples must be >= 1")
    cfg = cfg or CaseConfig()
    mode = Mode(mode)
    base = Path(out) if out is not None else Path(tempfile.mkdtemp(prefix="ngb-"))
    run_dir = base / f"case{case}-{mode.value}"
    topo = case_topology(case, mode, samples, cfg, output_dir=str(run_dir))
    return run_topology(
        topo,
        run_dir,
        deadline_s if deadline_s is not None else default_deadline(samples, cfg),
        gc_port=cfg.gc_port if case == 2 else None,
    )


# --------------------------------------------------------------------------- domain isolation


@dataclass
class IsolationResult:
    domain: int
    surfaced: int
    cross_domain_surfaced: int
    wrong_domain_dropped: int
    counters: dict = field(default_factory=dict)


def run_isolation(duration_s: float = 10.0, domains: Sequence[int] = (0, 1), out=None,
                  cfg: Optional[CaseConfig] = None) -> List[IsolationResult]:
    """Two or more stand-alone Case-1 stacks, identical topic names, sharing one wire.

    Each camera also delivers its frames to the other stacks' ports, so every sink
    sees foreign-domain traffic. Only its own domain's frames may be surfaced.
    """
    cfg = cfg or CaseConfig()
    base = Path(out) if out is not None else Path(tempfile.mkdtemp(prefix="ngb-iso-"))
    handles = []
    try:
        for d in domains:
            run_dir = base / f"domain{d}"
            topo = case_topology(1, Mode.STANDALONE, 10**9, replace(cfg, domain=d, warmup=0,
                                                                   stall_timeout_s=duration_s + 60.0),
                                 output_dir=str(run_dir))
            topo.shared_segment_domains = [x for x in domains if x != d]
            handles.append(start(topo, run_dir))
        t_end = time.monotonic() + duration_s
        while time.monotonic() < t_end:
            for h in handles:
                for p in h.procs:
                    if p.poll() is not None:
                        raise SpawnFailedError(f"domain {h.topology.domain}: {p.name} exited with {p.poll()}\n{_tail(p.log_path)}")
            time.sleep(_POLL)
    finally:
        for h in handles:
            h.stop()

    results = []
    for h in handles:
        d = h.topology.domain
        samples = read_sink_samples(h.run_dir)
        counters = read_counters(h.run_dir)
        ep = counters.get(SINK_NODE, {}).get("endpoints", {}).get("/image_raw", {})
        results.append(
            IsolationResult(
                domain=d,
                surfaced=len(samples),
                cross_domain_surfaced=sum(1 for s in samples if s.domain != d),
                wrong_domain_dropped=int(ep.get("wrong_domain", 0)),
                counters=counters,
            )
        )
    return results


def clean(out) -> None:
    shutil.rmtree(out, ignore_errors=True)
