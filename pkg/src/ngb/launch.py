"""Turn a topology into running nodes.

Every node process is started as ``python -m ngb.launch TOPOLOGY [--node NAME]``:
with ``--node`` the process hosts that single node (stand-alone mode), without it the
process hosts every node of the topology in one container (composed modes).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConfigInvalidError, NGBError, SpawnFailedError
from .gamecontroller import gc_bridge_node
from .nodes import NODE_KINDS
from .runtime import Container, Node
from .topology import Mode, Topology, load_topology

log = logging.getLogger("ngb.launch")

NODE_KINDS.setdefault("gc_bridge", gc_bridge_node)

EXIT_OK = 0
EXIT_ERROR = 3


def build_container(topo: Topology, node_names: Optional[Sequence[str]] = None) -> Tuple[Container, Dict[str, object]]:
    """Instantiate the named nodes (default: all) in one container wired per ``topo``."""
    specs = [topo.node(n) for n in node_names] if node_names else list(topo.nodes)
    nodes, impls = [], {}
    for spec in specs:
        try:
            factory = NODE_KINDS[spec.kind]
        except KeyError:
            raise ConfigInvalidError(f"node {spec.name} has unknown kind {spec.kind!r}") from None
        node = Node(spec.name)
        impls[spec.name] = factory(node, spec, topo)
        nodes.append(node)
    container = Container(nodes, topo.executor, topo.threads, topo.ipc_topics, topo.mode, topo)
    container.wire()
    return container, impls


def run_nodes(topo: Topology, node_names: Optional[Sequence[str]] = None, label: str = "container") -> int:
    """Host nodes in this process until they finish or a signal arrives. Returns the exit status."""
    container, _ = build_container(topo, node_names)

    def on_signal(signum, _frame):
        container.shutdown(0)

    previous = {s: signal.signal(s, on_signal) for s in (signal.SIGTERM, signal.SIGINT)}
    try:
        container.spin()
    except Exception as exc:
        log.error("%s: container failed: %r", label, exc)
        return container.exit_status or EXIT_ERROR
    finally:
        for s, h in previous.items():
            signal.signal(s, h)
        if topo.output_dir:
            out = Path(topo.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"counters-{label}.json").write_text(json.dumps(container.counters(), indent=2) + "\n")
    return container.exit_status


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="ngb-node", description="Host one node (or all nodes) of a topology.")
    ap.add_argument("topology", help="path to a topology_v1 file")
    ap.add_argument("--node", help="host only this node (stand-alone mode)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=os.environ.get("NGB_LOG", "WARNING"), format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        topo = load_topology(args.topology)
        names = [args.node] if args.node else None
        return run_nodes(topo, names, label=args.node or "container")
    except NGBError as exc:
        log.error("%s", exc)
        return EXIT_ERROR


# --------------------------------------------------------------------------- spawning


@dataclass
class NodeProcess:
    name: str
    popen: subprocess.Popen
    log_path: Optional[Path] = None

    def poll(self) -> Optional[int]:
        return self.popen.poll()

    def terminate(self, grace: float = 5.0) -> Optional[int]:
        if self.popen.poll() is None:
            self.popen.send_signal(signal.SIGTERM)
            try:
                self.popen.wait(grace)
            except subprocess.TimeoutExpired:
                self.popen.kill()
                self.popen.wait()
        return self.popen.returncode

    def kill(self) -> None:
        if self.popen.poll() is None:
            self.popen.kill()
            self.popen.wait()


def _spawn(name: str, args: List[str], log_dir: Optional[Path], env: Optional[dict]) -> NodeProcess:
    cmd = [sys.executable, "-m", "ngb.launch", *args]
    log_path = None
    stderr = subprocess.DEVNULL
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"{name}.log"
        stderr = open(log_path, "w")
    full_env = dict(os.environ)
    src = str(Path(__file__).resolve().parent.parent)
    full_env["PYTHONPATH"] = os.pathsep.join(p for p in (src, full_env.get("PYTHONPATH")) if p)
    if env:
        full_env.update(env)
    try:
        popen = subprocess.Popen(cmd, stdin=subprocess.DEVNULL, stdout=subprocess.DEVNULL, stderr=stderr, env=full_env)
    except OSError as exc:
        raise SpawnFailedError(f"cannot start {name}: {exc}") from exc
    finally:
        if stderr is not subprocess.DEVNULL:
            stderr.close()
    return NodeProcess(name, popen, log_path)


def launch_standalone(topo: Topology, topology_path, log_dir=None, env: Optional[dict] = None) -> List[NodeProcess]:
    """One OS process per node. Subscribing nodes start first so their ports are bound early."""
    if topo.mode is not Mode.STANDALONE:
        raise ConfigInvalidError(f"launch_standalone needs mode standalone, topology says {topo.mode.value}")
    order = sorted(topo.nodes, key=lambda n: 0 if n.subscribes else 1)
    procs = []
    try:
        for spec in order:
            procs.append(_spawn(spec.name, [str(topology_path), "--node", spec.name], _as_path(log_dir), env))
    except SpawnFailedError:
        for p in procs:
            p.kill()
        raise
    return procs


def launch_composed(topo: Topology, topology_path, log_dir=None, env: Optional[dict] = None) -> List[NodeProcess]:
    """A single container process hosting every node."""
    if topo.mode is Mode.STANDALONE:
        raise ConfigInvalidError("launch_composed needs a composed mode")
    return [_spawn("container", [str(topology_path)], _as_path(log_dir), env)]


def _as_path(p) -> Optional[Path]:
    return None if p is None else Path(p)


if __name__ == "__main__":
    sys.exit(main())
