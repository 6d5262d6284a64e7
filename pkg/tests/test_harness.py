"""Multi-process runs at small sizes. These spawn real node processes."""

import json
import time

import pytest

from ngb.bench.cli import main
from ngb.bench.harness import read_sink_samples, run_case, run_isolation, start, supervise
from ngb.errors import BenchTimeoutError
from ngb.scenarios import CaseConfig, case_topology
from ngb.topology import Mode

pytestmark = pytest.mark.slow


def small(domain, **kw):
    base = dict(width=64, height=48, fps=60.0, warmup=10, domain=domain, gc_port=38000 + domain)
    base.update(kw)
    return CaseConfig(**base)


def test_case1_ipc_small_run(tmp_path):
    r = run_case(1, "composed-ipc", 100, small(200), out=tmp_path)
    assert r.sample_count == 100 and r.discarded_warmup == 10
    assert r.copies["total_deep_copies"] == 0
    assert r.topology["processes"] == 1
    run_dir = tmp_path / "case1-composed-ipc"
    for name in ("report.json", "samples.csv", "plotdata.txt", "topology.json"):
        assert (run_dir / name).exists()
    assert len((run_dir / "samples.csv").read_text().splitlines()) == 101


def test_case1_standalone_spawns_two_processes(tmp_path):
    r = run_case(1, "standalone", 50, small(201), out=tmp_path)
    assert r.topology["processes"] == 2
    assert r.copies["min_per_delivery"] >= 1
    assert r.config["mode"] == "standalone"


def test_case2_standalone_spawns_seven_processes(tmp_path):
    r = run_case(2, "standalone", 50, small(202), out=tmp_path)
    assert r.topology["processes"] == 7
    assert len(r.topology["nodes"]) == 7 and len(r.topology["topics"]) == 7
    assert r.copies["min_per_delivery"] >= 1


def test_case2_ipc_zero_copy(tmp_path):
    r = run_case(2, "composed-ipc", 50, small(203), out=tmp_path)
    assert r.copies["total_deep_copies"] == 0
    counters = r.counters["container"]
    assert counters["reentry_violations"] == 0


def test_config_echo_is_deterministic(tmp_path):
    a = run_case(1, "composed-noipc", 20, small(204), out=tmp_path / "a")
    b = run_case(1, "composed-noipc", 20, small(204), out=tmp_path / "b")
    assert a.config == b.config


def test_killed_camera_ends_as_timeout_with_partial_samples(tmp_path):
    topo = case_topology(1, Mode.STANDALONE, 10**6, small(205, stall_timeout_s=1.5), output_dir=str(tmp_path))
    handle = start(topo, tmp_path)
    time.sleep(3.0)
    camera = next(p for p in handle.procs if p.name == "camera")
    camera.kill()
    with pytest.raises(BenchTimeoutError) as exc:
        supervise(handle, deadline_s=30)
    assert exc.value.partial_samples
    assert read_sink_samples(tmp_path) == exc.value.partial_samples
    assert json.loads((tmp_path / "sink_status.json").read_text())["status"] == "timeout"


def test_deadline_timeout_preserves_samples(tmp_path):
    with pytest.raises(BenchTimeoutError) as exc:
        run_case(1, "composed-ipc", 10**6, small(206), out=tmp_path, deadline_s=3)
    assert exc.value.partial_samples


def test_short_isolation_run(tmp_path):
    results = run_isolation(3.0, domains=(207, 208), out=tmp_path, cfg=small(0))
    for r in results:
        assert r.surfaced > 0
        assert r.cross_domain_surfaced == 0
        assert r.wrong_domain_dropped > 0


def test_cli_run_and_compare(tmp_path, capsys):
    common = ["--case", "1", "--samples", "30", "--width", "64", "--height", "48", "--fps", "60",
              "--warmup", "5", "--domain", "209", "--out", str(tmp_path)]
    assert main(["run", "--mode", "composed-ipc", *common]) == 0
    assert main(["run", "--mode", "composed-noipc", *common]) == 0
    out = capsys.readouterr().out
    assert "deep copies=0" in out
    assert main(["compare", str(tmp_path)]) == 0
    assert main(["stats", str(tmp_path / "case1-composed-ipc" / "samples.csv")]) == 0
