import csv
import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from ngb.bench.cli import main
from ngb.bench.report import (
    LatencySample,
    build_report,
    compare,
    emit,
    emit_all,
    load_report,
    plot_data,
    read_plotdata,
)
from ngb.bench.stats import compute_stats, nearest_rank
from ngb.core import Time
from ngb.errors import EmptyInputError, IOFailedError, ScenarioMismatchError


def oracle(values, p):
    s = sorted(values)
    # integer-only rank: ceil(p * n / 100)
    k = -(-p * len(s) // 100)
    return s[max(k, 1) - 1]


def test_small_examples():
    st_ = compute_stats([3, 1, 2])
    assert (st_.min, st_.median, st_.max) == (1, 2, 3)
    assert compute_stats([1, 2, 3, 4]).median == 2
    assert compute_stats([5]).p99 == 5
    assert compute_stats([2, 4]).stddev == 1.0
    with pytest.raises(EmptyInputError):
        compute_stats([])


def test_percentiles_match_sort_and_index_oracle():
    rng = random.Random(11)
    for n in (1, 2, 3, 7, 100, 1000, 10000):
        values = [rng.randint(0, 10**9) for _ in range(n)]
        st_ = compute_stats(values)
        for name, p in (("p5", 5), ("p25", 25), ("median", 50), ("p75", 75), ("p95", 95), ("p99", 99)):
            assert getattr(st_, name) == oracle(values, p), (n, name)
        assert st_.min == min(values) and st_.max == max(values)
        mean = sum(values) / n
        assert st_.mean == pytest.approx(mean)
        assert st_.stddev == pytest.approx(math.sqrt(sum((v - mean) ** 2 for v in values) / n))


@given(st.lists(st.integers(-10**12, 10**12), min_size=1, max_size=300), st.integers(0, 100))
def test_nearest_rank_property(values, p):
    assert nearest_rank(sorted(values), p) == oracle(values, p)


def samples(latencies, start=0, copies=0, domain=0):
    return [LatencySample(start + i, Time(1_000_000), Time(1_000_000 + v), copies, domain) for i, v in enumerate(latencies)]


def report(mode, median_ms, scenario="case1", spread_ms=1.0, n=200):
    rng = random.Random(mode)
    lat = [int((median_ms + rng.uniform(-spread_ms, spread_ms)) * 1e6) for _ in range(n)]
    return build_report(scenario, mode, samples(lat), 0, {"mode": mode})


def test_build_report_warmup_and_anomalies():
    lat = [5] * 10 + [-1, 7, 8]
    r = build_report("case1", "standalone", samples(lat), warmup=10, config={})
    assert r.discarded_warmup == 10
    assert r.clock_anomalies == 1
    assert r.sample_count == 2
    assert r.stats["min"] == 7
    with pytest.raises(EmptyInputError):
        build_report("case1", "standalone", samples([1, 2]), warmup=5, config={})


def test_copy_summary():
    r = build_report("case1", "composed-noipc", samples([1, 2, 3], copies=1), 0, {})
    assert r.copies == {"deliveries": 3, "total_deep_copies": 3, "min_per_delivery": 1, "max_per_delivery": 1}


def test_compare_uses_both_bases():
    base = build_report("case1", "standalone", samples([28_700_000]), 0, {})
    ipc = build_report("case1", "composed-ipc", samples([20_700_000]), 0, {})
    cmp = compare([base, ipc])
    row = cmp.row("composed-ipc")
    assert round(100 * row.change_vs_standalone, 1) == -27.9
    assert round(100 * row.standalone_excess_over_mode, 1) == 38.6
    assert cmp.ipc_le_standalone is True and cmp.ipc_le_noipc is None
    text = cmp.format()
    assert "-27.9%" in text and "+38.6%" in text


def test_compare_identical_and_inverted():
    same = [report("standalone", 10), report("composed-ipc", 10)]
    same[1].stats = dict(same[0].stats)
    cmp = compare(same)
    assert cmp.row("composed-ipc").change_vs_standalone == 0.0
    assert cmp.ordering_holds
    bad = compare([report("standalone", 10), report("composed-noipc", 12), report("composed-ipc", 14)])
    assert bad.ipc_le_standalone is False and not bad.ordering_holds


def test_compare_errors():
    with pytest.raises(ScenarioMismatchError):
        compare([report("standalone", 10, "case1"), report("composed-ipc", 9, "case2")])
    with pytest.raises(ValueError):
        compare([report("standalone", 10)])


def test_emit_files(tmp_path):
    lat = list(range(1000, 1100))
    r = build_report("case1", "composed-ipc", samples(lat), 0, {"width": 640})
    paths = emit_all(r, tmp_path)
    lines = paths["csv"].read_text().splitlines()
    assert len(lines) == 101 and lines[0] == "seq,latency_ns"
    d = json.loads(paths["json"].read_text())
    for key in ("scenario", "mode", "sample_count", "discarded_warmup", "clock_anomalies", "stats", "config",
                "environment", "copies"):
        assert key in d
    for key in ("min", "p5", "p25", "median", "p75", "p95", "p99", "max", "mean", "stddev"):
        assert key in d["stats"]
    for key in ("host", "cpu_count", "timestamp"):
        assert key in d["environment"]
    assert load_report(paths["json"]) == r


def test_plotdata_recount(tmp_path):
    rng = random.Random(3)
    lat = [int(rng.lognormvariate(16, 0.3)) for _ in range(5000)]
    r = build_report("case1", "standalone", samples(lat), 0, {})
    path = emit(r, "plotdata", tmp_path / "plotdata.txt")
    pd = read_plotdata(path)
    assert len(pd["bins"]) == 100
    raw = [int(row["latency_ns"]) for row in csv.DictReader(open(emit(r, "csv", tmp_path / "s.csv")))]
    lo, hi = nearest_rank(sorted(raw), 1), nearest_rank(sorted(raw), 99)
    assert sum(c for _, _, c in pd["bins"]) == sum(1 for v in raw if lo <= v <= hi)
    assert pd["boxplot"]["median"] == r.stats["median"]


def test_plot_data_degenerate():
    pd = plot_data([7, 7, 7])
    assert sum(pd["counts"]) == 3


def test_emit_io_failure(tmp_path):
    r = report("standalone", 1)
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IOFailedError):
        emit(r, "json", blocker / "report.json")


# ---------------------------------------------------------------- CLI


def _write_reports(base, medians):
    for mode, med in medians.items():
        r = report(mode, med)
        emit_all(r, base / f"case1-{mode}")


def test_cli_compare_ok(tmp_path, capsys):
    _write_reports(tmp_path, {"standalone": 30, "composed-noipc": 25, "composed-ipc": 20})
    assert main(["compare", str(tmp_path), "--assert-ordering"]) == 0
    out = capsys.readouterr().out
    assert "composed-ipc" in out and "standalone excess" in out


def test_cli_compare_assertion_failure(tmp_path):
    _write_reports(tmp_path, {"standalone": 10, "composed-ipc": 20})
    assert main(["compare", str(tmp_path)]) == 0
    assert main(["compare", str(tmp_path), "--assert-ordering"]) == 2


def test_cli_runtime_errors(tmp_path):
    assert main(["compare", str(tmp_path)]) == 3
    assert main(["stats", str(tmp_path / "missing.csv")]) == 3
    assert main(["run", "--case", "1", "--mode", "standalone", "--samples", "0", "--out", str(tmp_path)]) == 3


def test_cli_stats(tmp_path, capsys):
    r = build_report("case1", "standalone", samples([1, 2, 3, 4]), 0, {})
    path = emit(r, "csv", tmp_path / "s.csv")
    assert main(["stats", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["median"] == 2
