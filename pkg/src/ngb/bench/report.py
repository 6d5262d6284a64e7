"""Latency samples, per-run reports, cross-mode comparison and report files."""

from __future__ import annotations

import csv
import json
import os
import platform
import socket
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from ..core import Time
from ..errors import EmptyInputError, IOFailedError, ScenarioMismatchError
from .stats import Stats, compute_stats, nearest_rank

MODES = ("standalone", "composed-noipc", "composed-ipc")
HIST_BINS = 100


@dataclass(frozen=True)
class LatencySample:
    seq: int
    capture_stamp: Time
    done_stamp: Time
    deep_copy_count: int = 0
    domain: int = 0

    @property
    def latency_ns(self) -> int:
        return self.done_stamp.nanos - self.capture_stamp.nanos

    @property
    def anomalous(self) -> bool:
        """Negative latency means the wall clock stepped; such samples are excluded from stats."""
        return self.latency_ns < 0


@dataclass
class BenchReport:
    scenario: str
    mode: str
    sample_count: int
    discarded_warmup: int
    clock_anomalies: int
    stats: Dict[str, float]
    config: Dict[str, object]
    environment: Dict[str, object]
    copies: Dict[str, int] = field(default_factory=dict)
    topology: Dict[str, object] = field(default_factory=dict)
    counters: Dict[str, object] = field(default_factory=dict)
    status: str = "complete"
    samples: List[LatencySample] = field(default_factory=list, repr=False, compare=False)

    @property
    def median(self) -> int:
        return int(self.stats["median"])

    @property
    def iqr(self) -> int:
        return int(self.stats["p75"] - self.stats["p25"])

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        d = dict(d)
        d.pop("samples", None)
        return cls(**d)


def environment_info() -> dict:
    return {
        "host": socket.gethostname(),
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
        "platform": platform.platform(),
        "timestamp": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    }


def build_report(scenario: str, mode: str, samples: Sequence[LatencySample], warmup: int,
                 config: dict, **extra) -> BenchReport:
    """Drop the first ``warmup`` samples (arrival order), flag clock anomalies, summarize the rest."""
    discarded = min(warmup, len(samples))
    kept = list(samples[discarded:])
    valid = [s.latency_ns for s in kept if not s.anomalous]
    if not valid:
        raise EmptyInputError(f"{scenario}/{mode}: no usable samples after warmup")
    copies = [s.deep_copy_count for s in samples]
    return BenchReport(
        scenario=scenario,
        mode=mode,
        sample_count=len(valid),
        discarded_warmup=discarded,
        clock_anomalies=len(kept) - len(valid),
        stats=compute_stats(valid).to_dict(),
        config=config,
        environment=environment_info(),
        copies={
            "deliveries": len(copies),
            "total_deep_copies": sum(copies),
            "min_per_delivery": min(copies),
            "max_per_delivery": max(copies),
        },
        samples=kept,
        **extra,
    )


# --------------------------------------------------------------------------- comparison


@dataclass
class ModeRow:
    mode: str
    median_ns: int
    iqr_ns: int
    change_vs_standalone: Optional[float]
    standalone_excess_over_mode: Optional[float]
    iqr_ratio_vs_standalone: Optional[float]


@dataclass
class Comparison:
    scenario: str
    rows: List[ModeRow]
    ipc_le_noipc: Optional[bool]
    ipc_le_standalone: Optional[bool]

    @property
    def ordering_holds(self) -> bool:
        flags = [f for f in (self.ipc_le_noipc, self.ipc_le_standalone) if f is not None]
        return bool(flags) and all(flags)

    def row(self, mode: str) -> Optional[ModeRow]:
        return next((r for r in self.rows if r.mode == mode), None)

    def format(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:+.1f}%"

        def ratio(v):
            return "n/a" if v is None else f"{v:.3f}"

        lines = [
            f"scenario {self.scenario}",
            f"{'mode':<16}{'median ms':>11}{'IQR ms':>10}{'vs standalone':>15}{'standalone excess':>19}{'IQR ratio':>11}",
        ]
        for r in self.rows:
            lines.append(
                f"{r.mode:<16}{r.median_ns / 1e6:>11.3f}{r.iqr_ns / 1e6:>10.3f}"
                f"{pct(r.change_vs_standalone):>15}{pct(r.standalone_excess_over_mode):>19}{ratio(r.iqr_ratio_vs_standalone):>11}"
            )
        lines.append(f"median(ipc) <= median(noipc): {self.ipc_le_noipc}")
        lines.append(f"median(ipc) <= median(standalone): {self.ipc_le_standalone}")
        return "\n".join(lines)


def compare(reports: Sequence[BenchReport]) -> Comparison:
    """Per-mode medians and dispersion relative to the stand-alone run.

    Two relative figures are given because they are easy to confuse: the change of the
    mode's median measured against the stand-alone median, and the stand-alone
    median's excess measured against the mode's median.
    """
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    scenarios = {r.scenario for r in reports}
    if len(scenarios) != 1:
        raise ScenarioMismatchError(f"reports mix scenarios {sorted(scenarios)}")
    by_mode = {r.mode: r for r in reports}
    base = by_mode.get("standalone")
    rows = []
    for mode in sorted(by_mode, key=lambda m: MODES.index(m) if m in MODES else len(MODES)):
        r = by_mode[mode]
        rows.append(
            ModeRow(
                mode=mode,
                median_ns=r.median,
                iqr_ns=r.iqr,
                change_vs_standalone=None if base is None else (r.median - base.median) / base.median,
                standalone_excess_over_mode=None if base is None else (base.median - r.median) / r.median,
                iqr_ratio_vs_standalone=None if base is None or base.iqr == 0 else r.iqr / base.iqr,
            )
        )
    ipc, noipc = by_mode.get("composed-ipc"), by_mode.get("composed-noipc")
    return Comparison(
        scenario=scenarios.pop(),
        rows=rows,
        ipc_le_noipc=None if ipc is None or noipc is None else ipc.median <= noipc.median,
        ipc_le_standalone=None if ipc is None or base is None else ipc.median <= base.median,
    )


# --------------------------------------------------------------------------- files


def plot_data(latencies: Sequence[int]) -> dict:
    """Histogram of the samples within [p1, p99] in 100 equal bins, plus a five-number summary."""
    ordered = sorted(latencies)
    if not ordered:
        raise EmptyInputError("no samples to bin")
    lo, hi = nearest_rank(ordered, 1), nearest_rank(ordered, 99)
    counts = [0] * HIST_BINS
    span = hi - lo
    for v in ordered:
        if lo <= v <= hi:
            idx = 0 if span == 0 else min(HIST_BINS - 1, (v - lo) * HIST_BINS // span)
            counts[idx] += 1
    edges = [lo + span * i / HIST_BINS for i in range(HIST_BINS + 1)]
    box = {
        "min": ordered[0],
        "q1": nearest_rank(ordered, 25),
        "median": nearest_rank(ordered, 50),
        "q3": nearest_rank(ordered, 75),
        "max": ordered[-1],
    }
    return {"lo": lo, "hi": hi, "edges": edges, "counts": counts, "boxplot": box}


def _write_plotdata(report: BenchReport, path: Path) -> None:
    pd = plot_data([s.latency_ns for s in report.samples if not s.anomalous])
    with open(path, "w") as fh:
        fh.write(f"# plotdata v1 scenario={report.scenario} mode={report.mode} samples={report.sample_count}\n")
        fh.write("# boxplot: min q1 median q3 max (ns)\n")
        b = pd["boxplot"]
        fh.write(f"boxplot {b['min']} {b['q1']} {b['median']} {b['q3']} {b['max']}\n")
        fh.write(f"# histogram: {HIST_BINS} equal-width bins over [p1, p99] = [{pd['lo']}, {pd['hi']}] ns\n")
        fh.write("# bin_lo_ns bin_hi_ns count\n")
        for i, c in enumerate(pd["counts"]):
            fh.write(f"bin {pd['edges'][i]:.1f} {pd['edges'][i + 1]:.1f} {c}\n")


def read_plotdata(path) -> dict:
    box, bins = None, []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "boxplot":
            box = dict(zip(("min", "q1", "median", "q3", "max"), map(int, parts[1:])))
        elif parts[0] == "bin":
            bins.append((float(parts[1]), float(parts[2]), int(parts[3])))
    return {"boxplot": box, "bins": bins}


def emit(report: BenchReport, fmt: str, path) -> Path:
    """Write ``report`` as csv (raw post-warmup samples), json (full report) or plotdata."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["seq", "latency_ns"])
                w.writerows((s.seq, s.latency_ns) for s in report.samples)
        elif fmt == "json":
            path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        elif fmt == "plotdata":
            _write_plotdata(report, path)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise IOFailedError(f"{path}: {exc}") from exc
    return path


OUTPUT_FILES = {"json": "report.json", "csv": "samples.csv", "plotdata": "plotdata.txt"}


def emit_all(report: BenchReport, run_dir) -> Dict[str, Path]:
    return {fmt: emit(report, fmt, Path(run_dir) / name) for fmt, name in OUTPUT_FILES.items()}


def load_report(path) -> BenchReport:
    try:
        return BenchReport.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise IOFailedError(f"{path}: {exc}") from exc


def find_reports(directory) -> List[BenchReport]:
    return [load_report(p) for p in sorted(Path(directory).rglob("report.json"))]


def read_sample_csv(path) -> List[int]:
    """Latencies from a samples.csv written by :func:`emit`."""
    try:
        with open(path, newline="") as fh:
            return [int(row["latency_ns"]) for row in csv.DictReader(fh)]
    except (OSError, KeyError, ValueError) as exc:
        raise IOFailedError(f"{path}: {exc}") from exc


def group_by_scenario(reports: Iterable[BenchReport]) -> Dict[str, List[BenchReport]]:
    groups: Dict[str, List[BenchReport]] = {}
    for r in reports:
        groups.setdefault(r.scenario, []).append(r)
    return groups


__all__ = ["BenchReport", "Comparison", "LatencySample", "Stats", "compare", "emit", "emit_all", "plot_data"]
