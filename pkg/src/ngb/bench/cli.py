"""``bench`` command line.

    bench run --case {1|2} --mode {standalone|composed-noipc|composed-ipc} --samples N [...]
    bench compare DIR [--assert-ordering]
    bench stats FILE.csv
    bench isolation [--seconds S]

Exit codes: 0 success, 2 assertion failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..core import Reliability
from ..errors import NGBError
from ..gamecontroller import DEFAULT_GC_PORT
from ..scenarios import CaseConfig
from .harness import run_case, run_isolation
from .report import compare, find_reports, group_by_scenario, read_sample_csv
from .stats import compute_stats

EXIT_OK, EXIT_ASSERT, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("ngb.bench")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bench", description="Stand-alone vs composed node latency benchmark.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one case in one execution mode")
    run.add_argument("--case", type=int, choices=(1, 2), required=True)
    run.add_argument("--mode", choices=("standalone", "composed-noipc", "composed-ipc"), required=True)
    run.add_argument("--samples", type=int, default=10000)
    run.add_argument("--width", type=int, default=640)
    run.add_argument("--height", type=int, default=480)
    run.add_argument("--fps", type=float, default=30.0)
    run.add_argument("--image-qos", choices=("reliable", "best-effort"), default="reliable")
    run.add_argument("--threads", type=int, default=None, help="executor threads (default: CPUs, max 4)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--warmup", type=int, default=100)
    run.add_argument("--domain", type=int, default=0)
    run.add_argument("--gc-port", type=int, default=DEFAULT_GC_PORT)
    run.add_argument("--out", default="bench-out")
    run.add_argument("--timeout", type=float, default=None, help="seconds before the run is declared TIMEOUT")
    run.add_argument("--assert-ordering", action="store_true",
                     help="after the run, compare with sibling runs in --out and fail unless ipc is fastest")

    cmp_ = sub.add_parser("compare", help="compare report.json files found under DIR")
    cmp_.add_argument("dir")
    cmp_.add_argument("--assert-ordering", action="store_true")

    st = sub.add_parser("stats", help="statistics of a samples.csv file")
    st.add_argument("file")

    iso = sub.add_parser("isolation", help="two Case-1 stacks in different domains on one wire")
    iso.add_argument("--seconds", type=float, default=10.0)
    iso.add_argument("--out", default=None)
    iso.add_argument("--width", type=int, default=640)
    iso.add_argument("--height", type=int, default=480)
    iso.add_argument("--fps", type=float, default=30.0)
    return ap


def _compare_dir(directory, assert_ordering: bool, out=None) -> int:
    out = out or sys.stdout
    groups = group_by_scenario(find_reports(directory))
    if not groups:
        print(f"no report.json under {directory}", file=sys.stderr)
        return EXIT_RUNTIME
    status = EXIT_OK
    for scenario, reports in sorted(groups.items()):
        if len(reports) < 2:
            print(f"scenario {scenario}: only {len(reports)} report, nothing to compare", file=out)
            if assert_ordering:
                status = EXIT_ASSERT
            continue
        cmp = compare(reports)
        print(cmp.format(), file=out)
        if assert_ordering and not cmp.ordering_holds:
            print(f"ordering assertion FAILED for {scenario}", file=out)
            status = EXIT_ASSERT
    return status


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = CaseConfig(
                width=args.width,
                height=args.height,
                fps=args.fps,
                image_qos=Reliability.RELIABLE if args.image_qos == "reliable" else Reliability.BEST_EFFORT,
                threads=args.threads,
                seed=args.seed,
                domain=args.domain,
                gc_port=args.gc_port,
                warmup=args.warmup,
            )
            report = run_case(args.case, args.mode, args.samples, cfg, out=args.out, deadline_s=args.timeout)
            s = report.stats
            print(
                f"{report.scenario} {report.mode}: n={report.sample_count} median={s['median'] / 1e6:.3f} ms "
                f"IQR={(s['p75'] - s['p25']) / 1e6:.3f} ms p99={s['p99'] / 1e6:.3f} ms "
                f"deep copies={report.copies['total_deep_copies']}"
            )
            print(f"wrote {Path(args.out) / f'case{args.case}-{args.mode}'}")
            if args.assert_ordering:
                return _compare_dir(args.out, True)
            return EXIT_OK
        if args.command == "compare":
            return _compare_dir(args.dir, args.assert_ordering)
        if args.command == "stats":
            st = compute_stats([v for v in read_sample_csv(args.file) if v >= 0])
            print(json.dumps(st.to_dict(), indent=2))
            return EXIT_OK
        if args.command == "isolation":
            results = run_isolation(args.seconds, out=args.out,
                                    cfg=CaseConfig(width=args.width, height=args.height, fps=args.fps))
            ok = True
            for r in results:
                print(f"domain {r.domain}: surfaced={r.surfaced} cross-domain surfaced={r.cross_domain_surfaced} "
                      f"wrong_domain dropped={r.wrong_domain_dropped}")
                ok &= r.cross_domain_surfaced == 0 and r.wrong_domain_dropped > 0
            return EXIT_OK if ok else EXIT_ASSERT
    except NGBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
