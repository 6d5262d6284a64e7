"""Case 1 (camera -> Sobel) in all three execution modes, repeated.

    python3 scripts/run_case1.py --samples 10000 --reps 3 --out results/case1

Prints the comparison table of every repetition and writes report.json, samples.csv
and plotdata.txt per run.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ngb.bench.harness import run_case  # noqa: E402
from ngb.bench.report import compare  # noqa: E402
from ngb.scenarios import CaseConfig  # noqa: E402

MODES = ("standalone", "composed-noipc", "composed-ipc")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10000)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--width", type=int, default=640)
    ap.add_argument("--height", type=int, default=480)
    ap.add_argument("--fps", type=float, default=30.0)
    ap.add_argument("--out", default="results/case1")
    args = ap.parse_args()

    cfg = CaseConfig(width=args.width, height=args.height, fps=args.fps)
    holds = True
    for rep in range(1, args.reps + 1):
        out = Path(args.out) / f"rep{rep}"
        reports = [run_case(1, mode, args.samples, cfg, out=out) for mode in MODES]
        cmp = compare(reports)
        print(f"--- repetition {rep}")
        print(cmp.format())
        holds &= cmp.ordering_holds
    print("ordering held in every repetition" if holds else "ordering did NOT hold in every repetition")
    return 0 if holds else 2


if __name__ == "__main__":
    sys.exit(main())
