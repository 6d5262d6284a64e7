"""Case 2 (the 7-node graph) next to Case 1, both composed with IPC on the image topic.

    python3 scripts/run_case2.py --samples 10000 --out results/case2

Adding five nodes should barely move the Sobel latency. The script runs Case 1 and
Case 2 back to back in each requested mode and prints the relative change.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ngb.bench.harness import run_case  # noqa: E402
from ngb.scenarios import CaseConfig  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10000)
    ap.add_argument("--modes", nargs="+", default=["composed-ipc"],
                    choices=["standalone", "composed-noipc", "composed-ipc"])
    ap.add_argument("--out", default="results/case2")
    args = ap.parse_args()

    cfg = CaseConfig()
    for mode in args.modes:
        c1 = run_case(1, mode, args.samples, cfg, out=Path(args.out) / "case1")
        c2 = run_case(2, mode, args.samples, cfg, out=Path(args.out) / "case2")
        change = (c2.median - c1.median) / c1.median
        print(f"{mode:<16} case1 median={c1.median / 1e6:.3f} ms  case2 median={c2.median / 1e6:.3f} ms  "
              f"change={100 * change:+.1f}%  case2 copies={c2.copies['total_deep_copies']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
