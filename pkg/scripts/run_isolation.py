"""Two Case-1 stacks in domains 0 and 1 with identical topic names on one loopback wire.

    python3 scripts/run_isolation.py --seconds 10
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ngb.bench.harness import run_isolation  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=10.0)
    ap.add_argument("--out", default="results/isolation")
    args = ap.parse_args()
    ok = True
    for r in run_isolation(args.seconds, domains=(0, 1), out=args.out):
        print(f"domain {r.domain}: surfaced={r.surfaced} cross-domain={r.cross_domain_surfaced} "
              f"wrong_domain dropped={r.wrong_domain_dropped}")
        ok &= r.cross_domain_surfaced == 0 and r.wrong_domain_dropped > 0
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
