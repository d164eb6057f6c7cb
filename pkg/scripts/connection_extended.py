"""Run the long connection-time experiment and compare the growth slope with 2/5.

    python3 scripts/connection_extended.py [--config configs/connection_extended.json]

Writes the usual run directory and prints slope, plateau counts and whether the
slope lies in 0.4 +- 0.1. Exit status 1 when it does not.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from tangency import cli

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "connection_extended.json"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "connection-extended"))
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    cfg = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        cfg["seed"] = args.seed
    t0 = time.perf_counter()
    cli.run(cfg, args.out)
    ok = True
    for s in json.loads((Path(args.out) / "connection.json").read_text()):
        hit = abs(s["slope"] - 0.4) <= 0.1
        ok &= hit
        print(f"alpha={s['alpha']}: slope {s['slope']:.3f} "
              f"({'inside' if hit else 'outside'} 0.4 +- 0.1), plateaus {s['plateaus']}")
    print(f"{time.perf_counter() - t0:.1f}s, output in {args.out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
