"""Run every config in configs/ except the extended one into runs/<name>."""

import json
import sys
import time
from pathlib import Path

from tangency import cli

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    failed = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        if path.stem.endswith("extended"):
            continue
        cfg = json.loads(path.read_text())
        t0 = time.perf_counter()
        try:
            man = cli.run(cfg, ROOT / "runs" / cfg.get("name", path.stem))
        except (ValueError, RuntimeError) as exc:
            print(f"{path.name}: {exc}")
            failed += 1
            continue
        print(f"{path.name}: {man['run_id']} {', '.join(man['files'])} "
              f"({time.perf_counter() - t0:.1f}s)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
