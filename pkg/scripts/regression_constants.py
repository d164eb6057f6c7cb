"""Print the unperturbed profile of each preset as JSON.

The numbers pinned in tests/test_singularity_chart.py come from this script.
"""

import json
import sys

from tangency import singularity_chart as sc
from tangency.systems import PRESETS


def main() -> int:
    out = {}
    for name, make in PRESETS.items():
        spec = make()
        out[name] = sc.unperturbed_profile(spec.replace(eps_r=0.0, eps_w=0.0)).to_dict()
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
