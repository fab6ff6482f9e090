#!/usr/bin/env python3
"""Export flow trajectories and vector-field slices from a saved checkpoint.

Usage: python scripts/export_flows.py path/to/model.ckpt [extra flags]
"""

import sys

from anodelab.expcli import main

if __name__ == "__main__":
    if len(sys.argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        sys.exit(2)
    sys.exit(main(["export-flows", "--checkpoint", sys.argv[1],
                   "--out", "out/flows", "--svg", *sys.argv[2:]]))
