#!/usr/bin/env python3
"""Hold out the [0, pi/5] angular slice of the 2-d concentric data, train
node and anode, and export validation curves plus prediction heat grids."""

import sys

from anodelab.expcli import main

if __name__ == "__main__":
    sys.exit(main(["generalization", "--out", "out/generalization", "--svg",
                   *sys.argv[1:]]))
