#!/usr/bin/env python3
"""Parameter-matched convolutional node vs anode on MNIST digits 0/1.

Expects the four uncompressed IDX files under data/mnist/ (the tool performs
no network access; it prints download instructions if they are missing).
"""

import sys

from anodelab.expcli import main

if __name__ == "__main__":
    sys.exit(main(["mnist-mini", "--data-dir", "data/mnist",
                   "--out", "out/mnist", "--svg", *sys.argv[1:]]))
