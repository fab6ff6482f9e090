#!/usr/bin/env python3
"""Train all three model kinds on the 1-d crossing task and export artifacts.

The augmented model fits the label-swapping target; the plain flow collapses
toward zero (MSE ~= 1) because a continuous 1-d flow cannot reorder points;
the residual baseline fits it by jumping across.
"""

import sys

from anodelab.expcli import main

OUT = "out/toy1d"

if __name__ == "__main__":
    extra = sys.argv[1:]
    for model, flags in (("anode", ["--aug", "5"]),
                         ("node", []),
                         ("resnet", ["--layers", "5", "--lr", "1e-2"])):
        code = main(["toy", "--dim", "1", "--model", model,
                     "--out", f"{OUT}/{model}", "--svg", *flags, *extra])
        if code != 0:
            sys.exit(code)
