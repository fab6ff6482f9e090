#!/usr/bin/env python3
"""Track solver cost (function evaluations per forward pass) while training
on the 2-d concentric task, for the plain and the augmented flow."""

import sys

from anodelab.expcli import main

OUT = "out/nfe"

if __name__ == "__main__":
    extra = sys.argv[1:]
    for model in ("node", "anode"):
        code = main(["nfe", "--model", model, "--out", f"{OUT}/{model}",
                     "--svg", *extra])
        if code != 0:
            sys.exit(code)
