#!/usr/bin/env python3
"""Hyperparameter grid search with 3-fold cross validation on the 1-d
concentric task, for each model kind (36 cells each)."""

import sys

from anodelab.expcli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    for model in ("anode", "node", "resnet"):
        code = main(["sweep", "--model", model, "--dim", "1",
                     "--out", f"out/sweep/{model}", *extra])
        if code != 0:
            sys.exit(code)
