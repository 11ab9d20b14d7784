"""Run every pipeline once and write the report, tables and plots.

    python scripts/run_all.py --seed 42 --out results
"""

import sys

from abpiso.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--seed" not in args:
        args += ["--seed", "42"]
    if "--out" not in args:
        args += ["--out", "results"]
    sys.exit(main(["all", "--plot", *args]))
