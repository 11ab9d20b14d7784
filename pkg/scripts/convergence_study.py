"""Max-norm error of the half-disk solve against |x|^2/2 under refinement.

    python scripts/convergence_study.py [--hs 0.04,0.02,0.01] [--out convergence]
"""

import argparse
from dataclasses import asdict
from pathlib import Path

from abpiso.report import svg_lines, write_csv
from abpiso.studies import convergence_study


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--hs", default="0.04,0.02,0.01")
    p.add_argument("--out", default=None)
    args = p.parse_args()
    rows = convergence_study(tuple(float(t) for t in args.hs.split(",")))
    print(f"{'h':>8} {'mesh_size':>10} {'vertices':>9} {'max_error':>11} {'ratio':>6}")
    prev = None
    for r in rows:
        ratio = f"{prev / r.max_error:6.2f}" if prev else ""
        print(f"{r.h:8.4f} {r.mesh_size:10.4f} {r.vertices:9d} {r.max_error:11.3e} {ratio}")
        prev = r.max_error
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "convergence.csv", [asdict(r) for r in rows])
        svg = svg_lines([("max error", [r.h for r in rows], [r.max_error for r in rows])],
                        "half-disk solve against |x|^2/2", "h", "max error", logx=True, logy=True)
        (out / "convergence.svg").write_text(svg)


if __name__ == "__main__":
    main()
