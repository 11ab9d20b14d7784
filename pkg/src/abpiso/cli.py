"""Command-line driver: ``abpiso <cones|abp|quotient|submanifold|logsob|fixtures|all> --seed N``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .pipelines import PIPELINE_ORDER, RUNNERS, SUBCOMMANDS, ConfigError, RunConfig
from .report import VerificationReport, summary_lines


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abpiso", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--seed", type=int, required=True, help="64-bit seed; there is no clock default")
    p.add_argument("--samples", type=int, default=20000, help="Monte Carlo samples per estimate")
    p.add_argument("--h", type=float, default=0.02, help="target mesh spacing")
    p.add_argument("--tol-contact", type=float, default=None, help="contact-set slack (default mesh_size^2)")
    p.add_argument("--tol-grad", type=float, default=None, help="gradient residual for membership (default 5 mesh_size)")
    p.add_argument("--delta-psd", type=float, default=None, help="positivity gate slack (default 10 mesh_size)")
    p.add_argument("--t-gates", type=_floats, default=(0.5, 0.9), help="comma-separated shell radii in [0, 1)")
    p.add_argument("--out", type=str, default=None, help="output directory for report.json, CSV and SVG")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    p.add_argument("--input", type=str, default=None, help="point-set file (cones) or mesh JSON (abp)")
    p.add_argument("--kind", type=str, default=None,
                   help="fixture kind for 'fixtures', e.g. half_disk or perturbed_half_disk:0.2")
    p.add_argument("--sweep-configs", type=int, default=100, help="random configurations in the cone sweep")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(args.subcommand, args.seed, args.samples, args.h, args.tol_contact, args.tol_grad,
                     args.delta_psd, tuple(args.t_gates), args.out, args.plot, args.input, args.kind,
                     args.sweep_configs)


def run(cfg: RunConfig) -> tuple[VerificationReport, dict]:
    """Run the requested pipelines; module errors become failed entries, not crashes."""
    names = PIPELINE_ORDER if cfg.subcommand == "all" else (cfg.subcommand,)
    report = VerificationReport(cfg.echo())
    plots = {}
    start = time.perf_counter()
    for name in names:
        try:
            outcome = RUNNERS[name](cfg)
        except ConfigError:
            raise
        except Exception as exc:  # partial reports still get written
            report.errors.append(f"{name}: {type(exc).__name__}: {exc}")
            continue
        report.checks += outcome.checks
        report.tables.update(outcome.tables)
        plots.update(outcome.plots)
    report.runtime_seconds = time.perf_counter() - start
    return report, plots


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        report, plots = run(cfg)
    except ConfigError as exc:
        parser.error(str(exc))
    for line in summary_lines(report):
        print(line)
    if cfg.out:
        out = Path(cfg.out)
        written = report.write(out)
        for name, svg in plots.items():
            path = out / f"{name}.svg"
            path.write_text(svg)
            written.append(path)
        print(f"wrote {len(written)} files to {out}")
    print("ALL PASS" if report.passed else "SOME CHECKS FAILED")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
