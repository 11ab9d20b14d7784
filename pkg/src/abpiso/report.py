"""Verification records, the JSON report envelope, CSV tables and a small SVG plotter."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
INEQUALITY = "lhs<=rhs"
EQUALITY = "lhs==rhs"
NONNEG = "lhs>=rhs"


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass(frozen=True)
class Check:
    """One verified statement.  ``margin`` is positive when the statement holds
    exactly; it passes when margin >= -tolerance."""
    name: str
    anchor: str
    relation: str
    lhs: float
    rhs: float
    margin: float
    tolerance: float
    standard_error: float = 0.0
    passed: bool = field(default=False)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("lhs", "rhs", "margin", "tolerance", "standard_error"):
            d[k] = _num(d[k])
        return d


def _make(name, anchor, relation, lhs, rhs, margin, tolerance, se, extra) -> Check:
    if not tolerance >= 0:
        raise ValueError(f"{name}: tolerance must be nonnegative")
    ok = bool(math.isfinite(margin) and margin >= -tolerance)
    return Check(name, anchor, relation, float(lhs), float(rhs), float(margin), float(tolerance),
                 float(se), ok, dict(extra or {}))


def at_most(name: str, anchor: str, lhs: float, rhs: float, tolerance: float,
            standard_error: float = 0.0, extra: dict | None = None) -> Check:
    return _make(name, anchor, INEQUALITY, lhs, rhs, rhs - lhs, tolerance, standard_error, extra)


def at_least(name: str, anchor: str, lhs: float, rhs: float, tolerance: float,
             standard_error: float = 0.0, extra: dict | None = None) -> Check:
    return _make(name, anchor, NONNEG, lhs, rhs, lhs - rhs, tolerance, standard_error, extra)


def close_to(name: str, anchor: str, lhs: float, rhs: float, tolerance: float,
             standard_error: float = 0.0, extra: dict | None = None) -> Check:
    return _make(name, anchor, EQUALITY, lhs, rhs, -abs(lhs - rhs), tolerance, standard_error, extra)


def recompute_passed(d: dict) -> bool:
    """Pass flag from the stored numbers alone."""
    m, t = d["margin"], d["tolerance"]
    return isinstance(m, float) and m >= -t


@dataclass
class VerificationReport:
    config: dict
    checks: list[Check] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    def numerics(self) -> dict:
        """Everything except the runtime: equal for equal configurations."""
        from . import __version__
        return {"schema_version": SCHEMA_VERSION, "library": "abpiso", "version": __version__,
                "config": self.config, "checks": [c.to_dict() for c in self.checks],
                "errors": list(self.errors), "passed": self.passed}

    def to_dict(self) -> dict:
        d = self.numerics()
        d["runtime_seconds"] = self.runtime_seconds
        return d

    def write(self, out: Path) -> list[Path]:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json"]
        paths[0].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        for name, rows in self.tables.items():
            paths.append(write_csv(out / f"{name}.csv", rows))
        return paths


def write_csv(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)
    return path


def summary_lines(report: VerificationReport) -> list[str]:
    lines = []
    for c in report.checks:
        flag = "PASS" if c.passed else "FAIL"
        lines.append(f"{flag} {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} margin={c.margin:.3g} tol={c.tolerance:.3g}")
    lines += [f"ERROR {e}" for e in report.errors]
    return lines


# --- SVG ----------------------------------------------------------------------------

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def svg_lines(series: list[tuple[str, list[float], list[float]]], title: str, xlabel: str, ylabel: str,
              logx: bool = False, logy: bool = False, width: int = 480, height: int = 320) -> str:
    """Line plot with markers; each series is (label, xs, ys)."""
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = [(tx(x), ty(y)) for _, xs, ys in series for x, y in zip(xs, ys)]
    if not pts:
        raise ValueError("nothing to plot")
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)
    L, R, T, B = 60, 20, 30, 45
    sx = lambda v: L + (tx(v) - x0) / (x1 - x0) * (width - L - R)
    sy = lambda v: height - B - (ty(v) - y0) / (y1 - y0) * (height - T - B)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<line x1="{L}" y1="{height - B}" x2="{width - R}" y2="{height - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{height - B}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>',
           f'<text x="14" y="{height / 2}" text-anchor="middle" transform="rotate(-90 14 {height / 2})">{_esc(ylabel)}</text>',
           f'<text x="{L}" y="{height - B + 14}" text-anchor="middle">{_tick(x0, logx)}</text>',
           f'<text x="{width - R}" y="{height - B + 14}" text-anchor="middle">{_tick(x1, logx)}</text>',
           f'<text x="{L - 4}" y="{height - B}" text-anchor="end">{_tick(y0, logy)}</text>',
           f'<text x="{L - 4}" y="{T + 4}" text-anchor="end">{_tick(y1, logy)}</text>']
    for k, (label, xs, ys) in enumerate(series):
        col = _COLOURS[k % len(_COLOURS)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{path}"/>')
        out += [f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{col}"/>' for x, y in zip(xs, ys)]
        out.append(f'<text x="{width - R - 4}" y="{T + 14 * (k + 1)}" text-anchor="end" fill="{col}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out)


def _tick(v: float, log: bool) -> str:
    return f"{10 ** v:.3g}" if log else f"{v:.3g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
