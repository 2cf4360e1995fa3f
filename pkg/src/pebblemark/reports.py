"""Columnar data for plots, plus the log-log slope fit used on cost curves."""

from __future__ import annotations

import hashlib
import json
from typing import Sequence

import numpy as np

from .errors import ShapeError

COLUMNS = {
    "cc": ("n", "strategy", "cc"),
    "advantage": ("attacker", "evaluator", "advantage", "ci_low", "ci_high"),
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def report_hash(report: dict) -> str:
    return hashlib.sha256(canonical_json(report).encode()).hexdigest()


def plot_emit(report: dict, kind: str) -> str:
    """Tab-separated rows with a header, sorted for stable output."""
    if kind not in COLUMNS:
        raise ShapeError(f"unknown plot kind {kind!r}")
    if report.get("kind") != kind:
        raise ShapeError(f"report of kind {report.get('kind')!r} cannot be plotted as {kind!r}")
    cols = COLUMNS[kind]
    rows = sorted((tuple(r[c] for c in cols) for r in report.get("rows", [])), key=lambda t: tuple(map(str, t)) if kind == "advantage" else (t[0], t[1]))
    out = ["\t".join(cols)]
    out += ["\t".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ShapeError("need at least two matching points")
    slope, _ = np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)
    return float(slope)
