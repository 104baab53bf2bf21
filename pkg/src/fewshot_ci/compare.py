"""Significance matrices over saved runs, and counts of conclusive comparisons."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DataError
from .stats import (
    DEFAULT_P_LIMIT,
    Verdict,
    compare_intervals,
    normal_ci,
    paired_ci,
    paired_series,
    paired_verdict,
    student_ci,
)
from .tasks import RunManifest

MODES = ("closed", "open", "paired")
UNAVAILABLE = "."


@dataclass(frozen=True)
class Cell:
    """Verdicts for row method vs column method; ``None`` marks an unmet precondition."""

    closed: Verdict | None = None
    open: Verdict | None = None
    paired: Verdict | None = None
    correlation: float | None = None

    def verdict(self, mode: str) -> Verdict | None:
        return getattr(self, mode)

    def flipped(self) -> Cell:
        return Cell(*(v.flipped() if v is not None else None for v in (self.closed, self.open, self.paired)),
                    correlation=self.correlation)

    def symbols(self) -> str:
        return "".join(v.value if v is not None else UNAVAILABLE for v in (self.closed, self.open, self.paired))


@dataclass
class SignificanceMatrix:
    methods: list[str]
    cells: list[list[Cell | None]]  # diagonal is None
    p_limit: float = DEFAULT_P_LIMIT
    label: str = ""

    def pairs(self):
        """Upper-triangle cells, one per unordered pair."""
        n = len(self.methods)
        for i in range(n):
            for j in range(i + 1, n):
                yield i, j, self.cells[i][j]


def _by_method(manifests: Sequence[RunManifest]) -> dict[str, dict[str, RunManifest]]:
    out: dict[str, dict[str, RunManifest]] = {}
    for m in manifests:
        runs = out.setdefault(m.method_id, {})
        if m.sampling_mode in runs:
            raise DataError(f"two {m.sampling_mode} manifests for method {m.method_id!r}")
        runs[m.sampling_mode] = m
    return out


def _pick(runs: dict[str, RunManifest], preferred: str) -> RunManifest:
    return runs.get(preferred) or next(iter(runs.values()))


def _same_setting(a: RunManifest, b: RunManifest) -> bool:
    sa, sb = a.spec, b.spec
    return a.pool_id == b.pool_id and (sa.ways, sa.shots, sa.queries) == (sb.ways, sb.shots, sb.queries)


def _cell(a: dict[str, RunManifest], b: dict[str, RunManifest], p_limit: float) -> Cell:
    verdicts = {}
    for mode, preferred, ci in (("closed", "with_replacement", normal_ci), ("open", "depletion", student_ci)):
        ma, mb = _pick(a, preferred), _pick(b, preferred)
        if _same_setting(ma, mb) and len(ma.accuracies) >= 2 and len(mb.accuracies) >= 2:
            verdicts[mode] = compare_intervals(ci(ma.accuracies, p_limit), ci(mb.accuracies, p_limit), mode).symbol
    ma, mb = _pick(a, "depletion"), _pick(b, "depletion")
    correlation = None
    if ma.task_hash == mb.task_hash and len(ma.accuracies) >= 2:
        ps = paired_series(ma.accuracies, mb.accuracies, ma.task_hash, mb.task_hash)
        verdicts["paired"] = paired_verdict(paired_ci(ps, p_limit)).symbol
        correlation = ps.correlation
    return Cell(verdicts.get("closed"), verdicts.get("open"), verdicts.get("paired"), correlation)


def compare_runs(manifests: Sequence[RunManifest], p_limit: float = DEFAULT_P_LIMIT, label: str = "") -> SignificanceMatrix:
    """Pairwise (closed, open, paired) verdicts between methods.

    Each method may contribute one manifest per sampling mode. Closed
    verdicts prefer the with-replacement run, open and paired verdicts the
    depletion run; a method with a single manifest uses it for all three.
    Closed/open need the same pool and K, S, Q; paired needs the identical
    task list.
    """
    groups = _by_method(manifests)
    methods = list(groups)
    if len(methods) < 2:
        raise DataError("need manifests for at least two methods")
    n = len(methods)
    cells: list[list[Cell | None]] = [[None] * n for _ in range(n)]
    any_available = False
    for i in range(n):
        for j in range(i + 1, n):
            c = _cell(groups[methods[i]], groups[methods[j]], p_limit)
            cells[i][j], cells[j][i] = c, c.flipped()
            any_available |= any(c.verdict(m) is not None for m in MODES)
    if not any_available:
        raise DataError("no comparable pairs: manifests differ in pool, task spec and task list")
    return SignificanceMatrix(methods, cells, p_limit, label)


@dataclass
class ConclusivenessReport:
    comparisons: int = 0
    conclusive: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MODES, 0))
    inversions: list[str] = field(default_factory=list)
    negative_correlation: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"comparisons: {self.comparisons}",
            *(f"conclusive {m}: {self.conclusive[m]}" for m in MODES),
            f"inversions: {len(self.inversions)}",
            *(f"  {s}" for s in self.inversions),
            f"negatively correlated pairs (paired CI may be wider): {len(self.negative_correlation)}",
            *(f"  {s}" for s in self.negative_correlation),
        ]
        return "\n".join(lines) + "\n"


def conclusiveness_report(matrices: Sequence[SignificanceMatrix]) -> ConclusivenessReport:
    """Count conclusive verdicts per mode and flag opposite conclusive verdicts."""
    rep = ConclusivenessReport()
    for mat in matrices:
        for i, j, cell in mat.pairs():
            rep.comparisons += 1
            name = f"{mat.label + ': ' if mat.label else ''}{mat.methods[i]} vs {mat.methods[j]}"
            for mode in MODES:
                v = cell.verdict(mode)
                if v is not None and v.conclusive:
                    rep.conclusive[mode] += 1
            for k, m1 in enumerate(MODES):
                for m2 in MODES[k + 1:]:
                    v1, v2 = cell.verdict(m1), cell.verdict(m2)
                    if v1 is not None and v2 is not None and v1.conclusive and v2.conclusive and v1 != v2:
                        rep.inversions.append(f"{name}: {m1} {v1.value} vs {m2} {v2.value}")
            if cell.correlation is not None and cell.correlation < 0:
                rep.negative_correlation.append(f"{name}: r = {cell.correlation:.3f}")
    return rep


# -- output formats --------------------------------------------------------------------


def matrix_to_text(mat: SignificanceMatrix) -> str:
    """Table of (closed, open, paired) symbols; ``.`` marks an unavailable verdict."""
    width = max(len(m) for m in mat.methods)
    col = max(width, 5)
    lines = [f"# p_limit={mat.p_limit}  cells: closed open paired" + (f"  [{mat.label}]" if mat.label else "")]
    lines.append(" " * width + "  " + "  ".join(m.rjust(col) for m in mat.methods))
    for i, m in enumerate(mat.methods):
        row = [(c.symbols() if c is not None else "").rjust(col) for c in mat.cells[i]]
        lines.append(m.ljust(width) + "  " + "  ".join(row))
    return "\n".join(lines) + "\n"


def matrix_to_json(mat: SignificanceMatrix) -> str:
    def cell(c: Cell | None):
        if c is None:
            return None
        out = {m: (c.verdict(m).value if c.verdict(m) is not None else None) for m in MODES}
        out["correlation"] = None if c.correlation is None or math.isnan(c.correlation) else c.correlation
        return out

    obj = {"p_limit": mat.p_limit, "label": mat.label, "methods": mat.methods,
           "cells": [[cell(c) for c in row] for row in mat.cells]}
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def matrix_from_json(text: str) -> SignificanceMatrix:
    try:
        obj = json.loads(text)
        methods = list(obj["methods"])
        cells = []
        for row in obj["cells"]:
            out = []
            for c in row:
                if c is None:
                    out.append(None)
                    continue
                v = [Verdict(c[m]) if c[m] is not None else None for m in MODES]
                out.append(Cell(*v, correlation=c.get("correlation")))
            cells.append(out)
        return SignificanceMatrix(methods, cells, float(obj["p_limit"]), obj.get("label", ""))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise DataError(f"malformed matrix JSON ({e})") from None


def matrix_to_csv(mat: SignificanceMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "closed", "open", "paired"])
    for i, a in enumerate(mat.methods):
        for j, b in enumerate(mat.methods):
            c = mat.cells[i][j]
            if c is not None:
                w.writerow([a, b, *(c.verdict(m).value if c.verdict(m) is not None else "" for m in MODES)])
    return buf.getvalue()


EMITTERS = {"table_text": matrix_to_text, "machine_json": matrix_to_json, "csv": matrix_to_csv}


def emit_matrix(mat: SignificanceMatrix, format: str = "table_text") -> str:
    try:
        return EMITTERS[format](mat)
    except KeyError:
        raise DataError(f"unknown output format {format!r}; choose from {sorted(EMITTERS)}") from None
