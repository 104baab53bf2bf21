"""Precomputed feature files: UTF-8 CSV, header ``label,f0,...,f{d-1}``."""

from __future__ import annotations

import csv
import math
from pathlib import Path

from .errors import DataError
from .tasks import LabeledPool, build_pool


def ingest_feature_file(path: str | Path, format: str = "csv") -> LabeledPool:
    if format != "csv":
        raise DataError(f"unsupported feature format {format!r}")
    path = Path(path)
    try:
        f = path.open(encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"{path}: cannot open ({e.strerror})") from None
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        dim = len(header) - 1
        if dim < 1 or header[0].strip() != "label" or any(
            h.strip() != f"f{i}" for i, h in enumerate(header[1:])
        ):
            raise DataError(f"{path}, line 1: missing header 'label,f0,...'")
        records = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != dim + 1:
                raise DataError(f"{path}, line {line}: expected {dim + 1} fields, got {len(row)}")
            try:
                vec = [float(v) for v in row[1:]]
            except ValueError:
                raise DataError(f"{path}, line {line}: non-numeric feature value") from None
            if not all(math.isfinite(v) for v in vec):
                raise DataError(f"{path}, line {line}: non-finite feature value")
            records.append((row[0], vec))
    if not records:
        raise DataError(f"{path}: no data rows")
    return build_pool(records)


def write_feature_file(pool: LabeledPool, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(pool.dim)])
        for label, cp in zip(pool.labels, pool.classes):
            for x in cp.samples:
                w.writerow([label] + [format(v, ".17g") for v in x])
