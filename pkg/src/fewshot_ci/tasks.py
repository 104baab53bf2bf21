"""Core data model: labeled pools, task specs, tasks and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

SAMPLING_MODES = ("with_replacement", "depletion")
MANIFEST_FORMAT = "fewshot-ci/manifest/1"


@dataclass(frozen=True)
class ClassPool:
    class_id: int
    samples: np.ndarray  # (count, dim) float64

    @property
    def count(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class LabeledPool:
    """Class-indexed feature vectors.

    ``classes[i].class_id == i`` always holds; the original labels live in
    ``labels`` (same order).
    """

    classes: tuple[ClassPool, ...]
    dim: int
    labels: tuple[Hashable, ...] = ()

    def __post_init__(self):
        if not self.classes:
            raise DataError("pool has no classes")
        for i, cp in enumerate(self.classes):
            if cp.class_id != i:
                raise DataError(f"class ids must be dense, got {cp.class_id} at position {i}")
            if cp.samples.ndim != 2 or cp.samples.shape[1] != self.dim:
                raise DataError(f"class {i}: samples must have shape (n, {self.dim})")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(self.classes))))

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def counts(self) -> list[int]:
        return [cp.count for cp in self.classes]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All samples in one array plus per-class row offsets."""
        offsets = np.zeros(self.num_classes + 1, dtype=np.int64)
        np.cumsum(self.counts, out=offsets[1:])
        return np.concatenate([cp.samples for cp in self.classes]), offsets

    def fingerprint(self) -> str:
        """Content hash: class sizes, dimension and raw feature bytes."""
        h = hashlib.sha256()
        h.update(f"{self.dim}:{','.join(map(str, self.counts))}".encode())
        for cp in self.classes:
            h.update(np.ascontiguousarray(cp.samples, dtype="<f8").tobytes())
        return h.hexdigest()[:32]


def pool_from_arrays(arrays: Sequence[np.ndarray], labels: Sequence[Hashable] | None = None) -> LabeledPool:
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    arrays = [a.reshape(-1, 1) if a.ndim == 1 else a for a in arrays]
    if not arrays:
        raise DataError("pool has no classes")
    dim = arrays[0].shape[1]
    for a in arrays:
        if a.shape[1] != dim:
            raise DataError(f"dimension mismatch: {a.shape[1]} != {dim}")
        if not np.all(np.isfinite(a)):
            raise DataError("features must be finite")
    classes = tuple(ClassPool(i, a) for i, a in enumerate(arrays))
    return LabeledPool(classes, dim, tuple(labels) if labels is not None else ())


def build_pool(records: Iterable[tuple[Hashable, Sequence[float]]]) -> LabeledPool:
    """Group ``(label, vector)`` records into a pool.

    Class ids follow first appearance of each label; sample order within a
    class follows record order.
    """
    grouped: dict[Hashable, list[Sequence[float]]] = {}
    dim = None
    for n, (label, vec) in enumerate(records):
        vec = [float(v) for v in vec]
        if dim is None:
            if not vec:
                raise DataError("feature vectors must have dim >= 1")
            dim = len(vec)
        elif len(vec) != dim:
            raise DataError(f"record {n}: dimension mismatch ({len(vec)} != {dim})")
        if not all(math.isfinite(v) for v in vec):
            raise DataError(f"record {n}: non-finite feature value")
        grouped.setdefault(label, []).append(vec)
    if dim is None:
        raise DataError("no records")
    arrays = [np.array(v, dtype=np.float64).reshape(-1, dim) for v in grouped.values()]
    return pool_from_arrays(arrays, list(grouped))


@dataclass(frozen=True)
class TaskSpec:
    ways: int
    shots: int
    queries: int
    tasks: int | None = None

    def __post_init__(self):
        if self.ways < 2:
            raise ConfigError(f"ways must be >= 2, got {self.ways}")
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if self.queries < 1:
            raise ConfigError(f"queries must be >= 1, got {self.queries}")
        if self.tasks is not None and self.tasks < 1:
            raise ConfigError(f"task count must be >= 1, got {self.tasks}")

    @property
    def per_class(self) -> int:
        return self.shots + self.queries

    def to_dict(self) -> dict[str, Any]:
        return {"K": self.ways, "S": self.shots, "Q": self.queries, "T": self.tasks}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TaskSpec:
        return cls(d["K"], d["S"], d["Q"], d.get("T"))


@dataclass(frozen=True)
class Task:
    """One episode.

    ``class_subset`` is sorted ascending, so the local label of a class is
    its position and ties resolve toward the lowest class id.
    """

    class_subset: tuple[int, ...]
    support: tuple[tuple[int, ...], ...]
    query: tuple[tuple[int, ...], ...]

    @property
    def ways(self) -> int:
        return len(self.class_subset)

    def to_list(self) -> list:
        return [list(self.class_subset), [list(s) for s in self.support], [list(q) for q in self.query]]

    @classmethod
    def from_list(cls, data: list) -> Task:
        classes, support, query = data
        return cls(
            tuple(int(c) for c in classes),
            tuple(tuple(int(i) for i in s) for s in support),
            tuple(tuple(int(i) for i in q) for q in query),
        )


def validate_task(task: Task, pool: LabeledPool, spec: TaskSpec | None = None) -> None:
    """Raise DataError if ``task`` breaks any task invariant against ``pool``."""
    k = len(task.class_subset)
    if len(set(task.class_subset)) != k:
        raise DataError("duplicate class in task")
    if len(task.support) != k or len(task.query) != k:
        raise DataError("support/query must have one entry per class")
    if spec is not None and k != spec.ways:
        raise DataError(f"task has {k} classes, spec says {spec.ways}")
    for cid, sup, qry in zip(task.class_subset, task.support, task.query):
        if not 0 <= cid < pool.num_classes:
            raise DataError(f"unknown class id {cid}")
        n = pool.classes[cid].count
        if spec is not None and (len(sup) != spec.shots or len(qry) != spec.queries):
            raise DataError(f"class {cid}: expected {spec.shots} shots / {spec.queries} queries")
        if not sup or not qry:
            raise DataError(f"class {cid}: empty support or query")
        idx = set(sup) | set(qry)
        if len(idx) != len(sup) + len(qry):
            raise DataError(f"class {cid}: support and query overlap or repeat")
        if min(idx) < 0 or max(idx) >= n:
            raise DataError(f"class {cid}: sample index out of range")


def task_set_hash(tasks: Sequence[Task]) -> str:
    payload = json.dumps([t.to_list() for t in tasks], separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    master_seed: int
    spec: TaskSpec
    sampling_mode: str
    method_id: str
    tasks: tuple[Task, ...]
    accuracies: tuple[float, ...]
    pool_id: str = ""
    _hash: str = field(default="", init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "accuracies", tuple(float(a) for a in self.accuracies))
        if self.sampling_mode not in SAMPLING_MODES:
            raise DataError(f"sampling_mode must be one of {SAMPLING_MODES}, got {self.sampling_mode!r}")
        if len(self.accuracies) != len(self.tasks):
            raise DataError(f"{len(self.accuracies)} accuracies for {len(self.tasks)} tasks")
        for i, a in enumerate(self.accuracies):
            if not 0.0 <= a <= 1.0:
                raise DataError(f"accuracies[{i}] = {a!r} outside [0, 1]")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed < 2**64:
            raise DataError("master_seed must be a 64-bit unsigned integer")

    @property
    def task_hash(self) -> str:
        if not self._hash:
            object.__setattr__(self, "_hash", task_set_hash(self.tasks))
        return self._hash

    @property
    def accuracy_array(self) -> np.ndarray:
        return np.array(self.accuracies, dtype=np.float64)


def dumps_manifest(m: RunManifest) -> str:
    """Serialize with a fixed field order; one task per line.

    Accuracies are written with 17 significant digits so parsing restores
    the exact doubles.
    """
    head = {
        "format": MANIFEST_FORMAT,
        "master_seed": m.master_seed,
        "spec": m.spec.to_dict(),
        "sampling_mode": m.sampling_mode,
        "method_id": m.method_id,
        "pool_id": m.pool_id,
    }
    lines = ["{"]
    for key, value in head.items():
        lines.append(f"  {json.dumps(key)}: {json.dumps(value, separators=(', ', ': '))},")
    task_lines = [json.dumps(t.to_list(), separators=(",", ":")) for t in m.tasks]
    lines.append('  "tasks": [' + ("\n    " + ",\n    ".join(task_lines) + "\n  " if task_lines else "") + "],")
    accs = ", ".join(format(a, ".17g") for a in m.accuracies)
    lines.append(f'  "accuracies": [{accs}]')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _field(obj: dict, name: str, kind: type | tuple[type, ...]):
    if name not in obj:
        raise DataError(f"manifest: missing field {name!r}")
    value = obj[name]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataError(f"manifest: field {name!r} has wrong type {type(value).__name__}")
    return value


def loads_manifest(text: str) -> RunManifest:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"manifest: not valid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise DataError("manifest: top level must be an object")
    fmt = obj.get("format", MANIFEST_FORMAT)
    if fmt != MANIFEST_FORMAT:
        raise DataError(f"manifest: unsupported format {fmt!r}")
    spec_obj = _field(obj, "spec", dict)
    try:
        spec = TaskSpec.from_dict(spec_obj)
    except (KeyError, TypeError) as e:
        raise DataError(f"manifest: field 'spec' malformed ({e})") from None
    except ConfigError as e:
        raise DataError(f"manifest: field 'spec' invalid ({e})") from None
    try:
        tasks = [Task.from_list(t) for t in _field(obj, "tasks", list)]
    except (ValueError, TypeError) as e:
        raise DataError(f"manifest: field 'tasks' malformed ({e})") from None
    accs = _field(obj, "accuracies", list)
    if not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in accs):
        raise DataError("manifest: field 'accuracies' must hold numbers")
    return RunManifest(
        master_seed=_field(obj, "master_seed", int),
        spec=spec,
        sampling_mode=_field(obj, "sampling_mode", str),
        method_id=_field(obj, "method_id", str),
        tasks=tasks,
        accuracies=accs,
        pool_id=obj.get("pool_id", ""),
    )


def manifest_roundtrip(m: RunManifest) -> RunManifest:
    return loads_manifest(dumps_manifest(m))


def save_manifest(m: RunManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_manifest(m))


def load_manifest(path) -> RunManifest:
    with open(path, encoding="utf-8") as f:
        return loads_manifest(f.read())
