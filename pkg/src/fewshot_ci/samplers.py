"""Task samplers: independent draws with replacement, and draws until the pool is depleted.

Both use a partial Fisher-Yates shuffle from the tail of the index array,
driven by a numpy ``Generator`` seeded from ``SeedSequence`` so that output
is a pure function of (pool, parameters, seed). Each task takes one block
of K·(1+S+Q) uniforms: K for the class choice, then S+Q per chosen class
in ascending class-id order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import ConfigError
from .tasks import LabeledPool, Task, TaskSpec


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))


def partial_shuffle(items: list, k: int, u: list[float]) -> list:
    """Shuffle the last ``k`` positions of ``items`` in place; return them in draw order.

    ``u`` holds k uniforms on [0, 1); tail position i swaps with
    ``int(u * (i + 1))``.
    """
    n = len(items)
    out = []
    for i, ui in zip(range(n - 1, n - k - 1, -1), u):
        j = int(ui * (i + 1))
        items[i], items[j] = items[j], items[i]
        out.append(items[i])
    return out


def sample_indices(n: int, k: int, u: list[float]) -> list[int]:
    """``partial_shuffle(list(range(n)), k, u)`` in O(k) memory."""
    moved: dict[int, int] = {}
    out = []
    for i, ui in zip(range(n - 1, n - k - 1, -1), u):
        j = int(ui * (i + 1))
        vi, vj = moved.get(i, i), moved.get(j, j)
        moved[i], moved[j] = vj, vi
        out.append(vj)
    return out


def estimate_task_count(C: int, N: int, K: int, S: int, Q: int) -> int:
    """Tasks obtainable by exhausting a balanced pool of C classes with N samples each."""
    for name, v in (("C", C), ("N", N), ("K", K), ("S", S), ("Q", Q)):
        if v < 1:
            raise ConfigError(f"{name} must be >= 1, got {v}")
    return (C * N) // (K * (Q + S))


def _draw_task(pool: LabeledPool, spec: TaskSpec, eligible: list[int], seed: int, index: int) -> Task:
    K, need = spec.ways, spec.per_class
    u = derive_rng(seed, index).random(K * (1 + need)).tolist()
    classes = tuple(eligible[i] for i in sorted(sample_indices(len(eligible), K, u[:K])))
    support, query = [], []
    for n, cid in enumerate(classes):
        drawn = sample_indices(pool.classes[cid].count, need, u[K + n * need : K + (n + 1) * need])
        support.append(tuple(drawn[: spec.shots]))
        query.append(tuple(drawn[spec.shots :]))
    return Task(classes, tuple(support), tuple(query))


def _draw_range(args) -> list[Task]:
    pool, spec, eligible, seed, lo, hi = args
    return [_draw_task(pool, spec, eligible, seed, t) for t in range(lo, hi)]


def sample_with_replacement(pool: LabeledPool, spec: TaskSpec, seed: int, workers: int = 1) -> list[Task]:
    """Draw ``spec.tasks`` independent tasks; samples may recur across tasks.

    Task ``t`` uses its own substream derived from ``(seed, t)``, so splitting
    the work across ``workers`` processes gives the same list.
    """
    if spec.tasks is None:
        raise ConfigError("with-replacement sampling needs a task count")
    eligible = [cp.class_id for cp in pool.classes if cp.count >= spec.per_class]
    if len(eligible) < spec.ways:
        raise ConfigError(
            f"only {len(eligible)} classes have >= {spec.per_class} samples; need {spec.ways}"
        )
    T = spec.tasks
    if workers <= 1 or T < 2 * workers:
        return _draw_range((pool, spec, eligible, seed, 0, T))
    bounds = np.linspace(0, T, workers + 1).astype(int)
    chunks = [(pool, spec, eligible, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(workers) as ex:
        return [t for part in ex.map(_draw_range, chunks) for t in part]


def sample_until_depleted(pool: LabeledPool, K: int, S: int, Q: int, seed: int) -> list[Task]:
    """Draw tasks without replacement until fewer than K classes can supply S+Q samples.

    Eligible classes are re-evaluated every iteration and chosen uniformly.
    Within a class the S support samples are drawn first, then Q queries from
    what is left; both are removed from the pool for good. Returns possibly
    an empty list.
    """
    TaskSpec(K, S, Q)
    need = S + Q
    rng = derive_rng(seed)
    remaining = [list(range(cp.count)) for cp in pool.classes]
    tasks = []
    while True:
        eligible = [c for c, r in enumerate(remaining) if len(r) >= need]
        if len(eligible) < K:
            return tasks
        u = rng.random(K * (1 + need)).tolist()
        classes = tuple(sorted(eligible[i] for i in sample_indices(len(eligible), K, u[:K])))
        support, query = [], []
        pos = K
        for cid in classes:
            items = remaining[cid]
            support.append(tuple(partial_shuffle(items, S, u[pos : pos + S])))
            del items[len(items) - S :]
            query.append(tuple(partial_shuffle(items, Q, u[pos + S : pos + need])))
            del items[len(items) - Q :]
            pos += need
        tasks.append(Task(classes, tuple(support), tuple(query)))
