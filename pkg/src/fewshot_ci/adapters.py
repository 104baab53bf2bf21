"""Few-shot classifiers conditioned on a support set, and per-task accuracy.

Labels inside a task are local: position ``k`` in ``task.class_subset``.
Every argmin/argmax resolves ties toward the lowest position, which is the
lowest class id because class subsets are sorted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .samplers import derive_rng
from .tasks import LabeledPool, Task


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    return x / np.where(norm > 0, norm, 1.0)


def _stack_support(support: Sequence[np.ndarray]) -> list[np.ndarray]:
    out = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in support]
    if not out:
        raise ConfigError("support set has no classes")
    for k, s in enumerate(out):
        if s.shape[0] == 0:
            raise ConfigError(f"support class {k} is empty")
    if len({s.shape[1] for s in out}) != 1:
        raise ConfigError("support classes disagree on feature dimension")
    return out


def _check_dim(x: np.ndarray, dim: int) -> None:
    if x.shape[-1] != dim:
        raise ConfigError(f"dimension mismatch: got {x.shape[-1]}, model expects {dim}")


# -- nearest class centroid ---------------------------------------------------


@dataclass(frozen=True)
class NCCModel:
    centroids: np.ndarray  # (K, dim)
    normalize: bool = False

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        _check_dim(x, self.centroids.shape[1])
        if self.normalize:
            x = _l2_normalize(x)
        d = ((x[:, None, :] - self.centroids[None, :, :]) ** 2).sum(-1)
        return d.argmin(axis=1)


def ncc_fit(support: Sequence[np.ndarray], normalize: bool = False) -> NCCModel:
    """One centroid per class: the coordinate-wise mean of its support vectors."""
    support = _stack_support(support)
    if normalize:
        support = [_l2_normalize(s) for s in support]
    return NCCModel(np.stack([s.mean(axis=0) for s in support]), normalize)


def ncc_predict(model: NCCModel, x: Sequence[float]) -> int:
    return int(model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


# -- multinomial logistic regression --------------------------------------------


def _design(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def lr_loss_grad(W: np.ndarray, X: np.ndarray, y: np.ndarray, l2_penalty: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus ``l2_penalty * ||W||^2`` over non-bias weights.

    ``X`` already carries the bias column; ``y`` holds local labels.
    """
    n, K = X.shape[0], W.shape[0]
    logits = X @ W.T
    logits = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(logits).sum(axis=1))
    loss = float(np.mean(logsum - logits[np.arange(n), y]))
    loss += l2_penalty * float((W[:, :-1] ** 2).sum())
    P = np.exp(logits - logsum[:, None])
    P[np.arange(n), y] -= 1.0
    grad = P.T @ X / n
    grad[:, :-1] += 2.0 * l2_penalty * W[:, :-1]
    return loss, grad


@dataclass(frozen=True)
class LRModel:
    weights: np.ndarray  # (K, dim + 1), last column is the bias
    normalize: bool = False
    losses: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        _check_dim(x, self.weights.shape[1] - 1)
        if self.normalize:
            x = _l2_normalize(x)
        return (_design(x) @ self.weights.T).argmax(axis=1)


def lr_fit(support: Sequence[np.ndarray], l2_penalty: float = 1e-3, step_size: float = 0.5,
           max_iters: int = 200, normalize: bool = False, backtrack: bool = True) -> LRModel:
    """Full-batch gradient descent from zero weights.

    With ``backtrack`` the step is halved until the loss does not increase;
    descent stops early when no halving helps.
    """
    if l2_penalty < 0 or step_size <= 0 or max_iters < 0:
        raise ConfigError("need l2_penalty >= 0, step_size > 0, max_iters >= 0")
    support = _stack_support(support)
    if normalize:
        support = [_l2_normalize(s) for s in support]
    X = _design(np.vstack(support))
    y = np.concatenate([np.full(len(s), k) for k, s in enumerate(support)])
    W = np.zeros((len(support), X.shape[1]))
    with np.errstate(over="ignore", invalid="ignore"):
        return _descend(W, X, y, l2_penalty, step_size, max_iters, normalize, backtrack)


def _descend(W, X, y, l2_penalty, step_size, max_iters, normalize, backtrack) -> LRModel:
    loss, grad = lr_loss_grad(W, X, y, l2_penalty)
    losses = [loss]
    step = step_size
    for _ in range(max_iters):
        while True:
            W_new = W - step * grad
            new_loss, new_grad = lr_loss_grad(W_new, X, y, l2_penalty)
            if not backtrack or (np.isfinite(new_loss) and new_loss <= loss):
                break
            step /= 2.0
            if step < step_size * 2.0**-40:
                W_new = None
                break
        if W_new is None:
            break
        if not np.isfinite(new_loss):
            raise ConfigError(f"logistic regression diverged (loss={new_loss}); use a smaller step_size")
        W, loss, grad = W_new, new_loss, new_grad
        losses.append(loss)
    return LRModel(W, normalize, tuple(losses))


def lr_predict(model: LRModel, x: Sequence[float]) -> int:
    return int(model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


# -- adapters ----------------------------------------------------------------------


def task_key(task: Task) -> int:
    """Stable 64-bit integer identifying a task's content."""
    digest = hashlib.sha256(json.dumps(task.to_list(), separators=(",", ":")).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class NCC:
    normalize: bool = False
    kind = "ncc"

    def fit(self, support):
        return ncc_fit(support, self.normalize)


@dataclass(frozen=True)
class LogisticRegression:
    l2_penalty: float = 1e-3
    step_size: float = 0.5
    max_iters: int = 200
    normalize: bool = False
    kind = "lr"

    def __post_init__(self):
        if self.l2_penalty < 0 or self.step_size <= 0 or self.max_iters < 0:
            raise ConfigError("need l2_penalty >= 0, step_size > 0, max_iters >= 0")

    def fit(self, support):
        return lr_fit(support, self.l2_penalty, self.step_size, self.max_iters, self.normalize)


@dataclass(frozen=True)
class RandomGuess:
    """Predicts a uniformly random class; conditional accuracy is exactly 1/K."""

    seed: int = 0
    kind = "random"

    def task_accuracy(self, task: Task, queries: int) -> float:
        K = task.ways
        rng = derive_rng(self.seed, task_key(task))
        guesses = rng.integers(0, K, size=(K, queries))
        return int((guesses == np.arange(K)[:, None]).sum()) / (K * queries)


@dataclass(frozen=True)
class Oracle:
    """Synthetic method with a controllable per-task accuracy.

    accuracy = base + difficulty + noise, clamped to [0, 1] and rounded to
    the 1/(KQ) grid. ``difficulty`` depends only on the task and
    ``difficulty_seed``, so oracles sharing that seed are correlated with
    r ≈ difficulty_sd² / (difficulty_sd² + noise_sd²).
    """

    base: float = 0.75
    difficulty_sd: float = 0.1
    noise_sd: float = 0.07
    seed: int = 0
    difficulty_seed: int = 0
    kind = "oracle"

    def __post_init__(self):
        if self.difficulty_sd < 0 or self.noise_sd < 0:
            raise ConfigError("oracle spreads must be >= 0")

    def task_accuracy(self, task: Task, queries: int) -> float:
        key = task_key(task)
        difficulty = self.difficulty_sd * derive_rng(self.difficulty_seed, key, 0).standard_normal()
        noise = self.noise_sd * derive_rng(self.seed, key, 1).standard_normal()
        grid = task.ways * queries
        acc = min(1.0, max(0.0, self.base + difficulty + noise))
        return round(acc * grid) / grid


ADAPTERS = {"ncc": NCC, "lr": LogisticRegression, "oracle": Oracle, "random": RandomGuess}


def make_adapter(kind: str, **hyper):
    try:
        cls = ADAPTERS[kind]
    except KeyError:
        raise ConfigError(f"unknown adapter {kind!r}; choose from {sorted(ADAPTERS)}") from None
    try:
        return cls(**hyper)
    except TypeError as e:
        raise ConfigError(f"bad settings for adapter {kind!r}: {e}") from None


def describe_adapter(adapter) -> str:
    params = ",".join(f"{k}={v}" for k, v in adapter.__dict__.items())
    return f"{adapter.kind}({params})"


# -- evaluation ----------------------------------------------------------------------


def evaluate_task(adapter, task: Task, pool: LabeledPool) -> float:
    """Fraction of the task's K·Q queries classified correctly."""
    queries = len(task.query[0])
    if hasattr(adapter, "task_accuracy"):
        return adapter.task_accuracy(task, queries)
    support = [pool.classes[c].samples[list(s)] for c, s in zip(task.class_subset, task.support)]
    model = adapter.fit(support)
    correct = 0
    total = 0
    for k, (c, q) in enumerate(zip(task.class_subset, task.query)):
        pred = model.predict(pool.classes[c].samples[list(q)])
        correct += int((pred == k).sum())
        total += len(q)
    return correct / total


def _uniform_shape(tasks: Sequence[Task]) -> bool:
    K, S, Q = tasks[0].ways, len(tasks[0].support[0]), len(tasks[0].query[0])
    return all(
        t.ways == K and all(len(s) == S for s in t.support) and all(len(q) == Q for q in t.query)
        for t in tasks
    )


def evaluate_tasks(adapter, tasks: Sequence[Task], pool: LabeledPool) -> np.ndarray:
    """Accuracies for many tasks; NCC on equally-shaped tasks runs vectorized."""
    if not tasks:
        return np.zeros(0)
    if not isinstance(adapter, NCC) or not _uniform_shape(tasks):
        return np.array([evaluate_task(adapter, t, pool) for t in tasks])
    X, offsets = pool.stacked()
    base = offsets[np.array([t.class_subset for t in tasks])][:, :, None]
    sup = X[np.array([t.support for t in tasks]) + base]  # (T, K, S, d)
    qry = X[np.array([t.query for t in tasks]) + base]  # (T, K, Q, d)
    if adapter.normalize:
        sup, qry = _l2_normalize(sup), _l2_normalize(qry)
    cent = sup.mean(axis=2)  # (T, K, d)
    d = ((qry[:, :, :, None, :] - cent[:, None, None, :, :]) ** 2).sum(-1)  # (T, K, Q, K)
    K, Q = qry.shape[1], qry.shape[2]
    correct = (d.argmin(axis=-1) == np.arange(K)[None, :, None]).sum(axis=(1, 2))
    return correct / (K * Q)
