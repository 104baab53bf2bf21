"""Task sizing: how the variance of the average accuracy depends on Q.

Under depletion sampling of a balanced pool of ``N_total`` samples, the
variance of the mean accuracy is modelled as

    Var(Ā) = K / N_total · (α·Q + β/Q + γ)

with α, β, γ functions of the conditional-accuracy moments m1, m2, m3.
``sweep_variance`` measures Var(Ā) on synthetic 1-D Gaussian classes,
``fit_variance_model`` fits the model and ``q_star`` locates its minimum.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .adapters import NCC, RandomGuess, evaluate_tasks
from .errors import ConfigError, DataError
from .samplers import derive_rng, estimate_task_count, sample_until_depleted
from .tasks import LabeledPool, pool_from_arrays

DEFAULT_Q_GRID = (1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 90)
INNER_QUERY_SAMPLES = 2048

# stream keys, so pool draws and task draws never share a substream
_POOL_STREAM = 0
_TASK_STREAM = 1


@dataclass(frozen=True)
class GaussianClassSpec:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class SynthConfig:
    class_specs: tuple[GaussianClassSpec, ...]
    N_total: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_specs", tuple(self.class_specs))
        C = len(self.class_specs)
        if C < 2:
            raise ConfigError("need at least 2 classes")
        if self.N_total < C or self.N_total % C:
            raise ConfigError(f"N_total={self.N_total} must be a positive multiple of {C} classes")

    @property
    def num_classes(self) -> int:
        return len(self.class_specs)

    @property
    def per_class(self) -> int:
        return self.N_total // self.num_classes

    @classmethod
    def two_gaussians(cls, N_total: int = 1000, seed: int = 0, mu: float = 1.0, sigma: float = 1.0) -> SynthConfig:
        """N(-mu, sigma) against N(mu, sigma)."""
        return cls((GaussianClassSpec(-mu, sigma), GaussianClassSpec(mu, sigma)), N_total, seed)


def gen_gaussian_pool(config: SynthConfig, rng: np.random.Generator | None = None) -> LabeledPool:
    """Balanced 1-D pool, ``N_total / C`` draws per class."""
    if rng is None:
        rng = derive_rng(config.seed, _POOL_STREAM)
    n = config.per_class
    return pool_from_arrays([rng.normal(s.mu, s.sigma, size=n) for s in config.class_specs])


@dataclass(frozen=True)
class SweepPoint:
    Q: int
    var_abar: float
    mean_T: float
    repetitions: int


def _repetition(args) -> list[tuple[float, int]]:
    """Mean accuracy and task count for every Q on one freshly drawn pool.

    All Q values share the repetition's pool, so their estimates are
    positively correlated and differences between them are sharper.
    """
    config, K, S, q_grid, rep, adapter = args
    pool = gen_gaussian_pool(config, derive_rng(config.seed, _POOL_STREAM, rep))
    out = []
    for Q in q_grid:
        tasks = sample_until_depleted(pool, K, S, Q, int(derive_rng(config.seed, _TASK_STREAM, rep, Q).integers(2**63)))
        if tasks:
            out.append((math.fsum(evaluate_tasks(adapter, tasks, pool)) / len(tasks), len(tasks)))
        else:
            out.append((math.nan, 0))
    return out


def feasible_grid(config: SynthConfig, K: int, S: int, q_grid: Sequence[int] = DEFAULT_Q_GRID) -> list[int]:
    return [Q for Q in q_grid if estimate_task_count(config.num_classes, config.per_class, K, S, Q) >= 1]


def sweep_variance(config: SynthConfig, K: int, S: int, q_grid: Sequence[int] | None = None,
                   repetitions: int = 200, adapter=None, workers: int = 1) -> list[SweepPoint]:
    """Var(Ā) across independently regenerated datasets, for each Q.

    Repetition ``j`` draws its pool from a substream of ``(seed, j)``, so the
    result does not depend on ``workers``. Without an explicit grid the
    default grid is cut down to feasible values.
    """
    if repetitions < 2:
        raise ConfigError("need at least 2 repetitions")
    if K > config.num_classes:
        raise ConfigError(f"K={K} exceeds the {config.num_classes} synthetic classes")
    adapter = adapter if adapter is not None else NCC()
    grid = feasible_grid(config, K, S) if q_grid is None else list(q_grid)
    if not grid:
        raise ConfigError("no feasible Q in the grid")
    jobs = [(config, K, S, tuple(grid), rep, adapter) for rep in range(repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_repetition, jobs, chunksize=max(1, repetitions // (4 * workers))))
    else:
        rows = [_repetition(job) for job in jobs]
    points = []
    for i, Q in enumerate(grid):
        means = np.array([r[i][0] for r in rows])
        counts = np.array([r[i][1] for r in rows])
        used = counts > 0
        if used.sum() < 2:
            raise ConfigError(f"Q={Q} is infeasible: fewer than 2 repetitions produced any task")
        m = means[used]
        mean = math.fsum(m) / m.size
        var = math.fsum((m - mean) ** 2) / (m.size - 1)
        points.append(SweepPoint(Q, var, float(counts.mean()), int(used.sum())))
    return points


def sweep_to_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Q", "var_abar", "mean_T", "repetitions"])
    for p in points:
        w.writerow([p.Q, format(p.var_abar, ".17g"), format(p.mean_T, ".17g"), p.repetitions])
    return buf.getvalue()


def sweep_from_csv(text: str) -> list[SweepPoint]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["Q", "var_abar", "mean_T", "repetitions"]:
        raise DataError("sweep CSV must start with header Q,var_abar,mean_T,repetitions")
    points = []
    for line, row in enumerate(rows[1:], start=2):
        try:
            points.append(SweepPoint(int(row[0]), float(row[1]), float(row[2]), int(row[3])))
        except (ValueError, IndexError):
            raise DataError(f"sweep CSV line {line}: malformed row {row!r}") from None
    return points


# -- model fit -------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceModelFit:
    alpha: float
    beta: float
    gamma: float
    scale: float  # K / N_total
    residual_rms: float
    r_squared: float

    def predict(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=np.float64)
        return self.scale * (self.alpha * Q + self.beta / Q + self.gamma)

    @property
    def q_star(self) -> float:
        return q_star(self)


def fit_variance_model(points: Sequence[SweepPoint], K: int, N_total: int, C: int,
                       weighted: bool = False) -> VarianceModelFit:
    """Least-squares fit of Var(Ā)·N_total/K on the basis {Q, 1/Q, 1}.

    ``N_total`` is the whole pool (C classes of N_total/C samples each).
    ``weighted`` weights each point by its repetition count. R² and the
    residual RMS are reported on the scaled target.
    """
    if len({p.Q for p in points}) < 3:
        raise ConfigError("need at least 3 distinct Q values to fit 3 coefficients")
    if N_total % C:
        raise ConfigError(f"N_total={N_total} is not divisible by C={C}")
    Q = np.array([p.Q for p in points], dtype=np.float64)
    y = np.array([p.var_abar for p in points]) * N_total / K
    A = np.column_stack([Q, 1.0 / Q, np.ones_like(Q)])
    w = np.sqrt([p.repetitions for p in points]) if weighted else np.ones_like(Q)
    coef, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return VarianceModelFit(float(coef[0]), float(coef[1]), float(coef[2]), K / N_total,
                            math.sqrt(ss_res / len(points)), r2)


def q_star(fit: VarianceModelFit) -> float:
    """sqrt(β/α); ``math.inf`` when α <= 0, i.e. the variance keeps falling with Q."""
    if not fit.beta > 0:
        raise DataError(f"invalid fit: beta={fit.beta} must be > 0")
    if fit.alpha <= 0:
        return math.inf
    return math.sqrt(fit.beta / fit.alpha)


# -- conditional-accuracy moments ---------------------------------------------------


@dataclass(frozen=True)
class MomentEstimates:
    m1: float
    m2: float
    m3: float
    std_errors: tuple[float, float, float]
    mc_samples: int
    draws: np.ndarray | None = field(default=None, repr=False, compare=False)  # (n, 3) per-draw values


def moment_coefficients(m: MomentEstimates, K: int, S: int) -> tuple[float, float, float]:
    """(α, β, γ) of the Var(Ā) model."""
    alpha = m.m2 / K + m.m3 - m.m1**2
    beta = S * (m.m1 - m.m2) / K
    gamma = m.m1 / K - m.m2 / K + S * m.m2 / K + S * (m.m3 - m.m1**2)
    return alpha, beta, gamma


def predict_task_variance(m: MomentEstimates, K: int, Q: int) -> float:
    """Var(A_t) = m1/(KQ) + (Q-1)·m2/(KQ) + m3 - m1²."""
    return m.m1 / (K * Q) + (Q - 1) * m.m2 / (K * Q) + m.m3 - m.m1**2


def predict_task_variance_se(m: MomentEstimates, K: int, Q: int) -> float:
    """Monte-Carlo standard error of ``predict_task_variance`` (delta method)."""
    if m.draws is None:
        raise ConfigError("moment estimates carry no per-draw values")
    grad = np.array([1 / (K * Q) - 2 * m.m1, (Q - 1) / (K * Q), 1.0])
    g = m.draws @ grad
    return float(g.std(ddof=1) / math.sqrt(g.size))


def _ncc_gaussian_mu(specs: Sequence[GaussianClassSpec], centroids: np.ndarray) -> np.ndarray:
    """Exact P(NCC predicts c | x ~ class c) for 1-D Gaussian classes.

    With sorted centroids the decision regions are intervals bounded by
    midpoints of neighbours. ``centroids`` is (n, K); returns (n, K).
    """
    n, K = centroids.shape
    order = np.argsort(centroids, axis=1, kind="stable")
    srt = np.take_along_axis(centroids, order, axis=1)
    mids = (srt[:, 1:] + srt[:, :-1]) / 2
    lo = np.concatenate([np.full((n, 1), -np.inf), mids], axis=1)
    hi = np.concatenate([mids, np.full((n, 1), np.inf)], axis=1)
    mu_c = np.array([s.mu for s in specs])[order]
    sd_c = np.array([s.sigma for s in specs])[order]
    p = ndtr((hi - mu_c) / sd_c) - ndtr((lo - mu_c) / sd_c)
    out = np.empty_like(p)
    np.put_along_axis(out, order, p, axis=1)
    return out


def estimate_moments(config: SynthConfig, K: int, S: int, adapter=None, mc_samples: int = 10_000,
                     seed: int | None = None, inner_samples: int = INNER_QUERY_SAMPLES) -> MomentEstimates:
    """Monte-Carlo estimates of m1, m2, m3 over support-set draws.

    Each draw picks K of the synthetic classes and S samples from each.
    The conditional accuracy of every class is exact for NCC (Gaussian CDF
    over its decision interval) and for random guessing (1/K); other
    adapters are scored on ``inner_samples`` fresh queries per class.
    """
    if mc_samples < 100:
        raise ConfigError(f"mc_samples must be >= 100, got {mc_samples}")
    if not 2 <= K <= config.num_classes:
        raise ConfigError(f"K must be in [2, {config.num_classes}]")
    adapter = adapter if adapter is not None else NCC()
    rng = derive_rng(config.seed if seed is None else seed, 2)
    C = config.num_classes
    if K == C:
        chosen = np.tile(np.arange(C), (mc_samples, 1))
    else:
        chosen = np.sort(np.argsort(rng.random((mc_samples, C)), axis=1)[:, :K], axis=1)
    specs = np.array(config.class_specs, dtype=object)
    mus = np.array([s.mu for s in config.class_specs])[chosen]
    sds = np.array([s.sigma for s in config.class_specs])[chosen]

    if isinstance(adapter, RandomGuess):
        mu = np.full((mc_samples, K), 1.0 / K)
    elif isinstance(adapter, NCC) and not adapter.normalize:
        support = mus[:, :, None] + sds[:, :, None] * rng.standard_normal((mc_samples, K, S))
        cent = support.mean(axis=2)
        if K == C:
            mu = _ncc_gaussian_mu(config.class_specs, cent)
        else:
            mu = np.vstack([_ncc_gaussian_mu(specs[chosen[i]], cent[i:i + 1]) for i in range(mc_samples)])
    else:
        mu = np.empty((mc_samples, K))
        for i in range(mc_samples):
            support = [rng.normal(mus[i, k], sds[i, k], size=(S, 1)) for k in range(K)]
            model = adapter.fit(support)
            for k in range(K):
                x = rng.normal(mus[i, k], sds[i, k], size=(inner_samples, 1))
                mu[i, k] = float((model.predict(x) == k).mean())

    total = mu.sum(axis=1)
    sq = (mu**2).sum(axis=1)
    draws = np.column_stack([total / K, sq / K, (total**2 - sq) / K**2])
    means = [math.fsum(col) / mc_samples for col in draws.T]
    se = draws.std(axis=0, ddof=1) / math.sqrt(mc_samples)
    return MomentEstimates(means[0], means[1], means[2],
                           tuple(float(s) for s in se), mc_samples, draws)
