"""Statistically sound evaluation of few-shot classifiers.

Task sampling with and without replacement, closed/open/paired confidence
intervals, significance verdicts, and a task-sizing model for choosing the
number of queries per class.
"""

__version__ = "0.1.0"

from .adapters import NCC, LogisticRegression, Oracle, RandomGuess, evaluate_task, evaluate_tasks, make_adapter
from .compare import SignificanceMatrix, compare_runs, conclusiveness_report, emit_matrix
from .errors import ConfigError, DataError, FewShotError, InsufficientTasksError
from .features import ingest_feature_file
from .protocol import ProtocolConfig, run_protocol
from .samplers import estimate_task_count, sample_until_depleted, sample_with_replacement
from .stats import (
    IntervalEstimate,
    Verdict,
    compare_intervals,
    conclusive_probability_bound,
    mean_and_variance,
    normal_ci,
    paired_ci,
    paired_series,
    student_ci,
    student_critical,
)
from .tasks import (
    LabeledPool,
    RunManifest,
    Task,
    TaskSpec,
    build_pool,
    load_manifest,
    pool_from_arrays,
    save_manifest,
)
from .variance import (
    SynthConfig,
    estimate_moments,
    fit_variance_model,
    gen_gaussian_pool,
    predict_task_variance,
    q_star,
    sweep_variance,
)
