"""End-to-end evaluation runs: sample tasks, score an adapter, build a manifest."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .adapters import evaluate_tasks, make_adapter
from .errors import ConfigError, InsufficientTasksError
from .features import ingest_feature_file
from .samplers import sample_until_depleted, sample_with_replacement
from .stats import DEFAULT_P_LIMIT, IntervalEstimate, normal_ci, student_ci
from .tasks import SAMPLING_MODES, LabeledPool, RunManifest, TaskSpec
from .variance import GaussianClassSpec, SynthConfig, gen_gaussian_pool


@dataclass
class ProtocolConfig:
    seed: int
    ways: int
    shots: int
    queries: int
    mode: str = "depletion"
    tasks: int | None = None
    input: str | None = None
    synth: str | None = None  # "mu:sigma,mu:sigma,..."
    synth_size: int = 1000
    adapter: str = "ncc"
    adapter_options: dict = field(default_factory=dict)
    method_id: str | None = None
    p_limit: float = DEFAULT_P_LIMIT
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.mode not in SAMPLING_MODES:
            raise ConfigError(f"mode must be one of {SAMPLING_MODES}, got {self.mode!r}")
        if self.mode == "with_replacement" and self.tasks is None:
            raise ConfigError("with_replacement mode needs --tasks")
        if self.mode == "depletion" and self.tasks is not None:
            raise ConfigError("--tasks only applies to with_replacement mode")
        if (self.input is None) == (self.synth is None):
            raise ConfigError("give exactly one of input (feature CSV) or synth")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        self.spec  # validates K, S, Q, T

    @property
    def spec(self) -> TaskSpec:
        return TaskSpec(self.ways, self.shots, self.queries, self.tasks)


def parse_synth(text: str) -> list[GaussianClassSpec]:
    try:
        specs = []
        for part in text.split(","):
            mu, sigma = part.split(":")
            specs.append(GaussianClassSpec(float(mu), float(sigma)))
        return specs
    except ValueError:
        raise ConfigError(f"synth must look like 'mu:sigma,mu:sigma', got {text!r}") from None


def parse_value(raw: str):
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    return raw


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def config_from_mapping(values: dict) -> ProtocolConfig:
    """Build a ProtocolConfig from string or typed values; ``adapter.x`` keys become adapter options."""
    known = {f.name: f for f in fields(ProtocolConfig)}
    kwargs, options = {}, dict(values.get("adapter_options") or {})
    for key, value in values.items():
        if key == "adapter_options" or value is None:
            continue
        if key.startswith("adapter."):
            options[key[len("adapter."):]] = parse_value(value) if isinstance(value, str) else value
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str) and key in ("seed", "ways", "shots", "queries", "tasks", "synth_size", "workers"):
            try:
                value = int(value)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {value!r}") from None
        elif isinstance(value, str) and key == "p_limit":
            value = float(value)
        kwargs[key] = value
    if "seed" not in kwargs:
        raise ConfigError("a seed is required; runs must be reproducible")
    for key in ("ways", "shots", "queries"):
        if key not in kwargs:
            raise ConfigError(f"missing required setting {key!r}")
    kwargs["adapter_options"] = options
    return ProtocolConfig(**kwargs)


def load_pool(config: ProtocolConfig) -> LabeledPool:
    if config.input is not None:
        return ingest_feature_file(config.input)
    return gen_gaussian_pool(SynthConfig(parse_synth(config.synth), config.synth_size, config.seed))


@dataclass(frozen=True)
class RunResult:
    manifest: RunManifest
    interval: IntervalEstimate


def run_protocol(config: ProtocolConfig, pool: LabeledPool | None = None) -> RunResult:
    """Sample tasks in the configured mode and score the adapter on each.

    The interval is closed (normal) for with-replacement runs and open
    (Student) for depletion runs.
    """
    pool = pool if pool is not None else load_pool(config)
    adapter = make_adapter(config.adapter, **config.adapter_options)
    spec = config.spec
    if config.mode == "with_replacement":
        tasks = sample_with_replacement(pool, spec, config.seed, workers=config.workers)
    else:
        tasks = sample_until_depleted(pool, spec.ways, spec.shots, spec.queries, config.seed)
    if len(tasks) < 2:
        kind = "open" if config.mode == "depletion" else "closed"
        raise InsufficientTasksError(
            f"insufficient tasks for {kind} CI: sampling produced {len(tasks)} task(s)", len(tasks)
        )
    accs = evaluate_tasks(adapter, tasks, pool)
    manifest = RunManifest(
        master_seed=config.seed,
        spec=spec,
        sampling_mode=config.mode,
        method_id=config.method_id or config.adapter,
        tasks=tasks,
        accuracies=accs.tolist(),
        pool_id=pool.fingerprint(),
    )
    ci = normal_ci if config.mode == "with_replacement" else student_ci
    return RunResult(manifest, ci(accs, config.p_limit))


def replay_tasks(manifest: RunManifest, pool: LabeledPool) -> bool:
    """True if re-sampling from the manifest's seed reproduces its task list."""
    spec = manifest.spec
    if manifest.sampling_mode == "with_replacement":
        tasks = sample_with_replacement(pool, spec, manifest.master_seed)
    else:
        tasks = sample_until_depleted(pool, spec.ways, spec.shots, spec.queries, manifest.master_seed)
    return tuple(tasks) == manifest.tasks
