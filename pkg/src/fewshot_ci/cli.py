"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 too few tasks.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .adapters import make_adapter
from .compare import compare_runs, conclusiveness_report, emit_matrix, matrix_from_json
from .errors import ConfigError, DataError, FewShotError
from .features import ingest_feature_file
from .protocol import config_from_mapping, parse_synth, parse_value, read_config_file, run_protocol
from .tasks import load_manifest, save_manifest
from .variance import (
    DEFAULT_Q_GRID,
    SynthConfig,
    fit_variance_model,
    q_star,
    sweep_from_csv,
    sweep_to_csv,
    sweep_variance,
)

FORMATS = ("table_text", "machine_json", "csv")


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise DataError(f"cannot write {out}: {e.strerror}") from None


def _adapter_options(pairs: list[str] | None) -> dict:
    opts = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--adapter-opt expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        opts[key.strip()] = parse_value(value.strip())
    return opts


def cmd_ingest_check(args) -> int:
    pool = ingest_feature_file(args.input)
    print(f"classes: {pool.num_classes}")
    print(f"dim: {pool.dim}")
    print(f"samples: {pool.total}")
    for label, n in zip(pool.labels, pool.counts):
        print(f"  {label}: {n}")
    return 0


def cmd_run(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    flags = {
        "seed": args.seed, "mode": args.mode, "ways": args.ways, "shots": args.shots,
        "queries": args.queries, "tasks": args.tasks, "input": args.input, "synth": args.synth,
        "synth_size": args.synth_size, "adapter": args.adapter, "method_id": args.method_id,
        "p_limit": args.p_limit, "out": args.out, "workers": args.workers,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    opts = {k[len("adapter."):]: parse_value(v) for k, v in values.items() if k.startswith("adapter.")}
    values = {k: v for k, v in values.items() if not k.startswith("adapter.")}
    opts.update(_adapter_options(args.adapter_opt))
    values["adapter_options"] = opts
    config = config_from_mapping(values)
    result = run_protocol(config)
    m, ci = result.manifest, result.interval
    kind = "closed" if m.sampling_mode == "with_replacement" else "open"
    print(f"{m.method_id}: {ci.mean * 100:.2f} ± {ci.half_width * 100:.2f} "
          f"({kind} {ci.p_limit:.0%} CI, T={ci.T}, K={m.spec.ways}, S={m.spec.shots}, Q={m.spec.queries})")
    if config.out:
        try:
            save_manifest(m, config.out)
        except OSError as e:
            raise DataError(f"cannot write {config.out}: {e.strerror}") from None
    return 0


def cmd_compare(args) -> int:
    manifests = [load_manifest(p) for p in args.manifests]
    mat = compare_runs(manifests, args.p_limit, label=args.label or "")
    _write(emit_matrix(mat, args.format), args.out)
    return 0


def _synth_config(args) -> SynthConfig:
    return SynthConfig(parse_synth(args.synth), args.synth_size, args.seed)


def cmd_sweep(args) -> int:
    config = _synth_config(args)
    grid = [int(q) for q in args.q_grid.split(",")] if args.q_grid else None
    adapter = make_adapter(args.adapter, **_adapter_options(args.adapter_opt))
    points = sweep_variance(config, args.ways, args.shots, grid, args.repetitions, adapter, args.workers)
    _write(sweep_to_csv(points), args.out)
    return 0


def cmd_fit(args) -> int:
    try:
        text = Path(args.sweep).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {args.sweep}: {e.strerror}") from None
    points = sweep_from_csv(text)
    fit = fit_variance_model(points, args.ways, args.size, args.classes, weighted=args.weighted)
    qs = q_star(fit)
    obj = {
        "alpha": fit.alpha, "beta": fit.beta, "gamma": fit.gamma, "scale": fit.scale,
        "r_squared": fit.r_squared, "residual_rms": fit.residual_rms,
        "q_star": None if math.isinf(qs) else qs,
        "q_star_boundary": math.isinf(qs),
    }
    if args.format == "machine_json":
        _write(json.dumps(obj, indent=1) + "\n", args.out)
    else:
        lines = [f"{k}={format(v, '.17g') if isinstance(v, float) else v}" for k, v in obj.items()]
        if math.isinf(qs):
            lines.append("# alpha <= 0: variance decreases with Q; use the largest feasible Q")
        else:
            lines.append(f"# suggested queries per class: {max(1, round(qs))}")
        _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_report(args) -> int:
    mats = []
    for p in args.matrices:
        try:
            mats.append(matrix_from_json(Path(p).read_text(encoding="utf-8")))
        except OSError as e:
            raise DataError(f"cannot read {p}: {e.strerror}") from None
    _write(conclusiveness_report(mats).to_text(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fewshot-ci", description="Confidence intervals, paired comparisons and query-size selection for few-shot benchmarks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="validate a feature CSV and summarise it")
    p.add_argument("input")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("run", help="sample tasks, evaluate an adapter, write a manifest")
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("with_replacement", "depletion"))
    p.add_argument("--ways", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--queries", type=int)
    p.add_argument("--tasks", type=int)
    p.add_argument("--input", help="feature CSV")
    p.add_argument("--synth", help="synthetic 1-D classes, 'mu:sigma,mu:sigma,...'")
    p.add_argument("--synth-size", type=int)
    p.add_argument("--adapter", choices=("ncc", "lr", "oracle", "random"))
    p.add_argument("--adapter-opt", action="append", metavar="KEY=VALUE")
    p.add_argument("--method-id")
    p.add_argument("--p-limit", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="manifest path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="significance matrix over saved manifests")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--p-limit", type=float, default=0.95)
    p.add_argument("--format", choices=FORMATS, default="table_text")
    p.add_argument("--label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="Var(mean accuracy) vs Q on synthetic Gaussian classes")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--synth", default="-1:1,1:1")
    p.add_argument("--synth-size", type=int, default=1000)
    p.add_argument("--ways", type=int, default=2)
    p.add_argument("--shots", type=int, default=5)
    p.add_argument("--q-grid", help="comma-separated; default " + ",".join(map(str, DEFAULT_Q_GRID)))
    p.add_argument("--repetitions", type=int, default=200)
    p.add_argument("--adapter", choices=("ncc", "lr", "random"), default="ncc")
    p.add_argument("--adapter-opt", action="append", metavar="KEY=VALUE")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit the variance model to a sweep CSV and report Q*")
    p.add_argument("sweep")
    p.add_argument("--ways", type=int, default=2)
    p.add_argument("--size", type=int, default=1000, help="total samples in the pool")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--format", choices=("table_text", "machine_json"), default="table_text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="count conclusive comparisons across matrix JSON files")
    p.add_argument("matrices", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FewShotError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
