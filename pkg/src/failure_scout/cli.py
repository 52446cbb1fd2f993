"""Command-line entry points: synth, truth, run, bench, serve."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset, standardize
from .engine import (
    OracleAnnotator,
    SessionConfig,
    evaluate_metrics,
    run_benchmark,
    run_session,
    snr_benchmark_suite,
)
from .errors import FailureScoutError
from .graph import build_mutual_knn, ground_truth_patterns, load_ground_truth, save_ground_truth
from .kernels import DEFAULT_DELTA

DEFAULT_PORT = 8000
PORT_ENV_VAR = "FAILURE_SCOUT_PORT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="failure-scout",
        description="Recommend annotation batches that surface classifier "
                    "failure patterns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--patterns", type=int, default=4)
    p.add_argument("--pattern-size", type=int, default=20)
    p.add_argument("--noise", type=int, default=80)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("truth", help="derive ground-truth patterns from true labels")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--knn", required=True, type=int)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("run", help="run one annotated session against the oracle")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--budget", type=float, default=0.2)
    p.add_argument("--strategy", choices=["DS", "US"], default="DS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=None,
                   help="evidence threshold; defaults to the truth file's")
    p.add_argument("--knn", type=int, default=None,
                   help="graph neighbors; defaults to the truth file's")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)

    p = sub.add_parser("bench", help="synthetic SNR-group benchmark grid")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--datasets-per-group", type=int, default=10)
    p.add_argument("--us-seeds", type=int, default=10,
                   help="number of uniform-baseline seeds")
    p.add_argument("--thetas", type=str, default="0,0.25,0.5,0.75,1")
    p.add_argument("--budget", type=float, default=0.25)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--knn", type=int, default=10)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=100)

    p = sub.add_parser("serve", help="start the annotation HTTP API")
    p.add_argument("--port", type=int, default=None,
                   help=f"default: ${PORT_ENV_VAR} or {DEFAULT_PORT}")
    p.add_argument("--host", type=str, default="127.0.0.1")

    return parser


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n=args.n, d=args.d, n_classes=args.classes, n_patterns=args.patterns,
        pattern_size=args.pattern_size, noise_misclassified=args.noise,
        cluster_spread=args.spread, cluster_separation=args.separation,
        seed=args.seed,
    )
    spec.validate()
    save_dataset(generate_synthetic(spec), args.out)
    print(f"wrote {args.out} (n={args.n}, d={args.d}, classes={args.classes})")
    return 0


def _cmd_truth(args) -> int:
    ds = load_dataset(args.data, require_true_labels=True)
    graph = build_mutual_knn(standardize(ds), args.knn)
    truth = ground_truth_patterns(graph, ds.misclassified_mask(), args.m)
    save_ground_truth(truth, args.knn, args.out)
    print(f"wrote {args.out}: {truth.p} patterns (knn={args.knn}, m={args.m})")
    return 0


def _cmd_run(args, parser) -> int:
    if not 0.0 <= args.theta <= 1.0:
        parser.error(f"--theta must be in [0, 1], got {args.theta}")
    if not 0.0 < args.budget <= 1.0:
        parser.error(f"--budget must be in (0, 1], got {args.budget}")
    from .report import write_session_report

    ds = load_dataset(args.data, require_true_labels=True)
    truth, truth_knn = load_ground_truth(args.truth)
    cfg = SessionConfig(
        batch_size=args.batch_size, budget=args.budget, theta=args.theta,
        m_threshold=args.m if args.m is not None else truth.m_threshold,
        k_nn=args.knn if args.knn is not None else truth_knn,
        delta=args.delta, seed=args.seed, strategy=args.strategy,
    )
    result = run_session(ds, truth, cfg, OracleAnnotator(ds))
    metrics = None if result.aborted else evaluate_metrics(result, truth)
    paths = write_session_report(result, args.data.stem, args.out_dir, metrics)
    if metrics is not None:
        effs = ", ".join(f"@{f:g}={v:.3f}"
                         for f, v in sorted(metrics.effectiveness.items()))
        print(f"sensitivity={metrics.sensitivity:.4f}  effectiveness {effs}")
    print(f"report in {paths['rounds_csv'].parent}")
    return 0 if result.aborted is None else 1


def _cmd_bench(args, parser) -> int:
    try:
        thetas = [float(t) for t in args.thetas.split(",") if t.strip()]
    except ValueError:
        parser.error(f"--thetas must be comma-separated numbers: {args.thetas!r}")
    if any(not 0.0 <= t <= 1.0 for t in thetas):
        parser.error("every theta must be in [0, 1]")
    from .report import write_benchmark_report

    suite = snr_benchmark_suite(
        datasets_per_group=args.datasets_per_group, n=args.n,
        k_nn=args.knn, m_threshold=args.m, base_seed=args.base_seed,
    )
    common = dict(batch_size=args.batch_size, budget=args.budget,
                  m_threshold=args.m, k_nn=args.knn)
    ds_configs = [SessionConfig(strategy="DS", theta=t, **common) for t in thetas]
    us_config = SessionConfig(strategy="US", **common)
    entries = run_benchmark(suite, ds_configs, seeds=[0])
    entries += run_benchmark(suite, [us_config],
                             seeds=list(range(args.us_seeds)))
    paths = write_benchmark_report(entries, args.out_dir)
    failures = sum(1 for e in entries if e.error)
    print(f"{len(entries)} sessions ({failures} failed); "
          f"summary in {paths['summary_csv']}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port
    if port is None:
        port = int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT))
    uvicorn.run(create_app(), host=args.host, port=port)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "truth":
            return _cmd_truth(args)
        if args.command == "run":
            return _cmd_run(args, parser)
        if args.command == "bench":
            return _cmd_bench(args, parser)
        if args.command == "serve":
            return _cmd_serve(args)
    except FailureScoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
