"""Round-level CSV, session summary JSON, and rendered progress figures.

Figures are written next to the delimited output so a report directory is
self-contained: one progress chart per session and comparison charts per
benchmark.  The non-interactive backend is forced so rendering works in
headless runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

from .engine import (
    BenchmarkEntry,
    Metrics,
    SessionResult,
    summarize_benchmark,
)

CSV_COLUMNS = [
    "dataset", "strategy", "theta", "seed", "round", "queried_cum",
    "new_misclassified", "patterns_confirmed_cum", "first_pattern_queried_at",
]

plt.rcParams.update({
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def session_rows(result: SessionResult, dataset: str,
                 metrics: Metrics | None = None) -> list[dict]:
    """One CSV row per round, in the fixed column order."""
    first = ""
    if metrics is not None and metrics.detected:
        first = metrics.detected[0][2]
    rows = []
    confirmed_cum = 0
    for log in result.rounds:
        confirmed_cum += len(log.new_patterns)
        rows.append({
            "dataset": dataset,
            "strategy": result.config.strategy,
            "theta": result.config.theta,
            "seed": result.config.seed,
            "round": log.round_index,
            "queried_cum": log.queried_cum,
            "new_misclassified": sum(log.misclassified),
            "patterns_confirmed_cum": confirmed_cum,
            "first_pattern_queried_at": first,
        })
    return rows


def write_rounds_csv(rows: list[dict], path: str | Path) -> None:
    pd.DataFrame(rows, columns=CSV_COLUMNS).to_csv(path, index=False)


def session_summary(result: SessionResult, dataset: str,
                    metrics: Metrics | None = None) -> dict:
    summary = {
        "dataset": dataset,
        "n": result.n,
        "config": asdict(result.config),
        "bandwidths": {"h_x": result.h_x, "h_y": result.h_y},
        "rounds_executed": len(result.rounds),
        "queried_total": result.queried_total,
        "confirmed_patterns": [
            {"round": r, "queried_cum": q, "members": list(m)}
            for r, q, m in result.confirmations()
        ],
        "aborted": result.aborted,
    }
    if metrics is not None:
        summary["sensitivity"] = metrics.sensitivity
        summary["effectiveness"] = {str(k): v for k, v in metrics.effectiveness.items()}
    return summary


def write_summary_json(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def render_session_figure(result: SessionResult, path: str | Path) -> None:
    """Queried fraction vs confirmations, with per-round hit counts below."""
    rounds = result.rounds
    queried = [log.queried_cum / result.n for log in rounds]
    confirmed = []
    total = 0
    for log in rounds:
        total += len(log.new_patterns)
        confirmed.append(total)
    hits = [sum(log.misclassified) for log in rounds]

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True,
                                   height_ratios=[2, 1])
    ax1.step(queried, confirmed, where="post", marker="o", ms=3)
    ax1.set_ylabel("patterns confirmed")
    ax1.set_title(
        f"{result.config.strategy} theta={result.config.theta} "
        f"seed={result.config.seed}"
    )
    ax2.bar(queried, hits, width=0.8 * (queried[0] if queried else 0.01),
            align="center")
    ax2.set_xlabel("fraction of dataset queried")
    ax2.set_ylabel("new misclassified")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_benchmark_figure(entries: list[BenchmarkEntry], path: str | Path,
                            cutoffs=(0.1, 0.2)) -> None:
    """Mean sensitivity and effectiveness per strategy variant, by dataset."""
    rows = summarize_benchmark(entries, cutoffs=cutoffs)
    if not rows:
        raise ValueError("no successful benchmark cells to plot")
    df = pd.DataFrame(rows)
    df["variant"] = df.apply(
        lambda r: r["strategy"] if r["strategy"] == "US"
        else f"DS {r['theta']:g}", axis=1)
    metrics = ["sensitivity_mean"] + [f"effectiveness_{f}_mean" for f in cutoffs]
    titles = ["sensitivity (lower is better)"] + [
        f"effectiveness @ {int(f * 100)}%" for f in cutoffs
    ]
    fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.5))
    for ax, metric, title in zip(axes, metrics, titles):
        pivot = df.pivot_table(index="variant", columns="dataset",
                               values=metric, sort=True)
        pivot.plot.bar(ax=ax, legend=False)
        ax.set_title(title)
        ax.set_xlabel("")
        ax.tick_params(axis="x", rotation=45)
    axes[-1].legend(title="dataset", fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_session_report(result: SessionResult, dataset: str, out_dir: str | Path,
                         metrics: Metrics | None = None) -> dict[str, Path]:
    """CSV + JSON + figure for one session; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "rounds_csv": out / "rounds.csv",
        "summary_json": out / "summary.json",
        "figure": out / "session.png",
    }
    write_rounds_csv(session_rows(result, dataset, metrics), paths["rounds_csv"])
    write_summary_json(session_summary(result, dataset, metrics),
                       paths["summary_json"])
    render_session_figure(result, paths["figure"])
    return paths


def write_benchmark_report(entries: list[BenchmarkEntry], out_dir: str | Path,
                           cutoffs=(0.1, 0.2)) -> dict[str, Path]:
    """Round CSV over all cells, summary CSV/JSON, comparison figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for e in entries:
        if e.result is not None:
            rows.extend(session_rows(e.result, e.dataset, e.metrics))
    summary = summarize_benchmark(entries, cutoffs=cutoffs)
    errors = [
        {"dataset": e.dataset, "strategy": e.strategy, "theta": e.theta,
         "seed": e.seed, "error": e.error}
        for e in entries if e.error
    ]
    paths = {
        "rounds_csv": out / "rounds.csv",
        "summary_csv": out / "summary.csv",
        "summary_json": out / "summary.json",
        "figure": out / "benchmark.png",
    }
    write_rounds_csv(rows, paths["rounds_csv"])
    pd.DataFrame(summary).to_csv(paths["summary_csv"], index=False)
    write_summary_json({"cells": summary, "errors": errors},
                       paths["summary_json"])
    render_benchmark_figure(entries, paths["figure"], cutoffs=cutoffs)
    return paths
