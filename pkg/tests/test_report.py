"""Report artifacts: delimited rounds, summary JSON, rendered figures."""

import json

from failure_scout.data import SyntheticSpec, generate_synthetic, standardize
from failure_scout.engine import (
    OracleAnnotator,
    SessionConfig,
    evaluate_metrics,
    run_benchmark,
    run_session,
)
from failure_scout.graph import build_mutual_knn, ground_truth_patterns
from failure_scout.report import (
    CSV_COLUMNS,
    session_rows,
    write_benchmark_report,
    write_session_report,
)

SPEC = SyntheticSpec(n=200, d=4, n_classes=2, n_patterns=2, pattern_size=12,
                     noise_misclassified=15, cluster_spread=0.5,
                     cluster_separation=10.0, seed=9)


def run_one(seed=0, strategy="DS"):
    ds = generate_synthetic(SPEC)
    graph = build_mutual_knn(standardize(ds), 8)
    truth = ground_truth_patterns(graph, ds.misclassified_mask(), 8)
    cfg = SessionConfig(batch_size=20, budget=0.4, theta=0.25, m_threshold=8,
                        k_nn=8, seed=seed, strategy=strategy)
    result = run_session(ds, truth, cfg, OracleAnnotator(ds))
    return ds, truth, result


def test_rows_follow_schema():
    _, truth, result = run_one()
    metrics = evaluate_metrics(result, truth)
    rows = session_rows(result, "demo", metrics)
    assert len(rows) == len(result.rounds)
    for row in rows:
        assert list(row) == CSV_COLUMNS
    assert rows[0]["queried_cum"] == 20
    confirmed = [r["patterns_confirmed_cum"] for r in rows]
    assert confirmed == sorted(confirmed)


def test_session_report_files(tmp_path):
    _, truth, result = run_one()
    metrics = evaluate_metrics(result, truth)
    paths = write_session_report(result, "demo", tmp_path, metrics)
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0
    summary = json.loads(paths["summary_json"].read_text())
    assert summary["dataset"] == "demo"
    assert summary["bandwidths"]["h_x"] > 0
    assert "sensitivity" in summary
    header = paths["rounds_csv"].read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    assert paths["figure"].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_csv_bytes_deterministic(tmp_path):
    out = []
    for run in range(2):
        _, truth, result = run_one()
        metrics = evaluate_metrics(result, truth)
        paths = write_session_report(result, "demo", tmp_path / str(run), metrics)
        out.append(paths["rounds_csv"].read_bytes())
    assert out[0] == out[1]


def test_benchmark_report_files(tmp_path):
    ds = generate_synthetic(SPEC)
    graph = build_mutual_knn(standardize(ds), 8)
    truth = ground_truth_patterns(graph, ds.misclassified_mask(), 8)
    configs = [
        SessionConfig(batch_size=20, budget=0.2, theta=t, m_threshold=8,
                      k_nn=8, strategy="DS")
        for t in (0.0, 0.5)
    ] + [SessionConfig(batch_size=20, budget=0.2, m_threshold=8, k_nn=8,
                       strategy="US")]
    entries = run_benchmark([("demo", ds, truth)], configs, seeds=[0, 1])
    paths = write_benchmark_report(entries, tmp_path)
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0
    summary = json.loads(paths["summary_json"].read_text())
    assert len(summary["cells"]) == 3
    assert summary["errors"] == []
