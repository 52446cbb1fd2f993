"""Sequential annotation sessions, evaluation metrics, and benchmarking.

One session alternates between recommending a batch of unlabeled samples
and folding the annotator's answers back into the belief state.  The
directed strategy ranks by posterior misclassification score and picks a
diverse batch through the determinantal solver; the uniform baseline
draws without replacement.  Evaluation compares confirmed components
against ground-truth patterns by majority vote.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .data import Dataset, SyntheticSpec, generate_synthetic, standardize
from .dpp import conditional_similarity, map_select, mixture_kernel
from .errors import (
    ConsistencyError,
    MissingLabelError,
    ParameterError,
    UndefinedMetricError,
)
from .gp import (
    DEFAULT_LOWER,
    DEFAULT_UPPER,
    initial_state,
    posterior,
    recalibrate_pattern,
    record_feedback,
    voi_scores,
)
from .graph import (
    DetectionState,
    PatternAssignment,
    build_mutual_knn,
    detect_new_patterns,
    ground_truth_patterns,
)
from .kernels import (
    DEFAULT_DELTA,
    DEFAULT_JITTER,
    KernelConfig,
    class_moments,
    feature_kernel_matrix,
    gram_matrix,
    select_bandwidths,
)

STRATEGY_DIRECTED = "DS"
STRATEGY_UNIFORM = "US"
DEFAULT_CUTOFFS = (0.1, 0.2)


@dataclass(frozen=True)
class SessionConfig:
    batch_size: int = 25
    budget: float = 0.2
    theta: float = 0.5
    m_threshold: int = 10
    k_nn: int = 10
    delta: float = DEFAULT_DELTA
    jitter: float = DEFAULT_JITTER
    lower: float = DEFAULT_LOWER
    upper: float = DEFAULT_UPPER
    seed: int = 0
    strategy: str = STRATEGY_DIRECTED

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 < self.budget <= 1.0:
            raise ParameterError("budget must be a fraction in (0, 1]")
        if not 0.0 <= self.theta <= 1.0:
            raise ParameterError("theta must be in [0, 1]")
        if self.m_threshold < 1:
            raise ParameterError("m_threshold must be >= 1")
        if self.k_nn < 0:
            raise ParameterError("k_nn must be >= 0")
        if self.strategy not in (STRATEGY_DIRECTED, STRATEGY_UNIFORM):
            raise ParameterError(f"unknown strategy {self.strategy!r}")


class Annotator(Protocol):
    def __call__(self, ids: list[int]) -> list[int]:
        """Return the true label for each requested sample id."""


class OracleAnnotator:
    """Answers from the dataset's hidden true labels."""

    def __init__(self, ds: Dataset):
        if not ds.has_true_labels:
            raise MissingLabelError("oracle annotator needs true labels")
        self._labels = ds.true_labels()

    def __call__(self, ids: list[int]) -> list[int]:
        return [int(self._labels[i]) for i in ids]


@dataclass(frozen=True)
class RoundLog:
    round_index: int
    chosen: tuple[int, ...]
    misclassified: tuple[bool, ...]
    new_patterns: tuple[tuple[int, ...], ...]
    queried_cum: int
    log_det: float | None = None
    swaps: int = 0


@dataclass
class SessionResult:
    n: int
    config: SessionConfig
    h_x: float
    h_y: float
    rounds: list[RoundLog] = field(default_factory=list)
    aborted: str | None = None

    @property
    def queried_total(self) -> int:
        return self.rounds[-1].queried_cum if self.rounds else 0

    def confirmations(self):
        """(round_index, queried_cum, members) in confirmation order."""
        for log in self.rounds:
            for members in log.new_patterns:
                yield log.round_index, log.queried_cum, members


class Session:
    """One live annotation session; the service and headless runs share it.

    The strategy sees embeddings, pseudolabels, and feedback bits only;
    true labels pass through `complete_round` from whoever answers.
    """

    def __init__(self, ds: Dataset, cfg: SessionConfig):
        self.cfg = cfg
        std = ds if ds.standardized else standardize(ds)
        self.n = std.n
        moments = class_moments(std)
        self.h_x, self.h_y, _, _ = select_bandwidths(std, moments, cfg.delta)
        kconf = KernelConfig(h_x=self.h_x, h_y=self.h_y, delta=cfg.delta,
                             jitter=cfg.jitter)
        self._gp = initial_state(gram_matrix(std, moments, kconf),
                                 lower=cfg.lower, upper=cfg.upper)
        self._similarity = feature_kernel_matrix(std, self.h_x)
        self.graph = build_mutual_knn(std, cfg.k_nn)
        self.pseudolabels = {s.id: s.pseudolabel for s in ds.samples}
        self.detection = DetectionState()
        self._rng = np.random.default_rng(cfg.seed)
        self.max_queries = min(self.n, math.floor(cfg.budget * self.n))
        self.rounds: list[RoundLog] = []
        self.pending: list[int] | None = None
        self._pending_diag: tuple[float | None, int] = (None, 0)
        self._mis_ids: set[int] = set()

    @property
    def queried_count(self) -> int:
        return len(self._gp.queried)

    @property
    def finished(self) -> bool:
        return self.pending is None and self.queried_count >= self.max_queries

    def propose_batch(self) -> list[int]:
        """Pick the next batch; empty when the budget is spent."""
        if self.pending is not None:
            raise ConsistencyError("previous batch still awaits labels")
        r = min(self.cfg.batch_size, self.max_queries - self.queried_count)
        if r <= 0:
            return []
        if self.cfg.strategy == STRATEGY_UNIFORM:
            unq = self._gp.unqueried_ids()
            chosen = self._rng.choice(unq, size=r, replace=False)
            self.pending = sorted(int(i) for i in chosen)
            self._pending_diag = (None, 0)
        else:
            post = posterior(self._gp)
            scores = voi_scores(post)
            s_cond, ids = conditional_similarity(
                self._similarity, set(self._gp.queried)
            )
            kernel = mixture_kernel(s_cond, scores, self.cfg.theta)
            sel = map_select(kernel, r)
            self.pending = sorted(sel.chosen)
            self._pending_diag = (sel.log_det, sel.swaps)
        return list(self.pending)

    def complete_round(self, labels: dict[int, int]) -> RoundLog:
        """Fold one batch of true labels into the belief and detect patterns."""
        if self.pending is None:
            raise ConsistencyError("no batch is awaiting labels")
        if set(labels) != set(self.pending):
            missing = sorted(set(self.pending) - set(labels))
            extra = sorted(set(labels) - set(self.pending))
            raise ConsistencyError(
                f"labels must cover exactly the pending batch; "
                f"missing {missing}, unexpected {extra}"
            )
        flags = []
        for sid in self.pending:
            mis = labels[sid] != self.pseudolabels[sid]
            flags.append(mis)
            self._gp = record_feedback(self._gp, sid, mis)
            if mis:
                self._mis_ids.add(sid)
        round_index = len(self.rounds)
        new = detect_new_patterns(self.graph, self.detection, self._mis_ids,
                                  self.cfg.m_threshold, round_index=round_index)
        for members in new:
            self._gp = recalibrate_pattern(self._gp, set(members))
        log_det, swaps = self._pending_diag
        log = RoundLog(
            round_index=round_index,
            chosen=tuple(self.pending),
            misclassified=tuple(flags),
            new_patterns=tuple(tuple(sorted(m)) for m in new),
            queried_cum=self.queried_count,
            log_det=log_det,
            swaps=swaps,
        )
        self.rounds.append(log)
        self.pending = None
        self._pending_diag = (None, 0)
        return log


def run_session(ds: Dataset, truth: PatternAssignment | None,
                cfg: SessionConfig, annotator: Annotator) -> SessionResult:
    """Drive a session to budget exhaustion with the given annotator.

    An annotator exception aborts the session; rounds completed so far are
    preserved in the result.  `truth` is evaluation-only and unused here
    beyond being threaded to the caller's metrics step.
    """
    session = Session(ds, cfg)
    result = SessionResult(n=session.n, config=cfg,
                           h_x=session.h_x, h_y=session.h_y)
    result.rounds = session.rounds
    while True:
        batch = session.propose_batch()
        if not batch:
            break
        try:
            answers = annotator(batch)
        except Exception as exc:  # abort, keep partial logs
            result.aborted = f"annotator failed at round {len(session.rounds)}: {exc}"
            return result
        session.complete_round(dict(zip(batch, answers)))
    return result


# --------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class Metrics:
    sensitivity: float
    effectiveness: dict[float, float]
    detected: tuple[tuple[int, int, int], ...]  # (gt pattern, round, queried_cum)


def match_component(members, truth: PatternAssignment) -> int:
    """Majority vote of members' ground-truth pattern ids.

    Ties go to the numerically lowest id; a winning -1 means the
    component is spurious and matches nothing.
    """
    votes: dict[int, int] = {}
    for sid in members:
        pid = int(truth.pattern_of[sid])
        votes[pid] = votes.get(pid, 0) + 1
    best = max(votes.values())
    return min(pid for pid, count in votes.items() if count == best)


def evaluate_metrics(result: SessionResult, truth: PatternAssignment,
                     cutoffs=DEFAULT_CUTOFFS) -> Metrics:
    if truth.p == 0:
        raise UndefinedMetricError("ground truth contains no patterns")
    n = result.n
    detected: list[tuple[int, int, int]] = []
    seen: set[int] = set()
    for round_index, queried_cum, members in result.confirmations():
        pid = match_component(members, truth)
        if pid > 0 and pid not in seen:
            seen.add(pid)
            detected.append((pid, round_index, queried_cum))
    sensitivity = detected[0][2] / n if detected else 1.0
    effectiveness = {
        float(f): sum(1 for _, _, q in detected if q <= f * n) / truth.p
        for f in cutoffs
    }
    return Metrics(sensitivity=sensitivity, effectiveness=effectiveness,
                   detected=tuple(detected))


# --------------------------------------------------------------- benchmark

@dataclass
class BenchmarkEntry:
    dataset: str
    strategy: str
    theta: float
    seed: int
    result: SessionResult | None = None
    metrics: Metrics | None = None
    error: str | None = None


def run_benchmark(
    datasets: list[tuple[str, Dataset, PatternAssignment]],
    configs: list[SessionConfig],
    seeds: list[int],
    cutoffs=DEFAULT_CUTOFFS,
    annotator_factory: Callable[[Dataset], Annotator] = OracleAnnotator,
) -> list[BenchmarkEntry]:
    """Every (dataset, config, seed) cell; failures recorded, not raised."""
    entries = []
    for name, ds, truth in datasets:
        for cfg in configs:
            for seed in seeds:
                cell = BenchmarkEntry(dataset=name, strategy=cfg.strategy,
                                      theta=cfg.theta, seed=seed)
                try:
                    run_cfg = replace(cfg, seed=seed)
                    result = run_session(ds, truth, run_cfg,
                                         annotator_factory(ds))
                    cell.result = result
                    if result.aborted:
                        cell.error = result.aborted
                    else:
                        cell.metrics = evaluate_metrics(result, truth, cutoffs)
                except Exception as exc:
                    cell.error = f"{type(exc).__name__}: {exc}"
                entries.append(cell)
    return entries


# noise counts at n=1000; scaled proportionally for other sizes
SNR_GROUP_NOISE = {"snr2.0": 40, "snr1.0": 80, "snr0.5": 160}


def snr_benchmark_suite(
    datasets_per_group: int = 10,
    n: int = 1000,
    d: int = 8,
    n_classes: int = 4,
    n_patterns: int = 4,
    pattern_size: int = 20,
    k_nn: int = 10,
    m_threshold: int = 10,
    base_seed: int = 100,
) -> list[tuple[str, Dataset, PatternAssignment]]:
    """Planted datasets in three signal-to-noise groups with ground truth."""
    suite = []
    seed = base_seed
    for group, noise_at_1000 in SNR_GROUP_NOISE.items():
        noise = max(1, round(noise_at_1000 * n / 1000))
        for i in range(datasets_per_group):
            spec = SyntheticSpec(
                n=n, d=d, n_classes=n_classes, n_patterns=n_patterns,
                pattern_size=pattern_size, noise_misclassified=noise,
                cluster_spread=1.0, cluster_separation=10.0, seed=seed,
            )
            ds = generate_synthetic(spec)
            graph = build_mutual_knn(standardize(ds), k_nn)
            truth = ground_truth_patterns(graph, ds.misclassified_mask(),
                                          m_threshold)
            suite.append((f"{group}/{i}", ds, truth))
            seed += 1
    return suite


def summarize_benchmark(entries: list[BenchmarkEntry],
                        cutoffs=DEFAULT_CUTOFFS) -> list[dict]:
    """Mean and std of each metric per (dataset, strategy, theta)."""
    groups: dict[tuple[str, str, float], list[BenchmarkEntry]] = {}
    for e in entries:
        if e.metrics is not None:
            groups.setdefault((e.dataset, e.strategy, e.theta), []).append(e)
    rows = []
    for (dataset, strategy, theta), cells in sorted(groups.items()):
        row = {
            "dataset": dataset,
            "strategy": strategy,
            "theta": theta,
            "sessions": len(cells),
        }
        sens = np.array([c.metrics.sensitivity for c in cells])
        row["sensitivity_mean"] = float(sens.mean())
        row["sensitivity_std"] = float(sens.std())
        for f in cutoffs:
            eff = np.array([c.metrics.effectiveness[float(f)] for c in cells])
            row[f"effectiveness_{f}_mean"] = float(eff.mean())
            row[f"effectiveness_{f}_std"] = float(eff.std())
        rows.append(row)
    return rows
