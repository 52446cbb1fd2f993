"""Determinantal selection of diverse, high-value annotation batches.

The similarity kernel is conditioned on everything already queried, mixed
with a diagonal of per-sample scores, and the batch is the approximate
MAP of the resulting L-ensemble under a cardinality constraint: greedy
construction with incremental factor updates, then best-improvement
2-swap local search.  Exact log-determinants verify every applied swap,
so the final selection never scores below the greedy one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalError, ParameterError
from .gp import VoiScores

_RETRY_JITTER = 1e-6
_SWAP_TOL = 1e-10
_TINY = 1e-300


def conditional_similarity(
    s_full: np.ndarray, queried: set[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Similarity over unqueried samples given the queried set.

    Computed as the Schur complement of the queried block, which equals
    inverting the full matrix plus the unqueried-indicator diagonal,
    restricting to unqueried positions, inverting again, and subtracting
    the identity.  Returns (matrix, unqueried ids ascending).
    """
    n = s_full.shape[0]
    if s_full.shape != (n, n):
        raise ParameterError("similarity matrix must be square")
    bad = [i for i in queried if not 0 <= i < n]
    if bad:
        raise ParameterError(f"queried ids outside 0..{n - 1}: {sorted(bad)}")
    mask = np.ones(n, dtype=bool)
    mask[list(queried)] = False
    unq = np.flatnonzero(mask)
    if not queried:
        return s_full.copy(), unq
    q = np.asarray(sorted(queried))
    s_qq = s_full[np.ix_(q, q)]
    s_qu = s_full[np.ix_(q, unq)]
    s_uu = s_full[np.ix_(unq, unq)]
    try:
        solved = cho_solve(cho_factor(s_qq, lower=True), s_qu)
        cond = s_uu - s_qu.T @ solved
    except np.linalg.LinAlgError:
        # retry once, regularizing the matrix being inverted
        eye = np.eye(len(q))
        try:
            solved = cho_solve(
                cho_factor(s_qq + _RETRY_JITTER * eye, lower=True), s_qu
            )
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"similarity conditioning failed for {len(q)} queried samples"
            ) from exc
        cond = s_uu + _RETRY_JITTER * np.eye(len(unq)) - s_qu.T @ solved
    return (cond + cond.T) / 2.0, unq


@dataclass(frozen=True)
class DppKernel:
    l: np.ndarray           # mixture matrix over unqueried positions
    s_cond: np.ndarray
    p_diag: np.ndarray
    theta: float
    index_map: np.ndarray   # position -> sample id


def mixture_kernel(s_cond: np.ndarray, scores: VoiScores, theta: float) -> DppKernel:
    """theta * similarity + (1 - theta) * diag(scores)."""
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f"theta must be in [0, 1], got {theta}")
    gamma = np.asarray(scores.gamma, dtype=np.float64)
    if s_cond.shape != (gamma.size, gamma.size):
        raise ParameterError(
            f"similarity is {s_cond.shape} but {gamma.size} scores were given"
        )
    l = theta * s_cond + (1.0 - theta) * np.diag(gamma)
    return DppKernel(l=l, s_cond=s_cond, p_diag=gamma, theta=theta,
                     index_map=np.asarray(scores.ids))


@dataclass(frozen=True)
class SelectionResult:
    chosen: frozenset[int]  # sample ids
    log_det: float
    greedy_log_det: float
    swaps: int


def _submatrix_log_det(l: np.ndarray, positions: list[int]) -> float:
    sign, ld = np.linalg.slogdet(l[np.ix_(positions, positions)])
    return ld if sign > 0 else -np.inf


def _greedy(l: np.ndarray, s: int) -> list[int]:
    """Iterative max-marginal-gain construction via rank-1 factor updates.

    di2s holds each candidate's conditional variance given the current
    pick, which is exactly its log-det gain; argmax ties resolve to the
    lowest position.
    """
    n = l.shape[0]
    cis = np.zeros((s, n))
    di2s = np.diag(l).astype(np.float64).copy()
    chosen: list[int] = []
    for k in range(s):
        j = int(np.argmax(di2s))
        gain = di2s[j]
        chosen.append(j)
        if k == s - 1:
            break
        eis = (l[j] - cis[:k].T @ cis[:k, j]) / np.sqrt(max(gain, _TINY))
        cis[k] = eis
        di2s -= eis ** 2
        di2s[j] = -np.inf
    return chosen


def _swap_candidates(l, inside, outside):
    """Estimated log-det ratio for every (remove p, add j) swap.

    Uses the inverse of the chosen principal submatrix: removing position
    p multiplies the determinant by inv[p, p]; adding j then multiplies by
    its conditional variance, expanded from full-set quantities so all
    pairs are scored with two matrix products.
    """
    a = np.linalg.inv(l[np.ix_(inside, inside)])
    a = (a + a.T) / 2.0
    b = l[np.ix_(outside, inside)]
    w = b @ a
    q = np.einsum("ij,ij->i", b, w)
    app = np.diag(a)
    num = w - b * app[None, :]
    quad = (q[:, None] - 2.0 * b * w + (b ** 2) * app[None, :]
            - num ** 2 / app[None, :])
    gains = l[np.asarray(outside), np.asarray(outside)][:, None] - quad
    return app[None, :] * gains  # ratio new_det / old_det per (j, p)


def map_select(kernel: DppKernel, s: int) -> SelectionResult:
    """Approximate MAP batch of size s (reduced to the matrix size if needed)."""
    l = kernel.l
    if not np.isfinite(l).all():
        raise NumericalError("kernel contains non-finite entries")
    n = l.shape[0]
    if s < 1:
        raise ParameterError("batch size must be >= 1")
    s = min(s, n)

    chosen = _greedy(l, s)
    greedy_ld = _submatrix_log_det(l, chosen)
    cur_ld = greedy_ld
    swaps = 0
    while True:
        inside = sorted(chosen)
        outside = [i for i in range(n) if i not in set(inside)]
        if not outside:
            break
        try:
            ratios = _swap_candidates(l, inside, outside)
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(ratios).any():
            break
        flat = np.argsort(-ratios, axis=None, kind="stable")
        applied = False
        for idx in flat[:5]:
            jj, pp = np.unravel_index(int(idx), ratios.shape)
            if not np.isfinite(ratios[jj, pp]) or ratios[jj, pp] <= 1.0:
                break
            trial = [c for c in inside if c != inside[pp]] + [outside[jj]]
            trial_ld = _submatrix_log_det(l, trial)
            if trial_ld > cur_ld + _SWAP_TOL:
                chosen = trial
                cur_ld = trial_ld
                swaps += 1
                applied = True
                break
        if not applied:
            break

    ids = frozenset(int(kernel.index_map[p]) for p in chosen)
    return SelectionResult(chosen=ids, log_det=cur_ld,
                           greedy_log_det=greedy_ld, swaps=swaps)
