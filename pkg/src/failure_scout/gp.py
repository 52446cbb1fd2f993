"""Gaussian-process belief over a latent misclassification score.

Annotator feedback pins the latent score of a queried sample to a fixed
upper value (misclassified) or lower value (correct).  The posterior over
unqueried samples follows from conditioning the zero-mean joint Gaussian
with the session's Gram matrix; only the diagonal of the conditional
covariance is ever consumed.  Scores for ranking come from a second-order
Taylor expansion of the expected sigmoid, falling back to the first-order
term whenever the correction turns non-positive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .errors import ConsistencyError, DuplicateQueryError, NumericalError, ParameterError
from .kernels import GramMatrix

DEFAULT_LOWER = -3.0
DEFAULT_UPPER = 3.0

_VAR_TOL = 1e-8


@dataclass(frozen=True)
class GpState:
    """Gram matrix plus the ordered feedback history."""

    gram: GramMatrix
    queried: tuple[int, ...] = ()
    g_observe: tuple[float, ...] = ()
    lower: float = DEFAULT_LOWER
    upper: float = DEFAULT_UPPER

    def __post_init__(self):
        if not self.lower < 0 < self.upper:
            raise ParameterError("bounds must satisfy lower < 0 < upper")
        if len(self.queried) != len(set(self.queried)):
            raise DuplicateQueryError("queried ids contain duplicates")
        if len(self.queried) != len(self.g_observe):
            raise ConsistencyError("queried and g_observe lengths differ")

    @property
    def n(self) -> int:
        return self.gram.n

    def unqueried_ids(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.queried)] = False
        return np.flatnonzero(mask)


def initial_state(gram: GramMatrix, lower: float = DEFAULT_LOWER,
                  upper: float = DEFAULT_UPPER) -> GpState:
    return GpState(gram=gram, lower=lower, upper=upper)


def record_feedback(state: GpState, sample_id: int, misclassified: bool) -> GpState:
    """Append one annotator answer; the latent value is pinned to a bound."""
    if not 0 <= sample_id < state.n:
        raise ParameterError(f"sample id {sample_id} outside 0..{state.n - 1}")
    if sample_id in state.queried:
        raise DuplicateQueryError(f"sample {sample_id} was already queried")
    value = state.upper if misclassified else state.lower
    return replace(state, queried=state.queried + (sample_id,),
                   g_observe=state.g_observe + (value,))


def recalibrate_pattern(state: GpState, members: set[int]) -> GpState:
    """Rewrite confirmed-pattern members to the lower bound.

    Once a pattern is confirmed its members should stop pulling the belief
    upward, letting the search move on to undiscovered regions.
    """
    if not members:
        return state
    missing = members - set(state.queried)
    if missing:
        raise ConsistencyError(
            f"cannot recalibrate unqueried samples: {sorted(missing)}"
        )
    values = list(state.g_observe)
    for pos, sid in enumerate(state.queried):
        if sid in members:
            values[pos] = state.lower
    return replace(state, g_observe=tuple(values))


@dataclass(frozen=True)
class Posterior:
    ids: np.ndarray   # unqueried sample ids, ascending
    mean: np.ndarray
    var: np.ndarray


def posterior(state: GpState) -> Posterior:
    """Conditional mean and variance diagonal over unqueried samples."""
    k = state.gram.k
    unq = state.unqueried_ids()
    t = len(state.queried)
    if t == 0:
        return Posterior(ids=unq, mean=np.zeros(len(unq)), var=k[unq, unq].copy())
    q = np.asarray(state.queried)
    k_qq = k[np.ix_(q, q)] + state.gram.config.jitter * np.eye(t)
    k_qu = k[np.ix_(q, unq)]
    try:
        factor = cho_factor(k_qq, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"posterior conditioning failed with {t} observations"
        ) from exc
    solved = cho_solve(factor, k_qu)
    mean = solved.T @ np.asarray(state.g_observe)
    var = k[unq, unq] - np.einsum("ij,ij->j", k_qu, solved)
    if var.size and var.min() < -_VAR_TOL:
        raise NumericalError(
            f"negative posterior variance {var.min():.3e} with {t} observations"
        )
    np.maximum(var, 0.0, out=var)
    return Posterior(ids=unq, mean=mean, var=var)


@dataclass(frozen=True)
class VoiScores:
    ids: np.ndarray
    gamma: np.ndarray
    used_fallback: np.ndarray  # boolean per sample


def voi_scores(post: Posterior) -> VoiScores:
    """Expected sigmoid of the latent score, second-order in the variance.

    gamma = alpha + var/2 * alpha(1-alpha)(1-2alpha) with alpha the
    sigmoid of the posterior mean; non-positive values fall back to alpha,
    and results are capped at 1 so they can serve as probabilities.
    """
    alpha = expit(post.mean)
    beta = alpha * (1.0 - alpha) * (1.0 - 2.0 * alpha)
    gamma = alpha + 0.5 * post.var * beta
    fallback = gamma <= 0.0
    gamma = np.where(fallback, alpha, gamma)
    gamma = np.minimum(gamma, 1.0)
    return VoiScores(ids=post.ids, gamma=gamma, used_fallback=fallback)
