"""Feature/label product kernel and dispersion-matched bandwidth selection.

The kernel multiplies a Gaussian kernel on embeddings with a Gaussian
kernel on the class-conditional moment embedding of pseudolabels (mean
vector plus covariance matrix, Frobenius distance).  Bandwidths are
chosen so the Gram matrix provably keeps a minimum Frobenius distance
from the identity: each factor receives an equal share of the log budget
ln((n-1)/delta^2), which by Jensen's inequality bounds the mean
off-diagonal entry from below by delta/sqrt(n-1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError, EmptyClassError, InsufficientDataError, ParameterError

DEFAULT_DELTA = np.sqrt(2.0) * 1e-6
DEFAULT_JITTER = 1e-6


@dataclass(frozen=True)
class ClassMoments:
    """Per-class mean, covariance (1/N normalization), and count."""

    means: np.ndarray   # (c, d)
    covs: np.ndarray    # (c, d, d)
    counts: np.ndarray  # (c,)

    @property
    def c(self) -> int:
        return self.means.shape[0]


def class_moments(ds: Dataset) -> ClassMoments:
    """Empirical mean and biased covariance per pseudolabel class."""
    x = ds.embeddings
    labels = ds.pseudolabels
    means = np.zeros((ds.c, ds.d))
    covs = np.zeros((ds.c, ds.d, ds.d))
    counts = np.zeros(ds.c, dtype=np.int64)
    for y in range(ds.c):
        rows = x[labels == y]
        if rows.shape[0] == 0:
            raise EmptyClassError(f"pseudolabel class {y} has no samples")
        counts[y] = rows.shape[0]
        means[y] = rows.mean(axis=0)
        centered = rows - means[y]
        covs[y] = centered.T @ centered / rows.shape[0]
    return ClassMoments(means=means, covs=covs, counts=counts)


@dataclass(frozen=True)
class KernelConfig:
    h_x: float
    h_y: float
    delta: float = DEFAULT_DELTA
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if self.h_x <= 0 or self.h_y <= 0:
            raise ParameterError("bandwidths must be positive")
        if self.delta <= 0:
            raise ParameterError("delta must be positive")
        if self.jitter < 0:
            raise ParameterError("jitter must be non-negative")


@dataclass(frozen=True)
class GramMatrix:
    k: np.ndarray
    config: KernelConfig

    @property
    def n(self) -> int:
        return self.k.shape[0]


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq_norms = np.einsum("ij,ij->i", x, x)
    sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (x @ x.T)
    np.maximum(sq, 0.0, out=sq)
    return (sq + sq.T) / 2.0


def _class_pair_sq_dists(moments: ClassMoments) -> np.ndarray:
    """(c, c) matrix of squared mean distance plus squared Frobenius cov distance."""
    c = moments.c
    out = np.zeros((c, c))
    for a in range(c):
        for b in range(a + 1, c):
            dm = moments.means[a] - moments.means[b]
            dc = moments.covs[a] - moments.covs[b]
            out[a, b] = out[b, a] = dm @ dm + (dc * dc).sum()
    return out


def gram_matrix(ds: Dataset, moments: ClassMoments, cfg: KernelConfig) -> GramMatrix:
    """n x n product kernel; symmetric, unit diagonal, entries in (0, 1]."""
    x = ds.embeddings
    if not np.isfinite(x).all():
        raise DataError("embeddings contain non-finite values")
    labels = ds.pseudolabels
    kx = np.exp(-_pairwise_sq_dists(x) / (2.0 * cfg.h_x ** 2))
    class_k = np.exp(-_class_pair_sq_dists(moments) / (2.0 * cfg.h_y ** 2))
    k = kx * class_k[labels[:, None], labels[None, :]]
    np.fill_diagonal(k, 1.0)
    return GramMatrix(k=k, config=cfg)


def feature_kernel_matrix(ds: Dataset, h_x: float) -> np.ndarray:
    """Gaussian kernel on embeddings only, used as the diversity similarity."""
    if h_x <= 0:
        raise ParameterError("h_x must be positive")
    x = ds.embeddings
    if not np.isfinite(x).all():
        raise DataError("embeddings contain non-finite values")
    k = np.exp(-_pairwise_sq_dists(x) / (2.0 * h_x ** 2))
    np.fill_diagonal(k, 1.0)
    return k


def bandwidths_from_dispersion(
    d_x: float, d_y: float, n: int, delta: float
) -> tuple[float, float]:
    """Split the log budget ln((n-1)/delta^2) equally between the two kernels.

    A vanished dispersion means that kernel factor is constant 1, so its
    bandwidth is pinned to 1 and the full budget goes to the other factor.
    """
    if n < 2:
        raise InsufficientDataError("bandwidth selection needs n >= 2")
    if not 0 < delta < np.sqrt(n - 1):
        raise ParameterError(
            f"delta must satisfy 0 < delta < sqrt(n-1) = {np.sqrt(n - 1):.6g}"
        )
    budget = np.log((n - 1) / delta ** 2)
    if d_x <= 0 and d_y <= 0:
        return 1.0, 1.0
    if d_y <= 0:
        return float(np.sqrt(d_x / budget)), 1.0
    if d_x <= 0:
        return 1.0, float(np.sqrt(d_y / budget))
    return float(np.sqrt(2.0 * d_x / budget)), float(np.sqrt(2.0 * d_y / budget))


def select_bandwidths(
    ds: Dataset, moments: ClassMoments, delta: float = DEFAULT_DELTA
) -> tuple[float, float, float, float]:
    """Return (h_x, h_y, d_x, d_y) with d_* the mean pairwise squared distances."""
    n = ds.n
    if n < 2:
        raise InsufficientDataError("bandwidth selection needs n >= 2")
    sq = _pairwise_sq_dists(ds.embeddings)
    d_x = float(sq.sum() / (n * (n - 1)))
    class_sq = _class_pair_sq_dists(moments)
    counts = moments.counts.astype(np.float64)
    # diagonal class pairs contribute 0, so the full bilinear sum covers i != j
    d_y = float(counts @ class_sq @ counts / (n * (n - 1)))
    h_x, h_y = bandwidths_from_dispersion(d_x, d_y, n, delta)
    return h_x, h_y, d_x, d_y
