"""Dataset containers, JSONL ingestion, standardization, synthetic generation.

A dataset is a list of samples, each carrying an embedding vector, the
classifier's pseudolabel, an optional hidden true label, and an optional
display payload for the annotation UI.  The synthetic generator plants
tight misclassified clusters plus isolated misclassified noise at a
controlled signal-to-noise ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    InsufficientDataError,
    MissingLabelError,
    SpecError,
)


@dataclass(frozen=True)
class Sample:
    id: int
    embedding: np.ndarray
    pseudolabel: int
    true_label: int | None = None
    display: dict | None = None


@dataclass
class Dataset:
    """Immutable collection of samples with consistent dimensions."""

    samples: list[Sample]
    c: int
    standardized: bool = False
    _embeddings: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.samples)
        if n == 0:
            raise DataFormatError("dataset has no samples")
        d = self.samples[0].embedding.shape[0]
        for s in self.samples:
            if s.embedding.shape != (d,):
                raise DataFormatError(
                    f"sample {s.id}: embedding dimension {s.embedding.shape[0]} != {d}"
                )
            if not (0 <= s.pseudolabel < self.c):
                raise DataFormatError(
                    f"sample {s.id}: pseudolabel {s.pseudolabel} outside 0..{self.c - 1}"
                )
            if s.true_label is not None and not (0 <= s.true_label < self.c):
                raise DataFormatError(
                    f"sample {s.id}: true_label {s.true_label} outside 0..{self.c - 1}"
                )
        if [s.id for s in self.samples] != list(range(n)):
            raise DataFormatError("sample ids must be exactly 0..n-1 in order")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def d(self) -> int:
        return self.samples[0].embedding.shape[0]

    @property
    def embeddings(self) -> np.ndarray:
        """(n, d) float64 matrix; cached after first access."""
        if self._embeddings is None:
            x = np.stack([s.embedding for s in self.samples]).astype(np.float64)
            object.__setattr__(self, "_embeddings", x)
        return self._embeddings

    @property
    def pseudolabels(self) -> np.ndarray:
        return np.array([s.pseudolabel for s in self.samples], dtype=np.int64)

    @property
    def has_true_labels(self) -> bool:
        return all(s.true_label is not None for s in self.samples)

    def true_labels(self) -> np.ndarray:
        if not self.has_true_labels:
            raise MissingLabelError("dataset has samples without true_label")
        return np.array([s.true_label for s in self.samples], dtype=np.int64)

    def misclassified_mask(self) -> np.ndarray:
        """Boolean mask pseudolabel != true_label; requires all true labels."""
        return self.true_labels() != self.pseudolabels


def _parse_line(line: str, lineno: int, expect_id: int) -> Sample:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    try:
        sid = int(rec["id"])
        emb = np.asarray(rec["embedding"], dtype=np.float64)
        pseudo = int(rec["pseudolabel"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"line {lineno}: missing or malformed field ({exc})") from exc
    if sid != expect_id:
        raise DataFormatError(f"line {lineno}: id {sid} out of sequence (expected {expect_id})")
    if emb.ndim != 1:
        raise DataFormatError(f"line {lineno}: embedding must be a flat list")
    true = rec.get("true_label")
    if true is not None:
        true = int(true)
    return Sample(id=sid, embedding=emb, pseudolabel=pseudo,
                  true_label=true, display=rec.get("display"))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".header.json")


def load_dataset(path: str | Path, require_true_labels: bool = False) -> Dataset:
    """Read a JSONL dataset; ids must appear in order 0..n-1.

    The sidecar header, when present, supplies the class count; otherwise
    the class count is inferred from the labels seen.
    """
    path = Path(path)
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            samples.append(_parse_line(line, lineno, expect_id=len(samples)))
    if not samples:
        raise DataFormatError(f"{path}: empty dataset file")
    d = samples[0].embedding.shape[0]
    for s in samples:
        if s.embedding.shape[0] != d:
            raise DataFormatError(
                f"line {s.id + 1}: embedding dimension {s.embedding.shape[0]} != {d}"
            )
    if require_true_labels:
        missing = [s.id for s in samples if s.true_label is None]
        if missing:
            raise MissingLabelError(
                f"{len(missing)} samples lack true_label (first: id {missing[0]})"
            )
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        header = json.loads(sidecar.read_text())
        c = int(header["c"])
        if int(header["n"]) != len(samples) or int(header["d"]) != d:
            raise DataFormatError(f"{sidecar}: header disagrees with data file")
    else:
        labels = [s.pseudolabel for s in samples]
        labels += [s.true_label for s in samples if s.true_label is not None]
        c = max(labels) + 1
    return Dataset(samples=samples, c=c)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write JSONL plus the {"n", "d", "c"} sidecar header."""
    path = Path(path)
    with open(path, "w") as fh:
        for s in ds.samples:
            rec = {
                "id": s.id,
                "embedding": [float(v) for v in s.embedding],
                "pseudolabel": s.pseudolabel,
                "true_label": s.true_label,
                "display": s.display,
            }
            fh.write(json.dumps(rec) + "\n")
    _sidecar_path(path).write_text(
        json.dumps({"n": ds.n, "d": ds.d, "c": ds.c}) + "\n"
    )


def standardize(ds: Dataset) -> Dataset:
    """Scale each coordinate to mean 0, variance 1 (biased, divide by N).

    Zero-variance coordinates map to 0 so downstream Gaussian kernels stay
    well-defined.  Idempotent on already-standardized data.
    """
    if ds.n < 2:
        raise InsufficientDataError("standardization needs at least 2 samples")
    x = ds.embeddings
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # biased: divides by N
    centered = x - mean
    scaled = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)
    samples = [
        Sample(id=s.id, embedding=scaled[i], pseudolabel=s.pseudolabel,
               true_label=s.true_label, display=s.display)
        for i, s in enumerate(ds.samples)
    ]
    return Dataset(samples=samples, c=ds.c, standardized=True)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the planted-cluster generator."""

    n: int
    d: int
    n_classes: int
    n_patterns: int
    pattern_size: int
    noise_misclassified: int
    cluster_spread: float = 1.0
    cluster_separation: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1 or self.d < 1:
            raise SpecError("n and d must be positive")
        if not (2 <= self.n_classes <= self.d):
            raise SpecError("need 2 <= n_classes <= d (class means sit on a scaled simplex)")
        if self.n_patterns < 0 or self.pattern_size < 1 or self.noise_misclassified < 0:
            raise SpecError("pattern and noise counts must be non-negative")
        if self.n_patterns * self.pattern_size + self.noise_misclassified > self.n:
            raise SpecError(
                "n_patterns * pattern_size + noise_misclassified exceeds n"
            )
        if self.cluster_spread <= 0 or self.cluster_separation <= 0:
            raise SpecError("cluster_spread and cluster_separation must be positive")

    @property
    def snr(self) -> float:
        """Planted misclassified in clusters / misclassified outside them."""
        signal = self.n_patterns * self.pattern_size
        if self.noise_misclassified == 0:
            return float("inf") if signal else 0.0
        return signal / self.noise_misclassified


@dataclass
class SyntheticInfo:
    """Construction bookkeeping: which ids were planted where."""

    pattern_members: list[set[int]]
    noise_ids: set[int]
    pattern_centers: np.ndarray
    class_means: np.ndarray


def _flip_label(rng: np.random.Generator, label: int, c: int) -> int:
    return int((label + 1 + rng.integers(c - 1)) % c)


def generate_synthetic_with_info(spec: SyntheticSpec) -> tuple[Dataset, SyntheticInfo]:
    """Build a planted dataset and the bookkeeping needed to audit it.

    Class means are a scaled simplex (orthonormal directions times the
    separation) rotated into general position.  Planted clusters are tight
    Gaussian blobs offset from their host class mean whose members all have
    flipped true labels; noise misclassifications are scattered inside the
    class blobs but rejected away from cluster centers.  Sample order is
    shuffled so ids carry no structure.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    c, d, sep, spread = spec.n_classes, spec.d, spec.cluster_separation, spec.cluster_spread

    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    class_means = sep * q[:, :c].T  # (c, d), pairwise distance sep*sqrt(2)

    centers = np.zeros((spec.n_patterns, d))
    for f in range(spec.n_patterns):
        host = f % c
        for _ in range(200):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            cand = class_means[host] + 0.5 * sep * u
            if f == 0 or np.linalg.norm(centers[:f] - cand, axis=1).min() > 0.4 * sep:
                break
        centers[f] = cand

    rows = []  # (x, pseudo, true, kind, pattern_index)
    for f in range(spec.n_patterns):
        host = f % c
        for _ in range(spec.pattern_size):
            x = centers[f] + spread * rng.standard_normal(d)
            rows.append((x, host, _flip_label(rng, host, c), "pattern", f))

    keepout = max(5.0 * spread, 0.35 * sep)
    for _ in range(spec.noise_misclassified):
        y = int(rng.integers(c))
        best, best_dist = None, -1.0
        for _ in range(200):
            x = class_means[y] + 2.0 * spread * rng.standard_normal(d)
            dist = (np.linalg.norm(centers - x, axis=1).min()
                    if spec.n_patterns else np.inf)
            if dist > keepout:
                best = x
                break
            if dist > best_dist:
                best, best_dist = x, dist
        rows.append((best, y, _flip_label(rng, y, c), "noise", -1))

    n_background = spec.n - len(rows)
    for i in range(n_background):
        y = i % c
        x = class_means[y] + spread * rng.standard_normal(d)
        rows.append((x, y, y, "background", -1))

    if len({pseudo for _, pseudo, _, _, _ in rows}) < c:
        raise SpecError("infeasible spec: some pseudolabel class ended up empty")

    perm = rng.permutation(spec.n)
    samples: list[Sample | None] = [None] * spec.n
    members: list[set[int]] = [set() for _ in range(spec.n_patterns)]
    noise_ids: set[int] = set()
    for new_id, old in enumerate(perm):
        x, pseudo, true, kind, f = rows[old]
        display = {"x2d": float(x[0]), "y2d": float(x[1]) if d > 1 else 0.0,
                   "image_url": None}
        samples[new_id] = Sample(id=new_id, embedding=np.asarray(x, dtype=np.float64),
                                 pseudolabel=pseudo, true_label=true, display=display)
        if kind == "pattern":
            members[f].add(new_id)
        elif kind == "noise":
            noise_ids.add(new_id)

    info = SyntheticInfo(pattern_members=members, noise_ids=noise_ids,
                         pattern_centers=centers, class_means=class_means)
    return Dataset(samples=samples, c=c), info


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic planted dataset for a fixed spec and seed."""
    ds, _ = generate_synthetic_with_info(spec)
    return ds
