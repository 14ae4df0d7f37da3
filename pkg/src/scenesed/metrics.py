"""Segment-based scoring and embedding-space analysis.

Segments are single frames. Counts pool over clips; micro-F pools counts
over classes, macro-F averages per-class F with F defined as 0 for a class
that is never active and never predicted (the degenerate-denominator
rule).
"""

from dataclasses import dataclass

import numpy as np

from .errors import SceneSedError


class MetricError(SceneSedError):
    pass


@dataclass
class SegmentCounts:
    tp: np.ndarray  # (N,) int64
    fp: np.ndarray
    fn: np.ndarray

    @property
    def n_classes(self):
        return len(self.tp)

    def __add__(self, other):
        if other.n_classes != self.n_classes:
            raise MetricError("cannot add counts over different class sets")
        return SegmentCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @staticmethod
    def zeros(n_classes):
        z = np.zeros(n_classes, dtype=np.int64)
        return SegmentCounts(z.copy(), z.copy(), z.copy())


def segment_counts(ref, pred):
    """Per-class TP/FP/FN over all 1-frame segments of one clip."""
    ref = np.asarray(ref).astype(bool)
    pred = np.asarray(pred).astype(bool)
    if ref.shape != pred.shape:
        raise MetricError(f"shape mismatch: ref {ref.shape}, pred {pred.shape}")
    return SegmentCounts(
        tp=(ref & pred).sum(axis=1).astype(np.int64),
        fp=(~ref & pred).sum(axis=1).astype(np.int64),
        fn=(ref & ~pred).sum(axis=1).astype(np.int64),
    )


def _f_score(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def micro_f(counts):
    return _f_score(int(counts.tp.sum()), int(counts.fp.sum()), int(counts.fn.sum()))


def macro_f(counts):
    if counts.n_classes == 0:
        return 0.0
    per_class = [_f_score(int(tp), int(fp), int(fn))
                 for tp, fp, fn in zip(counts.tp, counts.fp, counts.fn)]
    return float(np.mean(per_class))


@dataclass
class ClassScore:
    label: str
    precision: float
    recall: float
    f_score: float
    tp: int
    fp: int
    fn: int


@dataclass
class ScoreReport:
    micro_f: float
    macro_f: float
    classes: list

    def to_dict(self):
        return {
            "micro_f": self.micro_f,
            "macro_f": self.macro_f,
            "classes": [vars(c) for c in self.classes],
        }


def score_report(counts, labels):
    if len(labels) != counts.n_classes:
        raise MetricError(f"{len(labels)} labels for {counts.n_classes} classes")
    classes = []
    for label, tp, fp, fn in zip(labels, counts.tp, counts.fp, counts.fn):
        tp, fp, fn = int(tp), int(fp), int(fn)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        classes.append(ClassScore(label, precision, recall, _f_score(tp, fp, fn), tp, fp, fn))
    return ScoreReport(micro_f=micro_f(counts), macro_f=macro_f(counts), classes=classes)


def pca_2d(vectors):
    """Project onto the top-2 principal directions of the covariance.

    Sign convention: the first nonzero coordinate of each direction is
    positive, which makes the projection deterministic. Returns
    (projections (M, 2), explained-variance fractions (2,)).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise MetricError("pca_2d needs at least 3 vectors")
    if x.shape[1] < 2:
        raise MetricError("pca_2d needs dimension >= 2")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    dirs = eigvecs[:, order].T.copy()
    for d in dirs:
        nz = np.nonzero(d)[0]
        if nz.size and d[nz[0]] < 0:
            d *= -1.0
    total = eigvals.sum()
    fractions = (np.maximum(eigvals[order], 0.0) / total) if total > 0 else np.zeros(2)
    return centered @ dirs.T, fractions


def pairwise_distances(points):
    """Symmetric Euclidean distance matrix with a zero diagonal."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise MetricError("pairwise_distances expects a 2-d array of points")
    diff = x[:, None, :] - x[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(d, 0.0)
    return d
