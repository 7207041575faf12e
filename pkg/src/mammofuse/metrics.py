"""Classification metrics: ROC, AUC, thresholded scores, seed aggregation.

ROC curves sweep thresholds over the unique scores in descending order,
collapsing tied scores into a single point; AUC is the trapezoidal area,
which equals the pairwise Mann-Whitney statistic with ties counted 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Common grid for averaging ROC curves across seeds (vertical averaging).
FPR_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True, eq=False)
class ScoredSet:
    """Scores (higher = more positive) with their binary ground-truth labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = np.asarray(self.labels).ravel().astype(np.int64)
        if scores.shape != labels.shape:
            raise ValueError("scores and labels must have equal length")
        if scores.size == 0:
            raise ValueError("ScoredSet must be non-empty")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)


def roc_curve(s: ScoredSet) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) polyline from (0, 0) to (1, 1), tied scores collapsed."""
    n_pos = int(s.labels.sum())
    n_neg = s.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires at least one positive and one negative label")
    order = np.argsort(-s.scores, kind="stable")
    sorted_scores = s.scores[order]
    sorted_labels = s.labels[order]
    # Last index of each tie group = one ROC point per distinct threshold.
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    group_ends = np.concatenate([distinct, [sorted_scores.size - 1]])
    tps = np.cumsum(sorted_labels)[group_ends]
    fps = group_ends + 1 - tps
    fpr = np.concatenate([[0.0], fps / n_neg])
    tpr = np.concatenate([[0.0], tps / n_pos])
    return fpr, tpr


def auc(roc: tuple[np.ndarray, np.ndarray]) -> float:
    """Trapezoidal area under an ROC polyline."""
    fpr, tpr = roc
    return float(np.trapezoid(tpr, fpr))


def confusion_at(s: ScoredSet, thr: float = 0.5) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) when predicting positive iff score >= thr."""
    pred = s.scores >= thr
    pos = s.labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    return tp, fp, tn, fn


def prf_acc(tp: int, fp: int, tn: int, fn: int) -> tuple[float, float, float, float]:
    """(precision, recall, f1, accuracy); any 0/0 case is defined as 0."""
    if min(tp, fp, tn, fn) < 0:
        raise ValueError("confusion counts must be nonnegative")
    total = tp + fp + tn + fn
    if total == 0:
        raise ValueError("confusion counts must not all be zero")
    prc = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * prc * rec / (prc + rec) if prc + rec > 0 else 0.0
    acc = (tp + tn) / total
    return prc, rec, f1, acc


def best_f1_threshold(s: ScoredSet) -> float:
    """Threshold among the observed scores that maximizes F1 (ties: lowest)."""
    best_thr = 0.5
    best_f1 = -1.0
    for thr in np.unique(s.scores):
        tp, fp, tn, fn = confusion_at(s, float(thr))
        f1 = prf_acc(tp, fp, tn, fn)[2]
        if f1 > best_f1:
            best_f1 = f1
            best_thr = float(thr)
    return best_thr


@dataclass(frozen=True, eq=False)
class RunMetrics:
    """Scalar metrics plus the ROC polyline for one seed of one setup."""

    auc: float
    f1: float
    prc: float
    rec: float
    acc: float
    roc: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        fpr, tpr = self.roc
        fpr = np.asarray(fpr, dtype=np.float64)
        tpr = np.asarray(tpr, dtype=np.float64)
        if fpr.shape != tpr.shape or fpr.ndim != 1 or fpr.size < 2:
            raise ValueError("roc must be two equal-length 1-D arrays")
        if fpr[0] != 0.0 or tpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise ValueError("roc must start at (0, 0) and end at (1, 1)")
        if np.any(np.diff(fpr) < 0.0) or np.any(np.diff(tpr) < 0.0):
            raise ValueError("roc coordinates must be nondecreasing")
        object.__setattr__(self, "roc", (fpr, tpr))

    def as_row(self) -> dict[str, float]:
        return {"auc": self.auc, "f1": self.f1, "prc": self.prc, "rec": self.rec, "acc": self.acc}


METRIC_NAMES = ("auc", "f1", "prc", "rec", "acc")


def evaluate_scores(s: ScoredSet, threshold: float = 0.5) -> RunMetrics:
    """All metrics of one scored run at the given operating threshold."""
    roc = roc_curve(s)
    tp, fp, tn, fn = confusion_at(s, threshold)
    prc, rec, f1, acc = prf_acc(tp, fp, tn, fn)
    return RunMetrics(auc=auc(roc), f1=f1, prc=prc, rec=rec, acc=acc, roc=roc)


def _tpr_on_grid(roc: tuple[np.ndarray, np.ndarray], grid: np.ndarray) -> np.ndarray:
    # Vertical segments (repeated fpr) evaluate to their upper endpoint.
    fpr, tpr = roc
    uniq, idx = np.unique(fpr, return_index=True)
    upper = np.maximum.reduceat(tpr, idx)
    return np.interp(grid, uniq, upper)


@dataclass(frozen=True, eq=False)
class AggregateMetrics:
    """Mean and sample std per metric plus a vertically averaged ROC band."""

    n_runs: int
    mean: dict[str, float]
    std: dict[str, float]
    fpr_grid: np.ndarray = field(repr=False)
    tpr_mean: np.ndarray = field(repr=False)
    tpr_std: np.ndarray = field(repr=False)

    @property
    def band_lo(self) -> np.ndarray:
        return np.clip(self.tpr_mean - self.tpr_std, 0.0, 1.0)

    @property
    def band_hi(self) -> np.ndarray:
        return np.clip(self.tpr_mean + self.tpr_std, 0.0, 1.0)


def aggregate(runs: list[RunMetrics], grid: np.ndarray = FPR_GRID) -> AggregateMetrics:
    """Aggregate per-seed runs: metric mean/std and a +-1 std ROC band."""
    if not runs:
        raise ValueError("aggregate requires at least one run")
    rows = {name: np.array([getattr(r, name) for r in runs]) for name in METRIC_NAMES}
    mean = {name: float(vals.mean()) for name, vals in rows.items()}
    std = {
        name: float(vals.std(ddof=1)) if len(runs) > 1 else 0.0 for name, vals in rows.items()
    }
    tprs = np.stack([_tpr_on_grid(r.roc, grid) for r in runs])
    tpr_mean = tprs.mean(axis=0)
    tpr_std = tprs.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros_like(tpr_mean)
    return AggregateMetrics(
        n_runs=len(runs),
        mean=mean,
        std=std,
        fpr_grid=grid.copy(),
        tpr_mean=tpr_mean,
        tpr_std=tpr_std,
    )
