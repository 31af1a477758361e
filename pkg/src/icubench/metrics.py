"""Evaluation metrics, bootstrap intervals, calibration and label correlations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import LOS_BUCKET_BOUNDARIES_DAYS, N_LOS_BUCKETS


class UndefinedMetricError(ValueError):
    """Metric has no value on this input (e.g. a single class present)."""


def _binary_inputs(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binary labels must be 0 or 1")
    return s, y.astype(int)


def auc_roc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties counting 1/2.

    Computed from average ranks (Mann-Whitney U).
    """
    s, y = _binary_inputs(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC-ROC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    """Average precision: sum over descending thresholds of (R_k - R_{k-1}) * P_k.

    Tied scores form one threshold.
    """
    s, y = _binary_inputs(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUC-PR needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    delta = np.diff(np.r_[0.0, recall])
    return float(np.sum(delta * precision))


def mad(predictions, targets) -> float:
    """Mean absolute difference."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError("predictions and targets differ in length")
    if p.size == 0:
        raise UndefinedMetricError("MAD of an empty set")
    return float(np.mean(np.abs(p - t)))


def confusion_matrix(pred, true, n_classes: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=int).ravel()
    true = np.asarray(true, dtype=int).ravel()
    if pred.shape != true.shape:
        raise ValueError("prediction and truth differ in length")
    if pred.size and (pred.min() < 0 or true.min() < 0 or pred.max() >= n_classes or true.max() >= n_classes):
        raise ValueError(f"class indices must lie in 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes))
    np.add.at(cm, (true, pred), 1.0)
    return cm


def linear_kappa(pred, true, n_classes: int = N_LOS_BUCKETS) -> float:
    """Cohen's kappa with linear weights |i - j| / (C - 1).

    If the expected weighted disagreement is zero (both raters use one and
    the same class) the result is defined as 1.0.
    """
    cm = confusion_matrix(pred, true, n_classes)
    n = cm.sum()
    if n == 0:
        raise UndefinedMetricError("kappa of an empty set")
    idx = np.arange(n_classes)
    w = np.abs(idx[:, None] - idx[None, :]) / (n_classes - 1)
    expected = np.outer(cm.sum(axis=1), cm.sum(axis=0)) / n
    denom = float(np.sum(w * expected))
    if denom == 0.0:
        return 1.0
    return float(1.0 - np.sum(w * cm) / denom)


@dataclass
class MultilabelAUC:
    macro: float
    micro: float
    per_label: list[float | None]
    excluded: list[int] = field(default_factory=list)


def multilabel_auc(scores, labels) -> MultilabelAUC:
    """Macro (mean of per-label AUCs) and micro (pooled pairs) AUC-ROC.

    Labels with a single class are left out of the macro average and listed
    in ``excluded``.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 2:
        raise ValueError("scores and labels must be n x K arrays of equal shape")
    per: list[float | None] = []
    excluded = []
    for k in range(s.shape[1]):
        try:
            per.append(auc_roc(s[:, k], y[:, k]))
        except UndefinedMetricError:
            per.append(None)
            excluded.append(k)
    defined = [a for a in per if a is not None]
    if not defined:
        raise UndefinedMetricError("no label has both classes")
    return MultilabelAUC(
        macro=float(np.mean(defined)),
        micro=auc_roc(s.ravel(), y.ravel()),
        per_label=per,
        excluded=excluded,
    )


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray
    kind: str = "binary"
    groups: np.ndarray | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores)
        self.labels = np.asarray(self.labels)
        if len(self.scores) != len(self.labels):
            raise ValueError("scores and labels differ in length")
        if self.groups is not None:
            self.groups = np.asarray(self.groups)
            if len(self.groups) != len(self.scores):
                raise ValueError("groups differ in length")
        if self.kind == "binary" and not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("binary labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.scores)

    def take(self, idx: np.ndarray) -> "ScoredSet":
        g = None if self.groups is None else self.groups[idx]
        return ScoredSet(self.scores[idx], self.labels[idx], self.kind, g)


def micro_pool(per_stay: dict | Sequence[tuple]) -> ScoredSet:
    """Pool per-stay (scores, labels) into one set regardless of stay.

    Accepts ``{stay: (scores, labels)}`` or a sequence of ``(stay, scores, labels)``.
    Stays are concatenated in sorted stay order.
    """
    items = per_stay.items() if isinstance(per_stay, dict) else [(s, (a, b)) for s, a, b in per_stay]
    scores, labels, groups = [], [], []
    for stay, (sc, lb) in sorted(items, key=lambda kv: kv[0]):
        sc = np.asarray(sc, dtype=float).ravel()
        lb = np.asarray(lb).ravel()
        if sc.shape != lb.shape:
            raise ValueError(f"stay {stay}: scores and labels differ in length")
        scores.append(sc)
        labels.append(lb)
        groups.append(np.full(sc.size, stay))
    if not scores:
        return ScoredSet(np.zeros(0), np.zeros(0, dtype=int))
    return ScoredSet(np.concatenate(scores), np.concatenate(labels).astype(int), "binary", np.concatenate(groups))


@dataclass
class CIResult:
    point: float
    lower: float
    upper: float
    resamples: int
    seed: int
    redrawn: int = 0


def bootstrap_ci(metric: Callable[[np.ndarray, np.ndarray], float], data: ScoredSet, k: int = 1000,
                 seed: int = 0, by_group: bool = False, max_redraws: int | None = None) -> CIResult:
    """Percentile 95% interval from ``k`` resamples with replacement.

    Resamples instances, or whole groups (stays) when ``by_group``.  A
    resample on which the metric is undefined is redrawn and counted.
    The interval is widened to contain the point estimate if needed.
    """
    if len(data) == 0:
        raise UndefinedMetricError("bootstrap of an empty set")
    point = metric(data.scores, data.labels)
    rng = np.random.default_rng(seed)
    if by_group:
        if data.groups is None:
            raise ValueError("by_group needs group ids")
        uniq, inverse = np.unique(data.groups, return_inverse=True)
        members = [np.flatnonzero(inverse == g) for g in range(len(uniq))]
    max_redraws = max_redraws if max_redraws is not None else 10 * k
    values = []
    redrawn = 0
    while len(values) < k:
        if by_group:
            pick = rng.integers(0, len(members), size=len(members))
            idx = np.concatenate([members[g] for g in pick])
        else:
            idx = rng.integers(0, len(data), size=len(data))
        try:
            values.append(metric(data.scores[idx], data.labels[idx]))
        except UndefinedMetricError:
            redrawn += 1
            if redrawn > max_redraws:
                raise UndefinedMetricError("metric undefined on too many resamples") from None
    lo, hi = np.percentile(values, [2.5, 97.5])
    return CIResult(float(point), float(min(lo, point)), float(max(hi, point)), k, seed, redrawn)


@dataclass
class CalibrationBin:
    mean_predicted: float
    observed_rate: float
    count: int


@dataclass
class CalibrationCurve:
    bins: list[CalibrationBin]
    merged: int = 0

    def max_gap(self) -> float:
        return max(abs(b.mean_predicted - b.observed_rate) for b in self.bins)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "mean_predicted", "observed_rate", "count"])
        for i, b in enumerate(self.bins):
            w.writerow([i, repr(b.mean_predicted), repr(b.observed_rate), b.count])
        return buf.getvalue()


def calibration_curve(scores, labels, bins: int = 10) -> CalibrationCurve:
    """Quantile bins of predicted probability with per-bin mean prediction and event rate.

    Equal scores never straddle a bin edge; when there are fewer distinct
    quantile edges than requested, bins are merged and ``merged`` counts them.
    """
    s, y = _binary_inputs(scores, labels)
    if s.size == 0:
        raise UndefinedMetricError("calibration of an empty set")
    edges = np.unique(np.quantile(s, np.linspace(0.0, 1.0, bins + 1)))
    inner = edges[1:-1]
    which = np.searchsorted(inner, s, side="right")
    out = []
    for b in range(len(inner) + 1):
        sel = which == b
        if not sel.any():
            continue
        out.append(CalibrationBin(float(s[sel].mean()), float(y[sel].mean()), int(sel.sum())))
    return CalibrationCurve(out, merged=bins - len(out))


def extended_los_labels(los_hours, days: float = 7.0) -> np.ndarray:
    return (np.asarray(los_hours, dtype=float) >= days * 24.0).astype(int)


def extended_los_buckets(days: float = 7.0) -> list[int]:
    """Bucket indices whose lower edge is at least ``days``."""
    lower = (0.0,) + LOS_BUCKET_BOUNDARIES_DAYS
    return [i for i, lo in enumerate(lower) if lo >= days]


@dataclass
class ExtendedLOS:
    auc: float
    scores: np.ndarray
    labels: np.ndarray
    skipped: int


def extended_los_score(distributions: dict, los_hours: dict, days: float = 7.0) -> ExtendedLOS:
    """AUC-ROC of summed bucket probabilities for stays lasting ``days`` or longer.

    ``distributions`` maps stay -> 10-way predicted distribution at the 24 h
    instance; ``los_hours`` maps stay -> total LOS in hours.  Stays without a
    24 h prediction are skipped and counted.
    """
    cols = extended_los_buckets(days)
    scores, labels = [], []
    skipped = 0
    for stay in sorted(los_hours):
        dist = distributions.get(stay)
        if dist is None:
            skipped += 1
            continue
        dist = np.asarray(dist, dtype=float)
        if dist.shape != (N_LOS_BUCKETS,):
            raise ValueError(f"stay {stay}: expected a {N_LOS_BUCKETS}-way distribution")
        scores.append(float(dist[cols].sum()))
        labels.append(int(los_hours[stay] >= days * 24.0))
    s, y = np.asarray(scores), np.asarray(labels, dtype=int)
    return ExtendedLOS(auc_roc(s, y), s, y, skipped)


@dataclass
class CorrelationMatrix:
    names: list[str]
    values: np.ndarray
    undefined: list[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + self.names)
        for name, row in zip(self.names, self.values):
            w.writerow([name] + ["" if np.isnan(v) else repr(float(v)) for v in row])
        return buf.getvalue()


def task_label_correlations(columns: dict[str, Sequence[float]]) -> CorrelationMatrix:
    """Pairwise Pearson correlation of per-stay target columns.

    Columns with zero variance get NaN rows/columns and are listed in
    ``undefined``.  The diagonal of a defined column is exactly 1.
    """
    names = list(columns)
    X = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names else np.zeros((0, 0))
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    undefined = [n for n, v in zip(names, norms) if v == 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (centered.T @ centered) / np.outer(norms, norms)
    bad = norms == 0
    corr[bad, :] = np.nan
    corr[:, bad] = np.nan
    for i in np.flatnonzero(~bad):
        corr[i, i] = 1.0
    return CorrelationMatrix(names, np.clip(corr, -1.0, 1.0), undefined)
