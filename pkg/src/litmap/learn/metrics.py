"""Splitting, minority up-sampling, evaluation metrics, cross-validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from ..util import derive_seed
from .boosting import GbmModel, Hyperparams, predict, train

_Z95 = float(ndtri(0.975))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_indices(y: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive train/test row indices, sorted ascending.

    Stratified mode draws round(fraction * n_c) training rows per class,
    which keeps class proportions within one sample per class.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(derive_seed(spec.seed, "split"))
    train_parts = []
    test_parts = []
    if spec.stratified:
        for c in np.unique(y):
            idx = np.flatnonzero(y == c)
            if len(idx) < 2:
                raise ValueError(f"class {c!r} has fewer than 2 members; cannot stratify")
            perm = rng.permutation(idx)
            n_train = int(round(spec.train_fraction * len(idx)))
            n_train = min(max(n_train, 1), len(idx) - 1)
            train_parts.append(perm[:n_train])
            test_parts.append(perm[n_train:])
    else:
        perm = rng.permutation(len(y))
        n_train = int(round(spec.train_fraction * len(y)))
        n_train = min(max(n_train, 1), len(y) - 1)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def upsample_minority(
    x: np.ndarray, y: np.ndarray, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Resample the minority class with replacement up to majority size.

    Original rows (both classes) are kept untouched and in order; sampled
    minority copies are appended.  Balanced input is returned unchanged.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise ValueError("up-sampling requires exactly two classes")
    if counts[0] == counts[1]:
        return x, y
    minority = classes[np.argmin(counts)]
    minority_idx = np.flatnonzero(y == minority)
    n_extra = int(counts.max() - counts.min())
    rng = np.random.default_rng(derive_seed(seed, "upsample"))
    extra = minority_idx[rng.integers(0, len(minority_idx), size=n_extra)]
    x_new = np.concatenate([x, x[extra]], axis=0)
    y_new = np.concatenate([y, y[extra]])
    return x_new, y_new


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("empty sample")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    accuracy_ci_low: float
    accuracy_ci_high: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    precision: Optional[float]
    prevalence: float
    lift: Optional[float]
    threshold: float
    train_accuracy: Optional[float] = None
    train_test_gap: Optional[float] = None

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "n": self.n,
            "accuracy": self.accuracy,
            "accuracy_ci95": [self.accuracy_ci_low, self.accuracy_ci_high],
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "precision": self.precision,
            "prevalence": self.prevalence,
            "lift": self.lift,
            "threshold": self.threshold,
            "train_accuracy": self.train_accuracy,
            "train_test_gap": self.train_test_gap,
        }


def evaluate_probabilities(
    probs: np.ndarray,
    y: np.ndarray,
    threshold: float = 0.5,
    train_accuracy: Optional[float] = None,
) -> EvalReport:
    """Confusion-matrix metrics at a threshold; positive class is y == 1.

    lift = precision / prevalence: how much better the positive calls are
    than a random scorer at the same base rate.
    """
    y = np.asarray(y).astype(bool)
    if len(y) == 0:
        raise ValueError("empty evaluation set")
    pred = np.asarray(probs) >= threshold
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    tn = int((~pred & ~y).sum())
    fn = int((~pred & y).sum())
    n = len(y)
    accuracy = (tp + tn) / n
    ci_low, ci_high = wilson_interval(tp + tn, n)
    sensitivity = tp / (tp + fn) if tp + fn else None
    specificity = tn / (tn + fp) if tn + fp else None
    precision = tp / (tp + fp) if tp + fp else None
    prevalence = (tp + fn) / n
    lift = precision / prevalence if precision is not None and prevalence > 0 else None
    gap = None
    if train_accuracy is not None:
        gap = abs(train_accuracy - accuracy)
    return EvalReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=accuracy,
        accuracy_ci_low=ci_low,
        accuracy_ci_high=ci_high,
        sensitivity=sensitivity,
        specificity=specificity,
        precision=precision,
        prevalence=prevalence,
        lift=lift,
        threshold=threshold,
        train_accuracy=train_accuracy,
        train_test_gap=gap,
    )


def evaluate(
    model: GbmModel,
    x: np.ndarray,
    y: np.ndarray,
    threshold: float = 0.5,
    train_accuracy: Optional[float] = None,
) -> EvalReport:
    return evaluate_probabilities(predict(model, x), y, threshold, train_accuracy)


def accuracy_at(model: GbmModel, x: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    pred = predict(model, x) >= threshold
    return float((pred == np.asarray(y).astype(bool)).mean())


@dataclass
class CvResult:
    reports: list[EvalReport]
    mean_accuracy: float
    std_accuracy: float
    fold_indices: list[np.ndarray] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.reports],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
        }


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Disjoint, exhaustive, stratified folds with totals balanced to +-1.

    Per-class remainders are assigned to the currently least-loaded folds
    (largest class first), so e.g. 1000 rows split 10 ways always gives
    folds of exactly 100.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(derive_seed(seed, "cv-folds"))
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < k:
        raise ValueError("k exceeds the minority class count")
    sizes = np.zeros((len(classes), k), dtype=int)
    totals = np.zeros(k, dtype=int)
    for ci in np.argsort(-counts):
        base, rem = divmod(int(counts[ci]), k)
        sizes[ci, :] = base
        order = np.lexsort((np.arange(k), totals))
        sizes[ci, order[:rem]] += 1
        totals += sizes[ci]
    folds: list[list[int]] = [[] for _ in range(k)]
    for ci, c in enumerate(classes):
        perm = rng.permutation(np.flatnonzero(y == c))
        pos = 0
        for f in range(k):
            folds[f].extend(perm[pos: pos + sizes[ci, f]])
            pos += sizes[ci, f]
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def cross_validate(
    x: np.ndarray,
    y: np.ndarray,
    kinds: Optional[Sequence[str]] = None,
    k: int = 10,
    hp: Optional[Hyperparams] = None,
    seed: int = 0,
    threshold: float = 0.5,
) -> CvResult:
    """Stratified k-fold CV; minority up-sampling happens inside each
    training fold only, never in the validation fold."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hp = hp or Hyperparams()
    folds = stratified_folds(y, k, seed)
    all_rows = np.arange(len(y))
    reports = []
    for i, fold in enumerate(folds):
        train_rows = np.setdiff1d(all_rows, fold, assume_unique=True)
        fold_seed = derive_seed(seed, f"cv-fold-{i}")
        xb, yb = upsample_minority(x[train_rows], y[train_rows], fold_seed)
        model = train(xb, yb, kinds=kinds, hp=hp, seed=fold_seed)
        train_acc = accuracy_at(model, x[train_rows], y[train_rows], threshold)
        reports.append(
            evaluate(model, x[fold], y[fold], threshold, train_accuracy=train_acc)
        )
    accs = np.array([r.accuracy for r in reports])
    return CvResult(
        reports=reports,
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),
        fold_indices=folds,
    )
