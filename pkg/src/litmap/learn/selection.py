"""Feature importance: split-gain ranking and GCV backward elimination."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .binning import BinnedDataset
from .boosting import GbmModel, Hyperparams, _train_binned
from .metrics import upsample_minority


class GcvError(Exception):
    """GCV undefined: effective complexity reached the sample size."""


def split_gain_importance(model: GbmModel) -> list[tuple[int, float]]:
    """Total split gain accumulated per feature, normalized to max 100.

    Returns (feature_index, score) sorted by score descending, ties broken
    by catalog index; a model with no splits scores everything 0.
    """
    totals = np.zeros(model.n_features)
    for tree in model.trees:
        internal = tree.feature >= 0
        np.add.at(totals, tree.feature[internal], tree.gain[internal])
    top = totals.max()
    if top > 0:
        totals = totals * (100.0 / top)
    order = sorted(range(model.n_features), key=lambda i: (-totals[i], i))
    return [(i, float(totals[i])) for i in order]


def named_importance(model: GbmModel) -> list[tuple[str, float]]:
    names = model.feature_names or [f"f{i}" for i in range(model.n_features)]
    return [(names[i], s) for i, s in split_gain_importance(model)]


def gcv_statistic(mse: float, n: int, total_leaves: int, penalty: float = 3.0) -> float:
    """MARS-style generalized cross-validation: MSE / (1 - C/N)^2 with
    effective complexity C = total leaf count * penalty."""
    c = total_leaves * penalty
    if n <= c:
        raise GcvError(
            f"GCV undefined: penalized complexity {c:.0f} >= sample size {n}; "
            "reduce the elimination tree budget or supply more rows"
        )
    return mse / (1.0 - c / n) ** 2


@dataclass
class EliminationStep:
    step: int
    feature_index: int
    feature_name: str
    gcv_before: float
    gcv_after: float
    increase: float


@dataclass
class EliminationResult:
    selected: list[int]
    selected_names: list[str]
    scores: dict[int, float]  # eliminated feature -> GCV increase at removal
    trace: list[EliminationStep]
    final_gcv: float

    def removal_order(self) -> list[int]:
        return [s.feature_index for s in self.trace]

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "selected_names": self.selected_names,
            "scores": {str(k): v for k, v in self.scores.items()},
            "final_gcv": self.final_gcv,
            "trace": [
                {
                    "step": s.step,
                    "feature_index": s.feature_index,
                    "feature_name": s.feature_name,
                    "gcv_before": s.gcv_before,
                    "gcv_after": s.gcv_after,
                    "increase": s.increase,
                }
                for s in self.trace
            ],
        }


def _fit_gcv(
    binned_full: BinnedDataset,
    y: np.ndarray,
    columns: list[int],
    hp: Hyperparams,
    seed: int,
    kinds: Sequence[str],
    penalty: float,
) -> tuple[float, set[int]]:
    """GCV of a model trained on a column subset, plus the set of columns
    (global indices) it actually split on."""
    sub = binned_full.select(columns)
    sub_kinds = [kinds[c] for c in columns]
    model, scores = _train_binned(sub, y, hp, seed, None, sub_kinds, "selection")
    p = expit(scores)
    mse = float(np.mean((y - p) ** 2))
    gcv = gcv_statistic(mse, len(y), model.total_leaves, penalty)
    used_local: set[int] = set()
    for tree in model.trees:
        used_local.update(int(f) for f in tree.feature[tree.feature >= 0])
    return gcv, {columns[i] for i in used_local}


def gcv_backward_eliminate(
    x: np.ndarray,
    y: np.ndarray,
    kinds: Optional[Sequence[str]] = None,
    hp: Optional[Hyperparams] = None,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
    n_trees: int = 50,
    penalty: float = 3.0,
    tolerance: Optional[float] = 0.0,
    max_steps: Optional[int] = None,
    min_features: int = 1,
    threads: int = 1,
) -> EliminationResult:
    """Iteratively drop the feature whose removal minimizes GCV.

    The training rows are up-sampled once so candidate fits differ only in
    the dropped column.  Candidate fits use a reduced budget of `n_trees`
    per retrain; a candidate the current model never split on is skipped
    (dropping it provably reproduces the same model, hence the same GCV).
    Stops when the best removal would raise GCV by more than `tolerance`;
    tolerance=None never stops, producing a full feature ranking.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] < 2:
        raise ValueError("elimination requires at least two features")
    hp = hp or Hyperparams()
    hp_elim = replace(hp, n_trees=n_trees)
    if kinds is None:
        kinds = ["NUMERIC"] * x.shape[1]
    names = list(feature_names) if feature_names is not None else [
        f"f{i}" for i in range(x.shape[1])
    ]

    xb, yb = upsample_minority(x, y, seed)
    binned = BinnedDataset.from_matrix(xb, kinds, hp.max_bins)

    active = list(range(x.shape[1]))
    gcv_current, used = _fit_gcv(binned, yb, active, hp_elim, seed, kinds, penalty)

    # Candidate results stay valid across steps as long as the feature just
    # removed was unused by the candidate's model: the deterministic trainer
    # never saw it, so retraining would reproduce the identical model.  The
    # cache therefore only invalidates entries whose used-set contains the
    # removed feature; unused candidates evaluate to the current state for
    # free by the same argument.
    cache: dict[int, tuple[float, set[int]]] = {}
    trace: list[EliminationStep] = []
    scores: dict[int, float] = {}
    step = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while len(active) > min_features and (max_steps is None or step < max_steps):
            jobs = {}
            for pos, f in enumerate(active):
                if f in cache:
                    continue
                if f not in used:
                    cache[f] = (gcv_current, set(used))
                else:
                    jobs[f] = active[:pos] + active[pos + 1:]
            if pool is not None and jobs:
                futures = {
                    f: pool.submit(_fit_gcv, binned, yb, cols, hp_elim, seed, kinds, penalty)
                    for f, cols in jobs.items()
                }
                for f in jobs:
                    cache[f] = futures[f].result()
            else:
                for f, cols in jobs.items():
                    cache[f] = _fit_gcv(binned, yb, cols, hp_elim, seed, kinds, penalty)

            best_f = None
            best_gcv = None
            for f in active:  # ascending index; strict < keeps the first best
                gcv_f = cache[f][0]
                if best_gcv is None or gcv_f < best_gcv:
                    best_f, best_gcv = f, gcv_f
            assert best_f is not None and best_gcv is not None
            increase = best_gcv - gcv_current
            if tolerance is not None and increase > tolerance:
                break
            gcv_current, used = cache.pop(best_f)
            active.remove(best_f)
            scores[best_f] = increase
            trace.append(EliminationStep(
                step=step,
                feature_index=best_f,
                feature_name=names[best_f],
                gcv_before=best_gcv - increase,
                gcv_after=best_gcv,
                increase=increase,
            ))
            for f in list(cache):
                if best_f in cache[f][1]:
                    del cache[f]
            step += 1
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    return EliminationResult(
        selected=active,
        selected_names=[names[f] for f in active],
        scores=scores,
        trace=trace,
        final_gcv=gcv_current,
    )
