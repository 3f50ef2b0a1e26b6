"""Rank-based feature binning shared by both tree-growing backends.

Numeric boundaries are actual training values chosen by rank, so binning is
invariant under strictly increasing transforms and split thresholds are
order statistics of the training data.  Bin ids fit uint8: at most 255 real
bins per feature plus a dedicated missing bin at index n_bins[j].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MAX_BINS = 255
BIN_STRIDE = 256  # fixed histogram stride per feature in both backends

NUMERIC = "NUMERIC"
CATEGORICAL = "CATEGORICAL"


@dataclass
class BinnedDataset:
    binned: np.ndarray  # uint8, shape (n_rows, n_features), C-contiguous
    n_bins: np.ndarray  # int32 per feature; missing bin index == n_bins[j]
    is_categorical: np.ndarray  # uint8 per feature
    numeric_boundaries: list[Optional[np.ndarray]]  # per feature, bin -> max value
    category_codes: list[Optional[np.ndarray]]  # per feature, bin -> original code

    @property
    def n_rows(self) -> int:
        return self.binned.shape[0]

    @property
    def n_features(self) -> int:
        return self.binned.shape[1]

    @classmethod
    def from_matrix(
        cls, x: np.ndarray, kinds: Sequence[str], max_bins: int = MAX_BINS
    ) -> "BinnedDataset":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not 2 <= max_bins <= MAX_BINS:
            raise ValueError(f"max_bins must lie in [2, {MAX_BINS}]")
        if len(kinds) != x.shape[1]:
            raise ValueError("kinds length must match feature count")
        if np.isinf(x).any():
            raise ValueError("non-finite feature values (use NaN for missing)")

        n, f = x.shape
        binned = np.empty((n, f), dtype=np.uint8)
        n_bins = np.zeros(f, dtype=np.int32)
        is_cat = np.zeros(f, dtype=np.uint8)
        boundaries: list[Optional[np.ndarray]] = [None] * f
        codes: list[Optional[np.ndarray]] = [None] * f

        for j in range(f):
            col = x[:, j]
            missing = np.isnan(col)
            present = col[~missing]
            if kinds[j] == CATEGORICAL:
                is_cat[j] = 1
                cat = np.unique(np.rint(present).astype(np.int64))
                if len(cat) > max_bins:
                    raise ValueError(
                        f"categorical feature {j} has {len(cat)} levels; max is {max_bins}"
                    )
                codes[j] = cat
                n_bins[j] = len(cat)
                b = np.searchsorted(cat, np.rint(col[~missing]).astype(np.int64))
            else:
                u = np.unique(present)
                if len(u) > max_bins:
                    ranks = np.ceil(np.arange(1, max_bins + 1) * len(u) / max_bins)
                    u = u[ranks.astype(np.int64) - 1]
                boundaries[j] = u
                n_bins[j] = len(u)
                b = np.searchsorted(u, col[~missing], side="left")
            binned[~missing, j] = b.astype(np.uint8)
            binned[missing, j] = np.uint8(n_bins[j])
        return cls(np.ascontiguousarray(binned), n_bins, is_cat, boundaries, codes)

    def select(self, columns: Sequence[int]) -> "BinnedDataset":
        """Column-subset copy; used by backward elimination candidate fits."""
        cols = list(columns)
        return BinnedDataset(
            binned=np.ascontiguousarray(self.binned[:, cols]),
            n_bins=self.n_bins[cols].copy(),
            is_categorical=self.is_categorical[cols].copy(),
            numeric_boundaries=[self.numeric_boundaries[c] for c in cols],
            category_codes=[self.category_codes[c] for c in cols],
        )
