"""Chi-square ranking of features against a class label."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def discretize(x, n_bins: int = 10) -> np.ndarray:
    """Integer codes for one feature; missing values form their own code.

    Features with at most `n_bins` distinct values keep their categories;
    others get quantile bins whose edges are observed values, so any
    strictly increasing transform of the feature yields the same codes.
    """
    x = np.asarray(x, dtype=float)
    nan = np.isnan(x)
    codes = np.full(x.shape, -1, dtype=np.int64)
    obs = x[~nan]
    if obs.size == 0:
        return codes
    u = np.unique(obs)
    if u.size <= n_bins:
        codes[~nan] = np.searchsorted(u, obs)
    else:
        qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
        edges = np.unique(np.quantile(obs, qs, method="inverted_cdf"))
        codes[~nan] = np.searchsorted(edges, obs, side="left")
    return codes


def chi2_statistic(codes, y) -> float:
    """Pearson chi-square of the code-by-class contingency table."""
    codes = np.asarray(codes)
    y = np.asarray(y)
    _, ci = np.unique(codes, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((ci.max() + 1, yi.max() + 1))
    np.add.at(table, (ci, yi), 1.0)
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 0.0
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    return float(((table - expected) ** 2 / expected).sum())


def chi2_rank(X: np.ndarray, y, names: Sequence[str], n_bins: int = 10) -> list[tuple[str, float]]:
    """(feature, chi-square) pairs sorted by decreasing chi-square."""
    y = np.asarray(y)
    if np.unique(y).size < 2:
        raise ValueError("chi-square ranking needs at least two classes")
    X = np.asarray(X, dtype=float)
    scores = [(name, chi2_statistic(discretize(X[:, j], n_bins), y)) for j, name in enumerate(names)]
    # stable sort keeps catalog order among equal scores
    return sorted(scores, key=lambda kv: -kv[1])


def top_k_selection(ranked: Sequence[tuple[str, float]], k: int) -> list[str]:
    if not 1 <= k <= len(ranked):
        raise ValueError(f"k must be in 1..{len(ranked)}, got {k}")
    return [name for name, _ in ranked[:k]]
