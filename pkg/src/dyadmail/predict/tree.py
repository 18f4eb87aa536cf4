"""Gini decision trees over pre-binned features.

Feature values are mapped to integer codes once per training set: code 0 is
"missing", codes 1..k are value bins. A split sends codes <= b left; missing
values follow whichever child received more training weight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

MISSING = 0


@dataclass
class Binner:
    """Per-feature bin edges. Bin j (1-based) holds edges[j-2] < x <= edges[j-1]."""

    edges: list  # one sorted float array per feature

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = 255) -> "Binner":
        edges = []
        for j in range(X.shape[1]):
            col = X[:, j]
            col = col[~np.isnan(col)]
            u = np.unique(col)
            if u.size <= 1:
                e = np.zeros(0)
            elif u.size <= max_bins:
                e = 0.5 * (u[:-1] + u[1:])
            else:
                qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
                e = np.unique(np.quantile(col, qs, method="lower"))
                e = e[e < u[-1]]
            edges.append(e.astype(float))
        return cls(edges)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape, dtype=np.uint16)
        for j, e in enumerate(self.edges):
            col = X[:, j]
            nan = np.isnan(col)
            codes = np.searchsorted(e, np.where(nan, 0.0, col), side="left") + 1
            codes[nan] = MISSING
            out[:, j] = codes
        return out

    def threshold(self, feature: int, code: int) -> float:
        return float(self.edges[feature][code - 1])


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class probabilities

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _predict_tree(X, self.feature, self.threshold, self.missing_left, self.left, self.right, self.value)


@njit(cache=True, nogil=True)
def _gini_sum(counts, total):
    if total <= 0.0:
        return 0.0
    s = 0.0
    for c in range(counts.shape[0]):
        s += counts[c] * counts[c]
    return total - s / total  # total * gini impurity


@njit(cache=True, nogil=True)
def _fill_hist(Xb, y, w, idx, lo, hi, hist):
    hist[:, :, :] = 0.0
    F = Xb.shape[1]
    for k in range(lo, hi):
        i = idx[k]
        yi = y[i]
        wi = w[i]
        for f in range(F):
            hist[f, Xb[i, f], yi] += wi


@njit(cache=True, nogil=True)
def _best_on_feature(counts, codes, n_codes, tot, W, min_leaf, best, lcnt, rcnt, mcnt):
    """Best split "code <= b" over the candidate `codes` (ascending) of one feature.

    `counts[b, c]` is the class-c weight of code b; row 0 holds missing values.
    Returns (score, b, missing_left); b = -1 when nothing beats `best`.
    """
    C = tot.shape[0]
    Wm = 0.0
    for c in range(C):
        mcnt[c] = counts[0, c]
        Wm += mcnt[c]
        lcnt[c] = 0.0
    Wl = 0.0
    Wobs = W - Wm
    best_b = -1
    best_ml = False
    for j in range(n_codes):
        b = codes[j]
        rw = 0.0
        for c in range(C):
            rw += counts[b, c]
        if rw == 0.0:
            # same partition as the previous code, which was already scored
            continue
        for c in range(C):
            lcnt[c] += counts[b, c]
        Wl += rw
        Wr = Wobs - Wl
        if Wl <= 0.0 or Wr <= 0.0:
            continue
        ml = Wl >= Wr
        if ml:
            WL = Wl + Wm
            WR = Wr
            for c in range(C):
                rcnt[c] = tot[c] - lcnt[c] - mcnt[c]
        else:
            WL = Wl
            WR = Wr + Wm
            for c in range(C):
                rcnt[c] = tot[c] - lcnt[c]
        if WL >= min_leaf and WR >= min_leaf:
            if ml:
                for c in range(C):
                    lcnt[c] += mcnt[c]
            score = _gini_sum(lcnt, WL) + _gini_sum(rcnt, WR)
            if ml:
                for c in range(C):
                    lcnt[c] -= mcnt[c]
            if score < best:
                best = score
                best_b = b
                best_ml = ml
    return best, best_b, best_ml


@njit(cache=True, nogil=True)
def _build(Xb, y, w, n_bins, n_classes, max_depth, min_leaf, max_nodes, dense_min):
    n, F = Xb.shape
    B = 0
    for f in range(F):
        if n_bins[f] > B:
            B = n_bins[f]
    idx = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if w[i] > 0:
            idx[m] = i
            m += 1

    feature = np.full(max_nodes, -1, dtype=np.int64)
    code = np.zeros(max_nodes, dtype=np.int64)
    miss_left = np.zeros(max_nodes, dtype=np.bool_)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros((max_nodes, n_classes))

    # Nodes with at least `dense_min` samples search splits on full
    # histograms (a child's histogram is its parent's minus its sibling's).
    # Smaller nodes only visit the codes they contain.
    if dense_min < 0:
        dense_min = max(B, 32)
    all_codes = np.arange(B + 1, dtype=np.int64)[1:]
    scratch = np.zeros((F, B + 1, n_classes))
    touched = np.empty((F, B + 1), dtype=np.int64)
    n_touched = np.zeros(F, dtype=np.int64)
    marked = np.zeros((F, B + 1), dtype=np.bool_)

    # Depth-first stack; the histogram of the node at stack position p lives
    # in hists[p]. A split replaces the parent entry by two children, so the
    # stack never exceeds max_depth + 2 entries.
    cap = max_depth + 2
    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    hists = np.zeros((cap, F, B + 1, n_classes))
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    stack_depth[0] = 0
    if m >= dense_min:
        _fill_hist(Xb, y, w, idx, 0, m, hists[0])
    sp = 1
    n_nodes = 1

    tot = np.zeros(n_classes)
    lcnt = np.zeros(n_classes)
    rcnt = np.zeros(n_classes)
    mcnt = np.zeros(n_classes)

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]

        tot[:] = 0.0
        for k in range(lo, hi):
            i = idx[k]
            tot[y[i]] += w[i]
        W = tot.sum()
        for c in range(n_classes):
            value[node, c] = tot[c] / W if W > 0 else 0.0
        parent = _gini_sum(tot, W)
        if depth >= max_depth or W < 2 * min_leaf or parent <= 1e-12 or n_nodes + 2 > max_nodes:
            continue

        dense = hi - lo >= dense_min
        if not dense:
            # sparse per-feature counts, visiting each sample row once
            for k in range(lo, hi):
                i = idx[k]
                yi = y[i]
                wi = w[i]
                for f in range(F):
                    cb = Xb[i, f]
                    if not marked[f, cb]:
                        marked[f, cb] = True
                        touched[f, n_touched[f]] = cb
                        n_touched[f] += 1
                    scratch[f, cb, yi] += wi
        best = parent - 1e-12
        best_f = -1
        best_b = 0
        best_ml = False
        for f in range(F):
            nb = n_bins[f]
            if dense:
                if nb < 2:
                    continue
                score, b, ml = _best_on_feature(hists[sp, f], all_codes, nb - 1, tot, W, min_leaf,
                                                best, lcnt, rcnt, mcnt)
            else:
                nt = n_touched[f]
                codes = touched[f, :nt]
                if 4 * nt >= nb:
                    # many codes present: read them in order off the bitmap
                    j = 0
                    for cb in range(nb + 1):
                        if marked[f, cb]:
                            codes[j] = cb
                            j += 1
                else:
                    codes.sort()
                start = 1 if codes[0] == 0 else 0
                b = -1
                if nb >= 2:
                    score, b, ml = _best_on_feature(scratch[f], codes[start:], nt - start, tot, W, min_leaf,
                                                    best, lcnt, rcnt, mcnt)
                for j in range(nt):
                    scratch[f, codes[j], :] = 0.0
                    marked[f, codes[j]] = False
                n_touched[f] = 0
            if b >= 0:
                best = score
                best_f = f
                best_b = b
                best_ml = ml
        if best_f < 0:
            continue

        # partition idx[lo:hi] in place
        a = lo
        z = hi - 1
        while a <= z:
            cb = Xb[idx[a], best_f]
            go_left = best_ml if cb == 0 else cb <= best_b
            if go_left:
                a += 1
            else:
                t = idx[a]
                idx[a] = idx[z]
                idx[z] = t
                z -= 1
        feature[node] = best_f
        code[node] = best_b
        miss_left[node] = best_ml
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id

        # Scan the smaller child into slot sp+1, derive its sibling in slot sp.
        if a - lo <= hi - a:
            small_node, small_lo, small_hi = l_id, lo, a
            big_node, big_lo, big_hi = r_id, a, hi
        else:
            small_node, small_lo, small_hi = r_id, a, hi
            big_node, big_lo, big_hi = l_id, lo, a
        if big_hi - big_lo >= dense_min:
            _fill_hist(Xb, y, w, idx, small_lo, small_hi, hists[sp + 1])
            hists[sp] -= hists[sp + 1]
        stack_node[sp] = big_node
        stack_lo[sp] = big_lo
        stack_hi[sp] = big_hi
        stack_depth[sp] = depth + 1
        stack_node[sp + 1] = small_node
        stack_lo[sp + 1] = small_lo
        stack_hi[sp + 1] = small_hi
        stack_depth[sp + 1] = depth + 1
        sp += 2

    return (feature[:n_nodes].copy(), code[:n_nodes].copy(), miss_left[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _predict_tree(X, feature, threshold, missing_left, left, right, value):
    n = X.shape[0]
    out = np.empty((n, value.shape[1]))
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            x = X[i, feature[node]]
            if np.isnan(x):
                go_left = missing_left[node]
            else:
                go_left = x <= threshold[node]
            node = left[node] if go_left else right[node]
        out[i] = value[node]
    return out


def fit_tree(
    Xb: np.ndarray,
    y: np.ndarray,
    binner: Binner,
    n_classes: int,
    weights: np.ndarray | None = None,
    max_depth: int = 12,
    min_leaf: float = 5,
    dense_min: int = -1,
) -> Tree:
    """Grow one tree on binned features `Xb` with per-sample `weights`.

    `dense_min` is the node size from which split search uses full
    histograms (-1 picks it from the bin count); it affects speed only.
    """
    n = Xb.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    max_nodes = int(min(2 ** (max_depth + 1), 2 * max(int((w > 0).sum()), 1) + 1))
    feat, code, ml, left, right, value = _build(
        np.ascontiguousarray(Xb), np.asarray(y, dtype=np.int64), w, binner.n_bins,
        n_classes, max_depth, float(min_leaf), max_nodes, int(dense_min),
    )
    thr = np.array(
        [binner.threshold(int(f), int(c)) if f >= 0 else np.nan for f, c in zip(feat, code)], dtype=float
    )
    return Tree(feat, thr, ml, left, right, value)
