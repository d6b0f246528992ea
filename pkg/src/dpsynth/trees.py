"""CART-style trees over ordinal attribute vectors.

Both tree kinds work on weighted row groups: callers aggregate identical
(feature vector, label) rows into one entry with a count weight, which keeps
node statistics exact while shrinking the working set to the number of
distinct rows. Splits are axis thresholds (go left when x[j] <= t).

Zero-gain splits are deliberately legal at impure nodes: concepts like XOR
have no first split with positive Gini gain, and a splitter that refuses them
can never reach the interaction underneath. A node only becomes a leaf when
it is pure, out of depth, or no threshold separates its rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    """Internal node (feature, threshold, children) or leaf (value)."""

    value: float
    feature: int | None = None
    threshold: int | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value}
        return {
            "value": self.value,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(value=float(d["value"]))
        return cls(
            value=float(d["value"]),
            feature=int(d["feature"]),
            threshold=int(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def tree_apply(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Evaluate the tree on rows of ordinal features."""
    out = np.empty(X.shape[0], dtype=np.float64)
    _apply_into(node, X, np.arange(X.shape[0]), out)
    return out


def _apply_into(node, X, idx, out):
    if idx.size == 0:
        return
    if node.is_leaf:
        out[idx] = node.value
        return
    go_left = X[idx, node.feature] <= node.threshold
    _apply_into(node.left, X, idx[go_left], out)
    _apply_into(node.right, X, idx[~go_left], out)


def _candidate_splits(values: np.ndarray):
    """Thresholds that put at least one distinct value on each side."""
    uniq = np.unique(values)
    return uniq[:-1]


def _gini_best_threshold(values, w_total, w_pos):
    """Lowest weighted Gini over thresholds of one feature, or None."""
    thresholds = _candidate_splits(values)
    if thresholds.size == 0:
        return None
    best = None
    for t in thresholds:
        left = values <= t
        wl, wr = w_total[left].sum(), w_total[~left].sum()
        pl, pr = w_pos[left].sum(), w_pos[~left].sum()
        gini = 0.0
        for w_side, p_side in ((wl, pl), (wr, pr)):
            if w_side > 0:
                q = p_side / w_side
                gini += w_side * 2.0 * q * (1.0 - q)
        if best is None or gini < best[0]:
            best = (gini, t)
    return best


def fit_classification_tree(X: np.ndarray, w_total: np.ndarray, w_pos: np.ndarray,
                            max_depth: int | None, mtry: int,
                            rng: np.random.Generator) -> TreeNode:
    """Weighted Gini CART; leaves carry the positive-class fraction.

    mtry features are drawn per node; when none of them admits a split, all
    features are scanned before the node is closed as a leaf.
    """
    n_features = X.shape[1]

    def build(idx, depth):
        total = w_total[idx].sum()
        pos = w_pos[idx].sum()
        value = pos / total
        if pos == 0 or pos == total or (max_depth is not None and depth >= max_depth):
            return TreeNode(value=value)

        candidates = rng.permutation(n_features)[:mtry]
        chosen = _search_features(idx, candidates)
        if chosen is None and mtry < n_features:
            chosen = _search_features(idx, np.arange(n_features))
        if chosen is None:
            return TreeNode(value=value)

        feature, threshold = chosen
        go_left = X[idx, feature] <= threshold
        return TreeNode(
            value=value,
            feature=int(feature),
            threshold=int(threshold),
            left=build(idx[go_left], depth + 1),
            right=build(idx[~go_left], depth + 1),
        )

    def _search_features(idx, features):
        best = None
        for j in features:
            found = _gini_best_threshold(X[idx, j], w_total[idx], w_pos[idx])
            if found is None:
                continue
            gini, t = found
            if best is None or gini < best[0]:
                best = (gini, int(j), int(t))
        if best is None:
            return None
        return best[1], best[2]

    return build(np.arange(X.shape[0]), 0)


def fit_regression_tree(X: np.ndarray, residual: np.ndarray, hessian: np.ndarray,
                        weight: np.ndarray, max_depth: int) -> TreeNode:
    """Depth-limited squared-error tree with Newton leaf values.

    Leaves output sum(w r) / sum(w h); a vanishing hessian sum gives 0.
    Deterministic: every feature is scanned at every node.
    """
    n_features = X.shape[1]

    def leaf_value(idx):
        h = float((weight[idx] * hessian[idx]).sum())
        if h <= 1e-12:
            return 0.0
        return float((weight[idx] * residual[idx]).sum() / h)

    def sse(idx):
        w = weight[idx]
        r = residual[idx]
        tw = w.sum()
        if tw <= 0:
            return 0.0
        mean = (w * r).sum() / tw
        return float((w * (r - mean) ** 2).sum())

    def build(idx, depth):
        if depth >= max_depth or idx.size <= 1:
            return TreeNode(value=leaf_value(idx))
        best = None
        for j in range(n_features):
            for t in _candidate_splits(X[idx, j]):
                left = X[idx, j] <= t
                score = sse(idx[left]) + sse(idx[~left])
                if best is None or score < best[0]:
                    best = (score, int(j), int(t))
        if best is None:
            return TreeNode(value=leaf_value(idx))
        _, feature, threshold = best
        go_left = X[idx, feature] <= threshold
        return TreeNode(
            value=leaf_value(idx),
            feature=feature,
            threshold=threshold,
            left=build(idx[go_left], depth + 1),
            right=build(idx[~go_left], depth + 1),
        )

    return build(np.arange(X.shape[0]), 0)
