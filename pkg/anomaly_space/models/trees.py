#!/usr/bin/env python3
"""
Tree ensembles on the Anomaly-Space features.

- RandomForestClassifier: bootstrap trees grown on weighted Gini impurity with
  midpoint thresholds and a random subset of candidate features per split;
  prediction is a hard majority vote
- GradientBoostingClassifier: histogram-based, leaf-wise trees fitted to the
  softmax gradients (one tree per class per round, Newton leaf values)

Splits only compare feature values, so both ensembles are invariant to
strictly increasing per-feature transforms.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..runtime import ordered_map, substream
from .base import N_CLASSES, ClassifierInterface, ForestParams, GBMParams, one_hot, softmax

logger = logging.getLogger(__name__)


@dataclass
class Tree:
    """Binary tree stored as parallel node arrays; leaves have left == -1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row (x <= threshold goes left)."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.left[node] >= 0)
        while active.size:
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.left[node[active]] >= 0]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.left < 0))

    def to_nodes(self) -> List[Dict[str, Any]]:
        nodes = []
        for i in range(len(self.feature)):
            if self.left[i] < 0:
                leaf = self.value[i]
                nodes.append(
                    {
                        "feature": -1,
                        "threshold": None,
                        "left": -1,
                        "right": -1,
                        "leaf_value": leaf.tolist() if np.ndim(leaf) else float(leaf),
                    }
                )
            else:
                nodes.append(
                    {
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                        "leaf_value": None,
                    }
                )
        return nodes

    @classmethod
    def from_nodes(cls, nodes: List[Dict[str, Any]], width: int = 0) -> "Tree":
        blank = np.zeros(width) if width else 0.0
        return cls(
            feature=np.array([max(int(n["feature"]), 0) for n in nodes], dtype=np.int64),
            threshold=np.array([0.0 if n["threshold"] is None else float(n["threshold"]) for n in nodes]),
            left=np.array([int(n["left"]) for n in nodes], dtype=np.int64),
            right=np.array([int(n["right"]) for n in nodes], dtype=np.int64),
            value=np.array([blank if n["leaf_value"] is None else n["leaf_value"] for n in nodes], dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self):
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[Any] = []

    def add(self) -> int:
        self.feature.append(0)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(None)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float) -> Tuple[int, int]:
        left, right = self.add(), self.add()
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right
        return left, right

    def build(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value, dtype=np.float64),
        )


def _midpoint(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    mid = (lo + hi) / 2.0
    # adjacent floats can round the midpoint up to hi
    return np.where(mid < hi, mid, lo)


def gini_split(x: np.ndarray, weighted_onehot: np.ndarray, total: np.ndarray) -> Optional[Tuple[float, float]]:
    """
    Best threshold on one feature by weighted Gini impurity.

    Returns:
        tuple: (child cost, threshold) with cost = sum over children of
        weight * gini, or None if the feature is constant on the node
    """
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    left = np.cumsum(weighted_onehot[order], axis=0)[:-1]
    right = total - left
    w_left = left.sum(axis=1)
    w_right = right.sum(axis=1)
    cost = (w_left - (left**2).sum(axis=1) / w_left) + (w_right - (right**2).sum(axis=1) / w_right)
    cost[~valid] = np.inf
    p = int(np.argmin(cost))
    return float(cost[p]), float(_midpoint(xs[p], xs[p + 1]))


def _best_forest_split(
    X: np.ndarray, weighted_onehot: np.ndarray, total: np.ndarray, max_features: int, rng: np.random.Generator
) -> Optional[Tuple[int, float]]:
    best = None
    for tried, f in enumerate(rng.permutation(X.shape[1])):
        # keep drawing past max_features only while no feature could split
        if tried >= max_features and best is not None:
            break
        candidate = gini_split(X[:, f], weighted_onehot, total)
        if candidate is not None and (best is None or candidate[0] < best[0]):
            best = (candidate[0], int(f), candidate[1])
    return None if best is None else (best[1], best[2])


def grow_classification_tree(
    X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, params: ForestParams, rng: np.random.Generator
) -> Tree:
    """Grow one unpruned Gini tree depth-first; leaves hold weighted class fractions."""
    weighted_onehot = one_hot(y) * sample_weight[:, None]
    builder = _TreeBuilder()
    stack = [(builder.add(), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = weighted_onehot[idx].sum(axis=0)
        builder.value[node] = counts / counts.sum()
        if (
            idx.size < params.min_samples_split
            or np.count_nonzero(counts) <= 1
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue
        split = _best_forest_split(X[idx], weighted_onehot[idx], counts, params.max_features, rng)
        if split is None:
            continue
        feature, threshold = split
        mask = X[idx, feature] <= threshold
        left, right = builder.split(node, feature, threshold)
        stack.append((right, idx[~mask], depth + 1))
        stack.append((left, idx[mask], depth + 1))
    return builder.build()


class RandomForestClassifier(ClassifierInterface):
    """Bootstrap ensemble of Gini trees; per-class scores are vote fractions."""

    kind = "random_forest"

    def __init__(self, params: Optional[ForestParams] = None, seed: int = 0):
        self.params = params or ForestParams()
        self.seed = seed
        self.trees: List[Tree] = []

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, threads: Optional[int] = None) -> None:
        n = len(y)

        def grow(index: int) -> Tree:
            rng = substream(self.seed, "random_forest", index)
            rows = rng.integers(0, n, n) if self.params.bootstrap else np.arange(n)
            return grow_classification_tree(X[rows], y[rows], sample_weight[rows], self.params, rng)

        self.trees = ordered_map(grow, range(self.params.n_trees), threads)
        logger.info(
            f"Grew {len(self.trees)} trees "
            f"({int(np.mean([t.n_leaves for t in self.trees]))} leaves on average) on {n} rows"
        )

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Class voted by every tree, shape (n_trees, n)."""
        return np.array([np.argmax(tree.predict_value(X), axis=1) for tree in self.trees], dtype=np.int64)

    def scores(self, X: np.ndarray) -> np.ndarray:
        votes = self.votes(X)
        counts = np.stack([(votes == c).sum(axis=0) for c in range(N_CLASSES)], axis=1)
        return counts / float(len(self.trees))

    def parameters(self) -> Dict[str, Any]:
        return {"trees": [tree.to_nodes() for tree in self.trees]}

    def load_parameters(self, params: Dict[str, Any]) -> None:
        self.trees = [Tree.from_nodes(nodes, N_CLASSES) for nodes in params["trees"]]


def bin_thresholds(column: np.ndarray, max_bins: int) -> np.ndarray:
    """
    Rank-based histogram cut points of one feature.

    Every distinct value gets its own bin when there are at most max_bins of
    them; otherwise cuts sit at the equal-count rank positions (dropping
    positions inside runs of equal values).
    """
    values = np.sort(column)
    unique = np.unique(values)
    if unique.size <= max_bins:
        return _midpoint(unique[:-1], unique[1:])
    positions = (np.arange(1, max_bins) * values.size) // max_bins
    lo, hi = values[positions - 1], values[positions]
    keep = hi > lo
    return np.unique(_midpoint(lo[keep], hi[keep]))


@dataclass
class _Leaf:
    node: int
    idx: np.ndarray
    gain: float = -np.inf
    feature: int = -1
    bin: int = -1


def _histogram_split(leaf: _Leaf, bins: np.ndarray, n_bins: List[int], g: np.ndarray, h: np.ndarray, params: GBMParams) -> None:
    idx = leaf.idx
    g_node, h_node = g[idx], h[idx]
    G, H = g_node.sum(), h_node.sum()
    parent = G * G / (H + params.lambda_l2) if H + params.lambda_l2 > 0 else 0.0
    for f, nb in enumerate(n_bins):
        if nb < 2:
            continue
        b = bins[idx, f]
        count_left = np.cumsum(np.bincount(b, minlength=nb))[:-1]
        g_left = np.cumsum(np.bincount(b, weights=g_node, minlength=nb))[:-1]
        h_left = np.cumsum(np.bincount(b, weights=h_node, minlength=nb))[:-1]
        count_right = idx.size - count_left
        g_right, h_right = G - g_left, H - h_left
        ok = (
            (count_left >= params.min_samples_leaf)
            & (count_right >= params.min_samples_leaf)
            & (h_left >= params.min_hessian)
            & (h_right >= params.min_hessian)
            & (h_left + params.lambda_l2 > 0)
            & (h_right + params.lambda_l2 > 0)
        )
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = g_left**2 / (h_left + params.lambda_l2) + g_right**2 / (h_right + params.lambda_l2) - parent
        gain[~ok] = -np.inf
        j = int(np.argmax(gain))
        if gain[j] > leaf.gain:
            leaf.gain, leaf.feature, leaf.bin = float(gain[j]), f, j


def grow_boosted_tree(
    bins: np.ndarray, cuts: List[np.ndarray], g: np.ndarray, h: np.ndarray, params: GBMParams
) -> Tree:
    """
    Grow one leaf-wise histogram tree on gradients g and hessians h.

    The leaf with the largest positive gain is split next until max_leaves
    is reached; leaf values are learning_rate * -G / (H + lambda).
    """
    n_bins = [c.size + 1 for c in cuts]
    builder = _TreeBuilder()
    root = _Leaf(builder.add(), np.arange(len(g)))
    _histogram_split(root, bins, n_bins, g, h, params)
    leaves = [root]
    while len(leaves) < params.max_leaves:
        best = max(range(len(leaves)), key=lambda i: (leaves[i].gain, -leaves[i].node))
        leaf = leaves[best]
        if not leaf.gain > 0:
            break
        mask = bins[leaf.idx, leaf.feature] <= leaf.bin
        left_node, right_node = builder.split(leaf.node, leaf.feature, float(cuts[leaf.feature][leaf.bin]))
        children = [_Leaf(left_node, leaf.idx[mask]), _Leaf(right_node, leaf.idx[~mask])]
        for child in children:
            _histogram_split(child, bins, n_bins, g, h, params)
        leaves[best:best + 1] = children
    for node in range(len(builder.value)):
        builder.value[node] = 0.0
    for leaf in leaves:
        denominator = h[leaf.idx].sum() + params.lambda_l2
        output = -g[leaf.idx].sum() / denominator if denominator > 0 else 0.0
        builder.value[leaf.node] = params.learning_rate * output
    return builder.build()


class GradientBoostingClassifier(ClassifierInterface):
    """Softmax gradient boosting; per-class scores are the softmax of summed leaf values."""

    kind = "gbm"

    def __init__(self, params: Optional[GBMParams] = None, seed: int = 0):
        self.params = params or GBMParams()
        self.seed = seed
        self.rounds: List[List[Tree]] = []

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, threads: Optional[int] = None) -> None:
        cuts = [bin_thresholds(X[:, f], self.params.max_bins) for f in range(X.shape[1])]
        bins = np.stack([np.searchsorted(c, X[:, f], side="left") for f, c in enumerate(cuts)], axis=1)
        targets = one_hot(y)
        raw = np.zeros((len(y), N_CLASSES))
        self.rounds = []
        for round_no in range(self.params.n_rounds):
            p = softmax(raw)

            def fit_class(c: int) -> Tree:
                g = (p[:, c] - targets[:, c]) * sample_weight
                h = p[:, c] * (1.0 - p[:, c]) * sample_weight
                return grow_boosted_tree(bins, cuts, g, h, self.params)

            trees = ordered_map(fit_class, range(N_CLASSES), threads)
            for c, tree in enumerate(trees):
                raw[:, c] += tree.predict_value(X)
            self.rounds.append(trees)
            if round_no % 25 == 0:
                loss = -np.mean(np.log(np.clip(softmax(raw)[np.arange(len(y)), y], 1e-300, None)))
                logger.debug(f"Boosting round {round_no}: training log-loss {loss:.5f}")
        logger.info(f"Boosted {len(self.rounds)} rounds x {N_CLASSES} trees on {len(y)} rows")

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        raw = np.zeros((len(X), N_CLASSES))
        for trees in self.rounds:
            for c, tree in enumerate(trees):
                raw[:, c] += tree.predict_value(X)
        return raw

    def scores(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.raw_scores(X))

    def parameters(self) -> Dict[str, Any]:
        return {"rounds": [[tree.to_nodes() for tree in trees] for trees in self.rounds]}

    def load_parameters(self, params: Dict[str, Any]) -> None:
        self.rounds = [[Tree.from_nodes(nodes) for nodes in trees] for trees in params["rounds"]]
