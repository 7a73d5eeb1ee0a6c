"""Random forest of Gini CART trees: the order-blind baseline classifier."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..formats import atomic_write_text


@dataclass
class Tree:
    """Flat node arrays; ``feature[n] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (nodes, classes)

    def leaf_counts(self, x):
        node = np.zeros(len(x), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            f = self.feature[node[idx]]
            go_left = x[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            active = self.feature[node] >= 0
        return self.counts[node]

    def predict(self, x):
        return self.leaf_counts(x).argmax(axis=1)

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["feature"], dtype=int), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=int), np.asarray(d["right"], dtype=int),
                   np.asarray(d["counts"], dtype=float).reshape(len(d["feature"]), -1))


def _gini(counts):
    total = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / total[..., None]
    return np.where(total > 0, 1.0 - (np.nan_to_num(p) ** 2).sum(axis=-1), 0.0)


def _best_split(x, y_onehot, features):
    """Best (feature, threshold, impurity) over ``features``, or None."""
    n = len(x)
    best = None
    total = y_onehot.sum(axis=0)
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        valid = np.flatnonzero(xs[1:] > xs[:-1])
        if len(valid) == 0:
            continue
        left = np.cumsum(y_onehot[order], axis=0)[valid]
        right = total - left
        n_left = valid + 1.0
        impurity = (n_left * _gini(left) + (n - n_left) * _gini(right)) / n
        j = int(np.argmin(impurity))
        if best is None or impurity[j] < best[2]:
            pos = valid[j]
            best = (int(f), 0.5 * (xs[pos] + xs[pos + 1]), float(impurity[j]))
    return best


def build_tree(x, y, num_classes, rng, max_depth=16, max_features=None, min_samples_split=2):
    d = x.shape[1]
    mtry = max_features or max(1, int(math.sqrt(d)))
    onehot = np.eye(num_classes)[y]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(onehot[idx].sum(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(len(x)))
    stack = [(root, np.arange(len(x)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        if depth >= max_depth or len(idx) < min_samples_split or np.count_nonzero(c) <= 1:
            continue
        feats = rng.choice(d, size=min(mtry, d), replace=False)
        split = _best_split(x[idx], onehot[idx], feats)
        if split is None or split[2] >= _gini(c) - 1e-15:
            continue
        f, thr, _ = split
        mask = x[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                np.array(counts).reshape(-1, num_classes))


@dataclass
class ForestModel:
    trees: list
    num_classes: int
    max_depth: int = 16
    seed: int = 0
    oob_accuracy: float = float("nan")
    class_names: list = field(default=None)

    @property
    def tree_count(self):
        return len(self.trees)

    def votes(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        v = np.zeros((len(x), self.num_classes))
        for t in self.trees:
            v[np.arange(len(x)), t.predict(x)] += 1
        return v

    def predict_proba(self, x):
        v = self.votes(x)
        return v / v.sum(axis=1, keepdims=True)

    def predict(self, x):
        return self.votes(x).argmax(axis=1)

    def save(self, path):
        payload = {"num_classes": self.num_classes, "max_depth": self.max_depth,
                   "seed": self.seed, "oob_accuracy": self.oob_accuracy,
                   "class_names": self.class_names,
                   "trees": [t.to_dict() for t in self.trees]}
        atomic_write_text(path, json.dumps(payload) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls([Tree.from_dict(t) for t in d["trees"]], d["num_classes"], d["max_depth"],
                   d["seed"], d.get("oob_accuracy", float("nan")), d.get("class_names"))


def train_forest(samples, labels=None, trees=100, max_depth=16, seed=0, num_classes=None,
                 class_names=None, bootstrap=True, max_features=None):
    """Bootstrap-aggregated CART trees with sqrt(D) candidate features per node.

    ``samples`` is an (n, D) array (or a list of ``(vector, label)`` pairs
    when ``labels`` is omitted).  The out-of-bag accuracy is stored on the model
    (NaN without bootstrap, where no sample is out of bag).
    """
    if labels is None:
        x = np.array([s[0] for s in samples], dtype=np.float64)
        y = np.array([s[1] for s in samples], dtype=int)
    else:
        x = np.asarray(samples, dtype=np.float64)
        y = np.asarray(labels, dtype=int)
    if len(x) == 0:
        raise ValueError("empty training set")
    k = num_classes or int(y.max()) + 1
    rng = np.random.default_rng(seed)
    n = len(x)
    forest = []
    oob_votes = np.zeros((n, k))
    for _ in range(trees):
        boot = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = build_tree(x[boot], y[boot], k, rng, max_depth, max_features)
        forest.append(tree)
        oob = np.setdiff1d(np.arange(n), boot)
        if len(oob):
            oob_votes[oob, tree.predict(x[oob])] += 1
    seen = oob_votes.sum(axis=1) > 0
    oob_acc = float((oob_votes[seen].argmax(axis=1) == y[seen]).mean()) if seen.any() else float("nan")
    return ForestModel(forest, k, max_depth, seed, oob_acc, class_names)


def forest_predict(model, x):
    return model.predict(x)
