"""Binary CART classifier with probability-scored leaves and grid-search CV.

Splits are chosen greedily by impurity decrease over candidate thresholds
placed at midpoints between consecutive distinct feature values. The
tie-break is fixed (lower feature index, then lower threshold) so a fit is
fully reproducible from its inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

CRITERIA = ("gini", "entropy")


class EmptyTrainingSet(Exception):
    """fit_tree called without training instances."""


class TooFewInstances(Exception):
    """Not enough instances (or patients) to form the requested CV folds."""


@dataclass(frozen=True)
class TreeParams:
    criterion: str = "gini"
    min_samples_leaf: int = 1
    min_samples_split: int = 2

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")


@dataclass(frozen=True)
class ParamGrid:
    criteria: tuple[str, ...] = ("gini", "entropy")
    leaf_values: tuple[int, ...] = (2, 3, 4, 5)
    split_values: tuple[int, ...] = (2, 3, 4, 5)
    folds: int = 5

    def __post_init__(self):
        if not (self.criteria and self.leaf_values and self.split_values):
            raise ValueError("grid axes must be non-empty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")

    def cells(self) -> Iterator[TreeParams]:
        # Iteration order doubles as the tie-break order of grid search.
        for criterion in self.criteria:
            for leaf in self.leaf_values:
                for split in self.split_values:
                    yield TreeParams(criterion, leaf, split)


def impurity(n_pos: int, n_neg: int, criterion: str) -> float:
    """Gini or entropy impurity of a (n_pos, n_neg) node."""
    n = n_pos + n_neg
    if n < 1:
        raise ValueError("impurity of an empty node")
    p = n_pos / n
    q = n_neg / n
    if criterion == "gini":
        return 1.0 - p * p - q * q
    if criterion == "entropy":
        h = 0.0
        if p > 0.0:
            h -= p * math.log2(p)
        if q > 0.0:
            h -= q * math.log2(q)
        return h
    raise ValueError(f"criterion must be one of {CRITERIA}")


def _impurity_array(pos: np.ndarray, n: np.ndarray, criterion: str) -> np.ndarray:
    p = pos / n
    q = 1.0 - p
    if criterion == "gini":
        return 1.0 - p * p - q * q
    h = np.zeros_like(p)
    for frac in (p, q):
        nz = frac > 0.0
        h[nz] -= frac[nz] * np.log2(frac[nz])
    return h


@dataclass
class Node:
    n_pos: int
    n_neg: int
    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def score(self) -> float:
        return self.n_pos / (self.n_pos + self.n_neg)


@dataclass(frozen=True)
class Tree:
    root: Node
    n_features: int
    params: TreeParams

    def predict_score(self, features: Sequence[float]) -> float:
        """Positive-class fraction of the leaf the feature vector routes to."""
        if len(features) != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {len(features)}")
        node = self.root
        while not node.is_leaf:
            node = node.left if features[node.feature] <= node.threshold else node.right
        return node.score

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self.predict_score(row) for row in X])

    def iter_nodes(self) -> Iterator[Node]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    def n_leaves(self) -> int:
        return sum(1 for node in self.iter_nodes() if node.is_leaf)

    def to_dict(self) -> dict:
        def encode(node: Node) -> dict:
            if node.is_leaf:
                return {"n_pos": node.n_pos, "n_neg": node.n_neg}
            return {
                "feature_index": node.feature,
                "threshold": node.threshold,
                "n_pos": node.n_pos,
                "n_neg": node.n_neg,
                "left": encode(node.left),
                "right": encode(node.right),
            }

        return {
            "n_features": self.n_features,
            "params": {
                "criterion": self.params.criterion,
                "min_samples_leaf": self.params.min_samples_leaf,
                "min_samples_split": self.params.min_samples_split,
            },
            "root": encode(self.root),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Tree":
        def decode(obj: dict) -> Node:
            if "feature_index" in obj:
                return Node(
                    n_pos=obj["n_pos"], n_neg=obj["n_neg"],
                    feature=obj["feature_index"], threshold=obj["threshold"],
                    left=decode(obj["left"]), right=decode(obj["right"]),
                )
            return Node(n_pos=obj["n_pos"], n_neg=obj["n_neg"])

        params = TreeParams(**payload["params"])
        return cls(root=decode(payload["root"]), n_features=payload["n_features"], params=params)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Tree":
        return cls.from_dict(json.loads(text))


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray,
                params: TreeParams) -> tuple[float, int, float] | None:
    n = idx.size
    n_pos = int(y[idx].sum())
    n_neg = n - n_pos
    parent = impurity(n_pos, n_neg, params.criterion)
    min_leaf = params.min_samples_leaf
    best: tuple[float, int, float] | None = None
    y_node = y[idx]
    for f in range(X.shape[1]):
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        if v[0] == v[-1]:
            continue
        ly = y_node[order]
        left_n = np.arange(1, n)
        ok = (v[1:] > v[:-1]) & (left_n >= min_leaf) & ((n - left_n) >= min_leaf)
        if not ok.any():
            continue
        left_pos = np.cumsum(ly)[:-1]
        li = _impurity_array(left_pos, left_n, params.criterion)
        ri = _impurity_array(n_pos - left_pos, n - left_n, params.criterion)
        delta = parent - (left_n * li + (n - left_n) * ri) / n
        delta[~ok] = -np.inf
        k = int(np.argmax(delta))  # first maximum -> lowest threshold
        if delta[k] > 0.0 and (best is None or delta[k] > best[0]):
            best = (float(delta[k]), f, float(0.5 * (v[k] + v[k + 1])))
    return best


def _grow(X: np.ndarray, y: np.ndarray, idx: np.ndarray, params: TreeParams) -> Node:
    n_pos = int(y[idx].sum())
    n_neg = idx.size - n_pos
    node = Node(n_pos=n_pos, n_neg=n_neg)
    if idx.size < params.min_samples_split or n_pos == 0 or n_neg == 0:
        return node
    found = _best_split(X, y, idx, params)
    if found is None:
        return node
    _, f, thr = found
    mask = X[idx, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow(X, y, idx[mask], params)
    node.right = _grow(X, y, idx[~mask], params)
    return node


def fit_tree(X: np.ndarray, y: Sequence[int], params: TreeParams) -> Tree:
    """Grow a CART tree; stops on purity, size rules, or zero impurity gain."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if X.shape[0] == 0:
        raise EmptyTrainingSet("no training instances")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    root = _grow(X, y, np.arange(X.shape[0]), params)
    return Tree(root=root, n_features=X.shape[1], params=params)


def _fold_assignment(y: np.ndarray, folds: int, rng: np.random.Generator,
                     patient_ids: Sequence[str] | None = None) -> np.ndarray:
    """Stratified fold labels; patient-disjoint when patient_ids are given."""
    fold_of = np.full(y.shape[0], -1, dtype=int)
    if patient_ids is not None:
        pid_label: dict[str, int] = {}
        pid_rows: dict[str, list[int]] = {}
        for i, pid in enumerate(patient_ids):
            pid_rows.setdefault(pid, []).append(i)
            pid_label[pid] = int(y[i])
        for label in (0, 1):
            pids = sorted(p for p, l in pid_label.items() if l == label)
            if not pids:
                continue
            for pos, j in enumerate(rng.permutation(len(pids))):
                for row in pid_rows[pids[j]]:
                    fold_of[row] = pos % folds
    else:
        for label in (0, 1):
            rows = np.flatnonzero(y == label)
            for pos, j in enumerate(rng.permutation(rows.size)):
                fold_of[rows[j]] = pos % folds
    return fold_of


def grid_search_cv(X: np.ndarray, y: Sequence[int], grid: ParamGrid, seed: int,
                   patient_ids: Sequence[str] | None = None) -> TreeParams:
    """Pick the grid cell with the best mean validation accuracy over k folds.

    Ties keep the earliest cell in grid order (criterion, then leaf, then
    split, all ascending). Deterministic given the seed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] < grid.folds:
        raise TooFewInstances(f"{X.shape[0]} instances cannot fill {grid.folds} folds")
    rng = np.random.default_rng(seed)
    fold_of = _fold_assignment(y, grid.folds, rng, patient_ids)
    for k in range(grid.folds):
        if not (fold_of == k).any():
            raise TooFewInstances(f"fold {k} is empty")
    best_params: TreeParams | None = None
    best_score = -np.inf
    for params in grid.cells():
        accs = []
        for k in range(grid.folds):
            val = fold_of == k
            tree = fit_tree(X[~val], y[~val], params)
            preds = tree.predict_scores(X[val]) > 0.5
            accs.append(float(np.mean(preds == (y[val] == 1))))
        score = float(np.mean(accs))
        if score > best_score:
            best_score = score
            best_params = params
    assert best_params is not None
    return best_params
