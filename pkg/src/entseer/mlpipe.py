"""Learners that operate on 2-D embedding coordinates.

A CART decision tree for partition labels, an L2-regularised logistic
regression for the NPT/PPT split, a k-nearest-neighbour purity estimator and
a few plain metrics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .manifold import knn_query


GAIN_TIE_TOL = 1e-12


class DegenerateDataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def accuracy(predictions, truths) -> float:
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths differ in length")
    if predictions.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == truths))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    correlation: float


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares line plus the Pearson correlation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 2:
        raise DegenerateDataError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx <= 0:
        raise DegenerateDataError("x has zero variance")
    if syy <= 0:
        raise DegenerateDataError("y has zero variance; correlation undefined")
    slope = (dx @ dy) / sxx
    return LinearFit(float(slope), float(y.mean() - slope * x.mean()), float((dx @ dy) / math.sqrt(sxx * syy)))


# ---------------------------------------------------------------------------
# Decision tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    label: str
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"label": self.label}
        return {"label": self.label, "feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "left" not in d:
            return cls(d["label"])
        return cls(d["label"], int(d["feature"]), float(d["threshold"]),
                   cls.from_dict(d["left"]), cls.from_dict(d["right"]))


@dataclass
class DecisionTreeModel:
    root: TreeNode
    classes: list[str]
    max_depth: int
    min_leaf: int

    def predict_one(self, point) -> str:
        node = self.root
        while not node.is_leaf:
            node = node.left if point[node.feature] <= node.threshold else node.right
        return node.label

    def predict(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([self.predict_one(p) for p in points], dtype=object).astype(str)

    def depth(self) -> int:
        def walk(n):
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(self.root)

    def n_leaves(self) -> int:
        def walk(n):
            return 1 if n.is_leaf else walk(n.left) + walk(n.right)
        return walk(self.root)

    def to_dict(self) -> dict:
        return {"kind": "decision_tree", "classes": self.classes, "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTreeModel":
        return cls(TreeNode.from_dict(d["root"]), list(d["classes"]), int(d["max_depth"]), int(d["min_leaf"]))


def _majority(y_idx: np.ndarray, n_classes: int) -> int:
    # argmax returns the first maximum, so ties go to the lowest class index
    return int(np.argmax(np.bincount(y_idx, minlength=n_classes)))


def _best_split(x: np.ndarray, y_idx: np.ndarray, n_classes: int, min_leaf: int):
    """Largest Gini decrease; ties keep the lower feature, then the lower threshold."""
    n = len(y_idx)
    counts = np.bincount(y_idx, minlength=n_classes).astype(float)
    parent = 1.0 - np.sum((counts / n) ** 2)
    best = (0.0, -1, 0.0)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y_idx[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        n_left = np.arange(1, n, dtype=float)
        n_right = n - n_left
        right = counts[None, :] - left
        gini_l = 1.0 - np.sum((left / n_left[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right / n_right[:, None]) ** 2, axis=1)
        gain = parent - (n_left * gini_l + n_right * gini_r) / n
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        # gains equal up to rounding count as ties: keep the lowest threshold
        i = int(np.argmax(gain >= gain.max() - GAIN_TIE_TOL))
        if gain[i] > best[0] + GAIN_TIE_TOL:
            best = (float(gain[i]), f, float(0.5 * (xs[i] + xs[i + 1])))
    return best


def train_tree(points, labels, max_depth: int = 12, min_leaf: int = 5) -> DecisionTreeModel:
    """Greedy CART growth on Gini impurity."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels).astype(str)
    if x.shape[0] != labels.shape[0] or x.shape[0] == 0:
        raise ValueError("points and labels must be non-empty and aligned")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    classes = sorted(set(labels.tolist()))
    y_idx = np.searchsorted(classes, labels)
    k = len(classes)

    def grow(rows, depth):
        node = TreeNode(classes[_majority(y_idx[rows], k)])
        if depth >= max_depth or len(rows) < 2 * min_leaf or np.all(y_idx[rows] == y_idx[rows[0]]):
            return node
        gain, f, thr = _best_split(x[rows], y_idx[rows], k, min_leaf)
        if f < 0:
            return node
        go_left = x[rows, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    return DecisionTreeModel(grow(np.arange(len(labels)), 0), classes, max_depth, min_leaf)


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(params: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float):
    """Mean log-loss plus (l2/2)|w|^2; ``params`` is (w..., bias) and the bias is not penalised."""
    w, b = params[:-1], params[-1]
    z = x @ w + b
    # log(1 + e^z) - y z, written stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = (_sigmoid(z) - y) / len(y)
    grad = np.concatenate([x.T @ r + l2 * w, [r.sum()]])
    return float(loss), grad


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    std: np.ndarray = field(default_factory=lambda: np.ones(2))
    l2: float = 1e-4
    epochs_run: int = 0
    grad_norm: float = math.nan

    def decision_function(self, points) -> np.ndarray:
        """Signed score; positive means PPT.  The boundary is its zero level set."""
        x = (np.atleast_2d(np.asarray(points, dtype=float)) - self.mean) / self.std
        return x @ self.weights + self.bias

    def predict_proba(self, points) -> np.ndarray:
        return _sigmoid(self.decision_function(points))

    def predict(self, points) -> np.ndarray:
        return self.decision_function(points) > 0

    def raw_boundary(self) -> tuple[np.ndarray, float]:
        """(w, c) with the boundary w . x + c = 0 in the original coordinates."""
        w = self.weights / self.std
        return w, float(self.bias - w @ self.mean)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "weights": self.weights.tolist(), "bias": self.bias,
                "mean": self.mean.tolist(), "std": self.std.tolist(), "l2": self.l2,
                "epochs_run": self.epochs_run, "grad_norm": self.grad_norm}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.array(d["weights"], float), float(d["bias"]), np.array(d["mean"], float),
                   np.array(d["std"], float), float(d["l2"]), int(d["epochs_run"]), float(d["grad_norm"]))


def train_logistic(points, is_ppt, l2: float = 1e-4, epochs: int = 2000, tol: float = 1e-6) -> LogisticModel:
    """Full-batch gradient descent with Armijo backtracking on standardized inputs."""
    x_raw = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(is_ppt, dtype=float)
    if x_raw.shape[0] != y.shape[0]:
        raise ValueError("points and labels differ in length")
    if y.size == 0 or y.min() == y.max():
        raise DegenerateDataError("logistic regression needs both classes present")
    mean = x_raw.mean(axis=0)
    std = x_raw.std(axis=0)
    std[std < 1e-12] = 1.0
    x = (x_raw - mean) / std
    params = np.zeros(x.shape[1] + 1)
    step = 1.0
    loss, grad = loss_and_grad(params, x, y, l2)
    epoch = 0
    for epoch in range(1, epochs + 1):
        gnorm2 = grad @ grad
        if math.sqrt(gnorm2) < tol:
            epoch -= 1
            break
        step = min(step * 2.0, 1e3)
        while True:
            trial = params - step * grad
            t_loss, t_grad = loss_and_grad(trial, x, y, l2)
            if t_loss <= loss - 0.5 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        params, loss, grad = trial, t_loss, t_grad
    if not np.all(np.isfinite(params)):
        raise FloatingPointError("logistic regression diverged")
    return LogisticModel(params[:-1].copy(), float(params[-1]), mean, std, l2, epoch, float(np.linalg.norm(grad)))


# ---------------------------------------------------------------------------
# Purity estimation
# ---------------------------------------------------------------------------


@dataclass
class PurityEstimator:
    coords: np.ndarray
    purities: np.ndarray
    k: int = 20

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        self.purities = np.asarray(self.purities, dtype=float)
        if self.coords.shape[0] != self.purities.shape[0]:
            raise ValueError("coordinates and purities differ in length")
        if not 1 <= self.k <= self.coords.shape[0]:
            raise ValueError(f"k={self.k} must lie in [1, {self.coords.shape[0]}]")

    def to_dict(self) -> dict:
        return {"kind": "purity_knn", "k": self.k, "coords": self.coords.tolist(), "purities": self.purities.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PurityEstimator":
        return cls(np.array(d["coords"], float), np.array(d["purities"], float), int(d["k"]))


def estimate_purity(est: PurityEstimator, points) -> np.ndarray | float:
    """Mean purity of the ``k`` training coordinates nearest to each point."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    idx, _ = knn_query(np.atleast_2d(pts), est.coords, est.k)
    out = est.purities[idx].mean(axis=1)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


_KINDS = {"decision_tree": DecisionTreeModel, "logistic": LogisticModel, "purity_knn": PurityEstimator}


def save_json_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)


def load_json_model(path):
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return _KINDS[kind].from_dict(d)


def write_predictions(path, ids, truths, predictions, header=("id", "true_label", "predicted_label")) -> None:
    """CSV of (id, truth, prediction); floats are written with repr precision."""
    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(ids, truths, predictions):
            w.writerow([fmt(v) for v in row])
