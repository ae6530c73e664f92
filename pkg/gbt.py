"""Gradient-boosted regression trees written from scratch.

Squared-error boosting in the second order (G, H) form: every round fits a
depth-limited tree to the gradients g = yhat - y (hessians h = 1) with exact
greedy split search, leaf values -G / (H + lambda) and gain

    1/2 [G_L^2 / (H_L + l) + G_R^2 / (H_R + l) - (G_L + G_R)^2 / (H_L + H_R + l)]

Trees are stored as flat node arrays so that the whole ensemble can be
evaluated at once, and so TreeSHAP can read the path of every leaf.
"""

import json
import logging
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Callable
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from errors import DataError, ValidationError
from eval_stats import rmse
from supervise import CvFolds, FeatureMatrix

logger = logging.getLogger(__name__)

MODEL_FORMAT = "gbt-model"
MODEL_VERSION = 1

# Rows evaluated per block in batch prediction, bounds the (rows x trees) work arrays
PREDICT_BLOCK = 4096


@dataclass(frozen=True)
class GbtHyperParams:
    n_trees: int = 600
    max_depth: int = 3
    learning_rate: float = 0.05
    row_subsample: float = 0.9
    col_subsample: float = 0.9
    l2_leaf: float = 1.0
    min_split_gain: float = 0.0
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValidationError(f"(E) n_trees must be >= 0, got {self.n_trees}")
        if self.max_depth < 0:
            raise ValidationError(f"(E) max_depth must be >= 0, got {self.max_depth}")
        if self.learning_rate < 0:
            raise ValidationError(f"(E) learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("row_subsample", "col_subsample"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValidationError(f"(E) {name} must be in (0, 1], got {value}")
        if self.l2_leaf < 0 or self.min_split_gain < 0:
            raise ValidationError("(E) l2_leaf and min_split_gain must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValidationError(
                f"(E) min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )


@dataclass(frozen=True)
class TreeNode:
    """One node record. Leaves have feature -1 and children -1.

    Internal nodes send x[feature] < threshold left and everything else right.
    `cover` is the summed hessian (sample count) that reached the node.
    """

    feature: int
    threshold: float
    left: int
    right: int
    value: float
    cover: float

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


class RegressionTree:
    """A binary regression tree held as flat node arrays, root at index 0."""

    def __init__(self, nodes: list[TreeNode]):
        if not nodes:
            raise ValidationError("(E) a tree needs at least one node")
        self.feature = np.array([node.feature for node in nodes], dtype=np.int64)
        self.threshold = np.array([node.threshold for node in nodes], dtype=np.float64)
        self.left = np.array([node.left for node in nodes], dtype=np.int64)
        self.right = np.array([node.right for node in nodes], dtype=np.int64)
        self.value = np.array([node.value for node in nodes], dtype=np.float64)
        self.cover = np.array([node.cover for node in nodes], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.feature)

    @property
    def nodes(self) -> list[TreeNode]:
        return [
            TreeNode(
                feature=int(self.feature[i]),
                threshold=float(self.threshold[i]),
                left=int(self.left[i]),
                right=int(self.right[i]),
                value=float(self.value[i]),
                cover=float(self.cover[i]),
            )
            for i in range(len(self))
        ]

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def leaf_index(self, rows: NDArray) -> NDArray:
        """Index of the leaf every row lands in."""
        rows = np.atleast_2d(rows)
        idx = np.zeros(rows.shape[0], dtype=np.int64)
        for _ in range(self.depth()):
            feature = self.feature[idx]
            internal = feature >= 0
            x = rows[np.arange(rows.shape[0]), np.maximum(feature, 0)]
            child = np.where(x < self.threshold[idx], self.left[idx], self.right[idx])
            idx = np.where(internal, child, idx)
        return idx

    def predict(self, rows: NDArray) -> NDArray:
        """Raw leaf value for every row (not scaled by the learning rate)."""
        return self.value[self.leaf_index(rows)]

    def leaf_boxes(self, n_features: int) -> tuple[NDArray, NDArray, NDArray]:
        """Per leaf, the half-open box lower <= x < upper its root path implies.

        Returns:
            tuple[NDArray, NDArray, NDArray]: leaf values (L,), lower bounds (L, p), upper bounds (L, p)
        """
        values, lowers, uppers = [], [], []
        stack = [(0, np.full(n_features, -np.inf), np.full(n_features, np.inf))]
        while stack:
            node, lower, upper = stack.pop()
            feature = self.feature[node]
            if feature < 0:
                values.append(self.value[node])
                lowers.append(lower)
                uppers.append(upper)
                continue
            threshold = self.threshold[node]
            left_upper = upper.copy()
            left_upper[feature] = min(upper[feature], threshold)
            right_lower = lower.copy()
            right_lower[feature] = max(lower[feature], threshold)
            stack.append((self.right[node], right_lower, upper))
            stack.append((self.left[node], lower, left_upper))
        return np.array(values), np.array(lowers), np.array(uppers)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Self:
        fields = ("feature", "threshold", "left", "right", "value", "cover")
        return cls([TreeNode(*record) for record in zip(*(data[f] for f in fields))])


class GbtModel:
    """A fitted ensemble: prediction = base_score + learning_rate * sum of tree outputs."""

    def __init__(
        self,
        base_score: float,
        trees: list[RegressionTree],
        learning_rate: float,
        columns: tuple[str, ...],
        hyper_params: GbtHyperParams | None = None,
        training_rmse: tuple[float, ...] = (),
    ):
        self.base_score = float(base_score)
        self.trees = list(trees)
        self.learning_rate = float(learning_rate)
        self.columns = tuple(columns)
        self.hyper_params = hyper_params
        self.training_rmse = tuple(training_rmse)

    @property
    def n_features(self) -> int:
        return len(self.columns)

    @cached_property
    def _packed(self) -> tuple[NDArray, ...]:
        """All trees padded into (n_trees, max_nodes) arrays for joint traversal."""
        width = max(len(tree) for tree in self.trees)
        count = len(self.trees)
        feature = np.full((count, width), -1, dtype=np.int64)
        threshold = np.zeros((count, width))
        left = np.zeros((count, width), dtype=np.int64)
        right = np.zeros((count, width), dtype=np.int64)
        value = np.zeros((count, width))
        for t, tree in enumerate(self.trees):
            n = len(tree)
            feature[t, :n] = tree.feature
            threshold[t, :n] = tree.threshold
            left[t, :n] = tree.left
            right[t, :n] = tree.right
            value[t, :n] = tree.value
        depth = max(tree.depth() for tree in self.trees)
        return feature, threshold, left, right, value, depth

    def _check_width(self, rows: NDArray):
        if rows.shape[1] != self.n_features:
            raise ValidationError(
                f"(E) rows have {rows.shape[1]} features, model expects {self.n_features}"
            )

    def predict_batch(self, rows: FeatureMatrix | ArrayLike) -> NDArray:
        """Predict every row. `predict` is this function applied to a single row."""
        if isinstance(rows, FeatureMatrix):
            rows = rows.rows
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        self._check_width(rows)
        if not self.trees:
            return np.full(rows.shape[0], self.base_score)

        feature, threshold, left, right, value, depth = self._packed
        tree_ids = np.arange(len(self.trees))[None, :]
        out = np.empty(rows.shape[0])

        for start in range(0, rows.shape[0], PREDICT_BLOCK):
            block = rows[start : start + PREDICT_BLOCK]
            row_ids = np.arange(block.shape[0])[:, None]
            idx = np.zeros((block.shape[0], len(self.trees)), dtype=np.int64)
            for _ in range(depth):
                f = feature[tree_ids, idx]
                x = block[row_ids, np.maximum(f, 0)]
                child = np.where(
                    x < threshold[tree_ids, idx], left[tree_ids, idx], right[tree_ids, idx]
                )
                idx = np.where(f >= 0, child, idx)
            leaves = value[tree_ids, idx]
            out[start : start + PREDICT_BLOCK] = (
                self.base_score + self.learning_rate * leaves.sum(axis=1)
            )

        return out

    def predict(self, row: ArrayLike) -> float:
        """Predict a single feature vector.

        Raises:
            ValidationError: If the row length does not match the model columns.
        """
        row = np.asarray(row, dtype=np.float64)
        if row.ndim != 1:
            raise ValidationError("(E) predict expects a single feature vector")
        return float(self.predict_batch(row[None, :])[0])

    def leaf_boxes(self) -> tuple[NDArray, NDArray, NDArray, NDArray]:
        """Leaf boxes of every tree, stacked.

        Returns:
            tuple: leaf values (L,), lower (L, p), upper (L, p), owning tree index (L,)
        """
        values, lowers, uppers, owners = [], [], [], []
        for t, tree in enumerate(self.trees):
            v, lo, hi = tree.leaf_boxes(self.n_features)
            values.append(v)
            lowers.append(lo)
            uppers.append(hi)
            owners.append(np.full(len(v), t))
        if not values:
            p = self.n_features
            return np.zeros(0), np.zeros((0, p)), np.zeros((0, p)), np.zeros(0, dtype=int)
        return (
            np.concatenate(values),
            np.concatenate(lowers),
            np.concatenate(uppers),
            np.concatenate(owners),
        )

    def to_json(self) -> str:
        """Serialize to a versioned JSON document. Floats round-trip exactly."""
        document = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "columns": list(self.columns),
            "hyper_params": asdict(self.hyper_params) if self.hyper_params else None,
            "training_rmse": list(self.training_rmse),
            "trees": [tree.to_dict() for tree in self.trees],
        }
        return json.dumps(document, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Self:
        """Load a model written by `to_json`.

        Raises:
            DataError: If the document is not a model of a supported version.
        """
        document = json.loads(text)
        if document.get("format") != MODEL_FORMAT or document.get("version") != MODEL_VERSION:
            raise DataError("(E) not a supported gradient-boosted model document")
        hyper_params = document.get("hyper_params")
        return cls(
            base_score=document["base_score"],
            trees=[RegressionTree.from_dict(tree) for tree in document["trees"]],
            learning_rate=document["learning_rate"],
            columns=tuple(document["columns"]),
            hyper_params=GbtHyperParams(**hyper_params) if hyper_params else None,
            training_rmse=tuple(document["training_rmse"]),
        )


class TreeBuilder:
    """Grows one tree on a (sub)sample with exact greedy split search."""

    def __init__(
        self,
        rows: NDArray,
        gradients: NDArray,
        hessians: NDArray,
        features: NDArray,
        hp: GbtHyperParams,
    ):
        self.rows = rows
        self.gradients = gradients
        self.hessians = hessians
        self.features = np.sort(features)
        self.hp = hp
        self.nodes: list[TreeNode | None] = []

    def build(self) -> RegressionTree:
        self.nodes = []
        self._grow(np.arange(len(self.gradients)), depth=0)
        return RegressionTree(self.nodes)

    def _leaf_value(self, G: float, H: float) -> float:
        denominator = H + self.hp.l2_leaf
        return -G / denominator if denominator > 0 else 0.0

    def _grow(self, idx: NDArray, depth: int) -> int:
        node_id = len(self.nodes)
        self.nodes.append(None)

        G = float(self.gradients[idx].sum())
        H = float(self.hessians[idx].sum())
        value = self._leaf_value(G, H)

        split = self._best_split(idx, G, H) if depth < self.hp.max_depth else None
        if split is None:
            self.nodes[node_id] = TreeNode(-1, 0.0, -1, -1, value, H)
            return node_id

        feature, threshold, left_idx, right_idx = split
        left = self._grow(left_idx, depth + 1)
        right = self._grow(right_idx, depth + 1)
        # Children covers add up exactly
        cover = self.nodes[left].cover + self.nodes[right].cover
        self.nodes[node_id] = TreeNode(feature, threshold, left, right, value, cover)
        return node_id

    def _best_split(self, idx: NDArray, G: float, H: float):
        m = len(idx)
        min_leaf = self.hp.min_samples_leaf
        if m < 2 * min_leaf:
            return None

        node_rows = self.rows[np.ix_(idx, self.features)]
        order = np.argsort(node_rows, axis=0, kind="stable")
        xs = np.take_along_axis(node_rows, order, axis=0)
        gs = self.gradients[idx][order]
        hs = self.hessians[idx][order]

        GL = np.cumsum(gs, axis=0)[:-1]
        HL = np.cumsum(hs, axis=0)[:-1]
        GR = G - GL
        HR = H - HL
        lam = self.hp.l2_leaf

        counts = np.arange(1, m)[:, None]
        valid = (xs[1:] > xs[:-1]) & (counts >= min_leaf) & (m - counts >= min_leaf)

        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
        gain = np.where(valid & np.isfinite(gain), gain, -np.inf)

        best = gain.max()
        if not best > self.hp.min_split_gain:
            return None

        # Tie-break: lowest feature index, then lowest threshold
        candidates = np.argwhere(gain == best)
        position, column = candidates[np.lexsort((candidates[:, 0], candidates[:, 1]))[0]]

        below, above = xs[position, column], xs[position + 1, column]
        threshold = (below + above) / 2
        if not below < threshold:
            threshold = above

        goes_left = node_rows[:, column] < threshold
        return int(self.features[column]), float(threshold), idx[goes_left], idx[~goes_left]


def fit_gbt(
    train: FeatureMatrix,
    hp: GbtHyperParams = None,
    eval_hook: Callable[[int, float], None] | None = None,
) -> GbtModel:
    """Fit a gradient-boosted tree ensemble on squared error.

    Each round draws a fresh row subsample (without replacement) and a column
    subsample, both from one stream seeded by `hp.seed`. A round whose tree
    cannot split adds nothing to the ensemble, so the tree count can end below
    `hp.n_trees`.

    Args:
        train (FeatureMatrix): Training rows
        hp (GbtHyperParams, optional): Hyperparameters. Defaults to GbtHyperParams().
        eval_hook (Callable[[int, float], None], optional): Called with (round, training RMSE) after every round.

    Raises:
        ValidationError: If the matrix is empty.

    Returns:
        GbtModel: The fitted ensemble, with the per-round training RMSE recorded
    """
    if hp is None:
        hp = GbtHyperParams()
    if len(train) == 0:
        raise ValidationError("(E) cannot fit on an empty feature matrix")

    X, y = train.rows, train.target
    n, p = X.shape
    base_score = float(np.mean(y))
    prediction = np.full(n, base_score)
    hessians = np.ones(n)
    rng = np.random.default_rng(hp.seed)

    n_rows = max(1, int(hp.row_subsample * n))
    n_cols = max(1, int(hp.col_subsample * p))

    if np.all(y == y[0]):
        logger.warning("Constant target, fitting a base-score only model")
        curve = (0.0,) * hp.n_trees
        return GbtModel(base_score, [], hp.learning_rate, train.columns, hp, curve)

    trees = []
    curve = []
    for round_no in range(hp.n_trees):
        sample = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else np.arange(n)
        columns = rng.choice(p, n_cols, replace=False) if n_cols < p else np.arange(p)

        gradients = prediction - y
        tree = TreeBuilder(X[sample], gradients[sample], hessians[sample], columns, hp).build()

        if len(tree) > 1:
            trees.append(tree)
            prediction = prediction + hp.learning_rate * tree.predict(X)

        curve.append(rmse(y, prediction))
        if eval_hook is not None:
            eval_hook(round_no, curve[-1])

    logger.debug(
        "Fitted %d trees, training RMSE %.4f -> %.4f",
        len(trees),
        rmse(y, np.full(n, base_score)),
        curve[-1] if curve else float("nan"),
    )
    return GbtModel(base_score, trees, hp.learning_rate, train.columns, hp, tuple(curve))


def training_curve(model: GbtModel) -> tuple[float, ...]:
    """Training RMSE recorded after every boosting round."""
    return model.training_rmse


def cross_validate(fm: FeatureMatrix, hp: GbtHyperParams, folds: CvFolds) -> list[float]:
    """Hold-out RMSE of a fresh fit on every expanding-window fold."""
    scores = []
    for train_range, test_range in folds:
        model = fit_gbt(fm.take(train_range), hp)
        test = fm.take(test_range)
        scores.append(rmse(test.target, model.predict_batch(test)))
    return scores
