"""CART-style classification trees with Gini splits.

Two growth modes: ``fixed_subset`` searches every column it is given at every
node (a LESS tree trained on its sampled features), ``per_node_uniform`` draws
m candidate columns uniformly at each node (the random forest baseline).

Labels are integer codes 0..C-1; the code order is the global class order
used for every tie (leaf majority, vote counting).
"""

import logging
import math
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from core.errors import DataFormatError, InvalidConfigurationError
from core.sampling import SeededRng
from models.data import DataMatrix, SplitMode, TreeParams

logger = logging.getLogger(__name__)

LEAF = -1
_TIE_EPS = 1e-12


class SplitRule(NamedTuple):
    """Samples with ``value <= threshold`` on ``feature_index`` go left."""
    feature_index: int
    threshold: float


def rf_candidate_count(n_features: int) -> int:
    """ceil(sqrt(d)) candidate features per node."""
    if n_features < 1:
        raise InvalidConfigurationError(f"Need at least one feature, got {n_features}")
    return math.isqrt(n_features - 1) + 1


def gini_impurity(labels: Sequence[int]) -> float:
    """1 - sum_c p_c^2 over the class frequencies of ``labels``."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidConfigurationError("Gini impurity of an empty label set is undefined")
    _, counts = np.unique(labels, return_counts=True)
    proportions = counts / labels.size
    return float(1.0 - np.sum(proportions * proportions))


def best_split(
    columns: np.ndarray,
    labels: np.ndarray,
    candidate_features: Sequence[int],
    n_classes: Optional[int] = None,
    allow_zero_gain: bool = False,
) -> Optional[tuple]:
    """Best (SplitRule, impurity decrease) over candidate columns of ``columns``.

    Every midpoint between consecutive distinct sorted values is scored by the
    weighted Gini decrease. Ties go to the lowest feature index, then the
    lowest threshold. Returns None for a pure node, when every candidate is
    constant, or when no split decreases impurity (unless ``allow_zero_gain``).
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_samples = labels.shape[0]
    candidates = np.unique(np.asarray(candidate_features, dtype=np.int64))
    if n_samples < 2 or candidates.size == 0:
        return None
    if n_classes is None:
        n_classes = int(labels.max()) + 1

    parent_counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    parent_gini = 1.0 - np.sum((parent_counts / n_samples) ** 2)
    if parent_gini <= _TIE_EPS:
        return None

    values = np.asarray(columns, dtype=np.float64)
    one_hot = np.eye(n_classes)[labels]
    n_left = np.arange(1, n_samples, dtype=np.float64)[:, None]
    n_right = n_samples - n_left

    # one column at a time keeps the class-count work at n x C
    decrease = np.empty((candidates.size, n_samples - 1))
    for position, feature in enumerate(candidates):
        column = values[:, feature]
        order = np.argsort(column, kind="stable")
        sorted_column = column[order]
        # left_counts[i, c]: class-c count among the i+1 smallest values
        left_counts = np.cumsum(one_hot[order], axis=0)[:-1]
        right_counts = parent_counts - left_counts
        left_gini = 1.0 - np.sum(left_counts * left_counts, axis=1, keepdims=True) / (n_left * n_left)
        right_gini = 1.0 - np.sum(right_counts * right_counts, axis=1, keepdims=True) / (n_right * n_right)
        gain = parent_gini - (n_left * left_gini + n_right * right_gini)[:, 0] / n_samples
        decrease[position] = np.where(sorted_column[1:] > sorted_column[:-1], gain, -np.inf)

    top = decrease.max()
    if not np.isfinite(top) or (top <= _TIE_EPS and not allow_zero_gain):
        return None

    # feature-major scan: first hit is the lowest feature, then lowest threshold
    hits = np.argwhere(decrease >= top - _TIE_EPS)
    feature_pos, row = int(hits[0][0]), int(hits[0][1])
    sorted_values = np.sort(values[:, candidates[feature_pos]], kind="stable")
    low = sorted_values[row]
    high = sorted_values[row + 1]
    threshold = (low + high) / 2.0
    if not low <= threshold < high:
        threshold = low
    return SplitRule(int(candidates[feature_pos]), float(threshold)), float(decrease[feature_pos, row])


class DecisionTree:
    """Binary tree stored as parallel node arrays.

    Node 0 is the root. Internal nodes have ``feature >= 0`` and children
    ``left``/``right``; leaves have ``feature == -1`` and a class ``label``.
    Split features are indices into the full feature space.
    """

    def __init__(
        self,
        feature: Sequence[int],
        threshold: Sequence[float],
        left: Sequence[int],
        right: Sequence[int],
        label: Sequence[int],
        feature_subset: Optional[Sequence[int]] = None,
    ):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.label = np.asarray(label, dtype=np.int64)
        self.feature_subset = None if feature_subset is None else np.asarray(feature_subset, dtype=np.int64)
        for array in (self.feature, self.threshold, self.left, self.right, self.label):
            array.setflags(write=False)

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_internal(self) -> int:
        return int(np.count_nonzero(self.feature != LEAF))

    @property
    def n_leaves(self) -> int:
        return self.node_count - self.n_internal

    @property
    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for node in range(self.node_count):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def referenced_features(self) -> np.ndarray:
        """Sorted features used by at least one split."""
        return np.unique(self.feature[self.feature != LEAF])

    def _check_width(self, n_values: int) -> None:
        used = self.referenced_features()
        if used.size and used[-1] >= n_values:
            raise DataFormatError(
                f"Sample has {n_values} features but the tree splits on feature {int(used[-1])}"
            )

    def predict(self, sample: Sequence[float]) -> int:
        """Class code of the leaf reached by ``sample``."""
        sample = np.asarray(sample, dtype=np.float64)
        self._check_width(sample.shape[0])
        node = 0
        while self.feature[node] != LEAF:
            if sample[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return int(self.label[node])

    def predict_many(self, samples: np.ndarray) -> np.ndarray:
        """Vectorised ``predict`` over the rows of ``samples``."""
        samples = np.asarray(samples, dtype=np.float64)
        self._check_width(samples.shape[1])
        rows = np.arange(samples.shape[0])
        nodes = np.zeros(samples.shape[0], dtype=np.int64)
        active = self.feature[nodes] != LEAF
        while active.any():
            current = nodes[active]
            go_left = samples[rows[active], self.feature[current]] <= self.threshold[current]
            nodes[active] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[nodes] != LEAF
        return self.label[nodes].copy()

    def to_dict(self) -> Dict[str, Any]:
        nodes: List[Dict[str, Any]] = []
        for node in range(self.node_count):
            if self.feature[node] == LEAF:
                nodes.append({"label": int(self.label[node])})
            else:
                nodes.append({
                    "feature": int(self.feature[node]),
                    "threshold": float(self.threshold[node]),
                    "left": int(self.left[node]),
                    "right": int(self.right[node]),
                })
        subset = None if self.feature_subset is None else [int(j) for j in self.feature_subset]
        return {"feature_subset": subset, "nodes": nodes}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "DecisionTree":
        feature, threshold, left, right, label = [], [], [], [], []
        n_nodes = len(payload["nodes"])
        if n_nodes == 0:
            raise DataFormatError("Tree has no nodes")
        for index, node in enumerate(payload["nodes"]):
            if "label" not in node:
                # children come after their parent, so descent always ends at a leaf
                for child in (node["left"], node["right"]):
                    if not index < child < n_nodes:
                        raise DataFormatError(
                            f"Node {index} points to child {child}; expected an index in ({index}, {n_nodes})"
                        )
            if "label" in node:
                feature.append(LEAF)
                threshold.append(0.0)
                left.append(LEAF)
                right.append(LEAF)
                label.append(node["label"])
            else:
                feature.append(node["feature"])
                threshold.append(node["threshold"])
                left.append(node["left"])
                right.append(node["right"])
                label.append(LEAF)
        return cls(feature, threshold, left, right, label, payload.get("feature_subset"))


def _majority(labels: np.ndarray, n_classes: int) -> int:
    # argmax returns the first maximum: ties go to the smallest code
    return int(np.argmax(np.bincount(labels, minlength=n_classes)))


def train_tree(
    matrix: DataMatrix,
    labels: Sequence[int],
    params: Optional[TreeParams] = None,
    rng: Optional[SeededRng] = None,
    feature_subset: Optional[Sequence[int]] = None,
    n_classes: Optional[int] = None,
    observer: Optional[Callable[[np.ndarray], None]] = None,
) -> DecisionTree:
    """Grow a tree on ``matrix`` (already restricted to the tree's features).

    ``feature_subset`` maps the columns of ``matrix`` back to global feature
    indices; split rules are stored in the global space. Growth stops at
    pure nodes, below ``min_samples_split``, at ``max_depth``, or when every
    candidate column is constant on the node. ``observer`` sees each node's
    candidate set.
    """
    params = params or TreeParams()
    values = matrix.values
    labels = np.asarray(labels, dtype=np.int64)
    n_samples, n_features = values.shape
    if n_samples == 0 or labels.shape[0] != n_samples:
        raise InvalidConfigurationError(
            f"Need one label per sample, got {labels.shape[0]} labels for {n_samples} samples"
        )
    if feature_subset is not None and len(feature_subset) != n_features:
        raise InvalidConfigurationError("feature_subset must name one global index per column")
    if n_classes is None:
        n_classes = int(labels.max()) + 1

    per_node = params.split_mode == SplitMode.PER_NODE_UNIFORM
    if per_node:
        if rng is None:
            raise InvalidConfigurationError("per_node_uniform mode needs a seeded generator")
        m = params.candidates_per_node or rf_candidate_count(n_features)
        m = min(m, n_features)
    all_features = np.arange(n_features)
    global_index = all_features if feature_subset is None else np.asarray(feature_subset, dtype=np.int64)

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    label: List[int] = []

    def new_node() -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        label.append(LEAF)
        return len(feature) - 1

    # depth-first; children pushed right then left so the left subtree is numbered first
    stack = [(new_node(), np.arange(n_samples), 0)]
    while stack:
        node, rows, depth = stack.pop()
        node_labels = labels[rows]
        label[node] = _majority(node_labels, n_classes)

        if rows.size < params.min_samples_split:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if np.all(node_labels == node_labels[0]):
            continue

        if per_node:
            candidates = np.sort(rng.choice(n_features, size=m, replace=False))
        else:
            candidates = all_features
        if observer is not None:
            observer(global_index[candidates])

        # zero-gain splits still separate impure nodes such as XOR patterns
        found = best_split(values[rows], node_labels, candidates, n_classes, allow_zero_gain=True)
        if found is None:
            continue
        rule, _ = found
        goes_left = values[rows, rule.feature_index] <= rule.threshold

        feature[node] = int(global_index[rule.feature_index])
        threshold[node] = rule.threshold
        label[node] = LEAF
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], rows[~goes_left], depth + 1))
        stack.append((left[node], rows[goes_left], depth + 1))

    tree = DecisionTree(feature, threshold, left, right, label, feature_subset)
    logger.debug(f"train_tree: {tree.node_count} nodes, depth {tree.depth}")
    return tree


def predict(tree: DecisionTree, sample: Sequence[float]) -> int:
    """Module-level alias of ``DecisionTree.predict``."""
    return tree.predict(sample)
