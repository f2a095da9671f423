import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.errors import DataFormatError, DegenerateMatrixError, InvalidConfigurationError
from core.feature_scores import compute_distribution
from core.sampling import sample_feature_subset, spawn_rng
from core.tree import DecisionTree, rf_candidate_count, train_tree
from models.data import DataMatrix, FeatureDistribution, Scheme, SplitMode, TreeParams

logger = logging.getLogger(__name__)

MatrixLike = Union[DataMatrix, np.ndarray]


class EnsembleModel(BaseModel):
    """Ordered collection of trained trees plus training metadata."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    trees: List[DecisionTree] = Field(description="Trees in training order")
    scheme: Scheme
    k: Optional[int] = Field(default=None, description="Features per tree, None for the RF baseline")
    seed: int
    n_features: int
    classes: List[str] = Field(description="Decoding table for class codes")
    tree_params: TreeParams
    with_replacement: bool = False
    effective_rank: Optional[int] = None
    fallback: bool = Field(default=False, description="Uniform distribution substituted for a degenerate one")
    feature_scales: Optional[List[float]] = Field(default=None, description="Unit-variance divisors applied to inputs")
    tree_seconds: List[float] = Field(default_factory=list, description="Wall time spent growing each tree")
    scores_seconds: float = Field(default=0.0, description="Wall time spent computing the distribution")

    @property
    def t(self) -> int:
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def prefix(self, n_trees: int) -> "EnsembleModel":
        """Sub-ensemble made of the first ``n_trees`` trees."""
        if not 1 <= n_trees <= self.t:
            raise InvalidConfigurationError(f"Prefix length must be in [1, {self.t}], got {n_trees}")
        return self.model_copy(update={
            "trees": self.trees[:n_trees],
            "tree_seconds": self.tree_seconds[:n_trees],
        })


def score_features(
    matrix: DataMatrix,
    scheme: Scheme,
    max_rank: Optional[int] = None,
    rank_tol: Optional[float] = None,
) -> Optional[FeatureDistribution]:
    """Distribution for ``scheme`` (None for rf), uniform when the matrix is degenerate."""
    scheme = Scheme(scheme)
    if scheme == Scheme.RF:
        return None
    try:
        return compute_distribution(matrix, scheme, max_rank=max_rank, rank_tol=rank_tol)
    except DegenerateMatrixError as e:
        logger.warning(f"{scheme.value} scores unavailable ({e}); using the uniform distribution")
        return FeatureDistribution(
            probs=np.full(matrix.n_cols, 1.0 / matrix.n_cols),
            scheme=Scheme.UNIFORM,
            fallback=True,
        )


class GrownTree(NamedTuple):
    tree: DecisionTree
    seconds: float


class EnsembleBuilder:
    """Grows the trees of one ensemble.

    The feature distribution is computed once, on the training matrix, when
    the builder is created. Tree ``i`` depends only on the data, the
    parameters and ``spawn_rng(seed, i)``, so trees can be grown in any order
    and on any number of threads.
    """

    def __init__(
        self,
        matrix: DataMatrix,
        labels: Sequence[int],
        scheme: Scheme,
        k: Optional[int] = None,
        params: Optional[TreeParams] = None,
        seed: int = 0,
        classes: Optional[Sequence[str]] = None,
        with_replacement: bool = False,
        max_rank: Optional[int] = None,
        rank_tol: Optional[float] = None,
        distribution: Optional[FeatureDistribution] = None,
    ):
        self.logger = logging.getLogger(__name__)
        self.matrix = matrix
        self.labels = np.asarray(labels, dtype=np.int64)
        self.scheme = Scheme(scheme)
        self.seed = int(seed)
        self.with_replacement = with_replacement

        if self.labels.shape != (matrix.n_rows,):
            raise InvalidConfigurationError(
                f"Expected {matrix.n_rows} labels, got shape {self.labels.shape}"
            )
        if self.seed < 0:
            raise InvalidConfigurationError(f"seed must be non-negative, got {seed}")
        n_classes = int(self.labels.max()) + 1
        self.classes = list(classes) if classes is not None else [str(code) for code in range(n_classes)]
        if len(self.classes) < n_classes:
            raise InvalidConfigurationError("classes table is shorter than the label codes")

        params = params or TreeParams()
        if self.scheme == Scheme.RF:
            if k is not None:
                self.logger.warning(f"k={k} is ignored by the rf scheme")
            self.k = None
            self.params = params.model_copy(update={
                "split_mode": SplitMode.PER_NODE_UNIFORM,
                "candidates_per_node": params.candidates_per_node or rf_candidate_count(matrix.n_cols),
            })
        else:
            if k is None or not 1 <= k <= matrix.n_cols:
                raise InvalidConfigurationError(f"k must be in [1, {matrix.n_cols}], got {k}")
            self.k = int(k)
            self.params = params

        if distribution is not None and self.scheme != Scheme.RF:
            # precomputed on the same training matrix, e.g. shared by repetitions
            if distribution.n_features != matrix.n_cols:
                raise InvalidConfigurationError("distribution does not match the matrix width")
            self.distribution = distribution
            self.scores_seconds = 0.0
        else:
            start = time.perf_counter()
            self.distribution = score_features(matrix, self.scheme, max_rank, rank_tol)
            self.scores_seconds = time.perf_counter() - start

    def grow_tree(self, tree_index: int) -> GrownTree:
        rng = spawn_rng(self.seed, tree_index)
        start = time.perf_counter()
        if self.distribution is None:
            tree = train_tree(self.matrix, self.labels, self.params, rng, n_classes=len(self.classes))
        else:
            subset = sample_feature_subset(self.distribution, self.k, rng, self.with_replacement)
            tree = train_tree(
                self.matrix.restrict(subset),
                self.labels,
                self.params,
                rng,
                feature_subset=subset,
                n_classes=len(self.classes),
            )
        seconds = time.perf_counter() - start
        self.logger.debug(f"{self.scheme.value} tree {tree_index}: {tree.node_count} nodes in {seconds:.4f}s")
        return GrownTree(tree, seconds)

    def grow(self, n_trees: int, threads: int = 1, start: int = 0) -> List[GrownTree]:
        """Trees ``start .. start + n_trees - 1``, in index order."""
        indices = range(start, start + n_trees)
        if threads <= 1 or n_trees <= 1:
            return [self.grow_tree(index) for index in indices]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(self.grow_tree, indices))

    def assemble(self, grown: Sequence[GrownTree]) -> EnsembleModel:
        distribution = self.distribution
        return EnsembleModel(
            trees=[item.tree for item in grown],
            scheme=self.scheme,
            k=self.k,
            seed=self.seed,
            n_features=self.matrix.n_cols,
            classes=self.classes,
            tree_params=self.params,
            with_replacement=self.with_replacement,
            effective_rank=None if distribution is None else distribution.effective_rank,
            fallback=False if distribution is None else distribution.fallback,
            tree_seconds=[item.seconds for item in grown],
            scores_seconds=self.scores_seconds,
        )

    def build(self, n_trees: int, threads: int = 1) -> EnsembleModel:
        if n_trees < 1:
            raise InvalidConfigurationError(f"Tree count must be >= 1, got {n_trees}")
        model = self.assemble(self.grow(n_trees, threads))
        self.logger.info(
            f"Trained {model.t} {self.scheme.value} trees "
            f"({total_node_count(model)} nodes, {sum(model.tree_seconds):.3f}s)"
        )
        return model


def train_less(
    matrix: DataMatrix,
    labels: Sequence[int],
    t: int,
    k: int,
    scheme: Scheme = Scheme.LEVERAGE,
    params: Optional[TreeParams] = None,
    seed: int = 0,
    threads: int = 1,
    **options,
) -> EnsembleModel:
    """LESS ensemble: t trees, each trained on k features sampled from the scheme's distribution."""
    if Scheme(scheme) == Scheme.RF:
        raise InvalidConfigurationError("train_less needs a scoring scheme; use train_rf for rf")
    builder = EnsembleBuilder(matrix, labels, scheme, k=k, params=params, seed=seed, **options)
    return builder.build(t, threads)


def train_rf(
    matrix: DataMatrix,
    labels: Sequence[int],
    t: int,
    params: Optional[TreeParams] = None,
    seed: int = 0,
    threads: int = 1,
    **options,
) -> EnsembleModel:
    """Random forest baseline without bagging: ceil(sqrt(d)) uniform candidates per node."""
    builder = EnsembleBuilder(matrix, labels, Scheme.RF, params=params, seed=seed, **options)
    return builder.build(t, threads)


def _as_array(samples: MatrixLike, n_features: int) -> np.ndarray:
    values = samples.values if isinstance(samples, DataMatrix) else np.asarray(samples, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    if values.shape[1] != n_features:
        raise DataFormatError(f"Model expects {n_features} features, got {values.shape[1]}")
    return values


def tree_votes(model: EnsembleModel, samples: MatrixLike, n_trees: Optional[int] = None) -> np.ndarray:
    """Class code predicted by each of the first ``n_trees`` trees, shape (n_trees, n)."""
    values = _as_array(samples, model.n_features)
    trees = model.trees if n_trees is None else model.trees[:n_trees]
    return np.stack([tree.predict_many(values) for tree in trees])


def count_votes(votes: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-sample vote counts, shape (n, n_classes), from a (trees, n) vote array."""
    votes = np.atleast_2d(votes)
    counts = np.zeros((votes.shape[1], n_classes), dtype=np.int64)
    columns = np.arange(votes.shape[1])
    for row in votes:
        counts[columns, row] += 1
    return counts


def majority_vote(votes: Sequence[int], n_classes: Optional[int] = None) -> int:
    """Most frequent code; ties go to the smallest code."""
    votes = np.asarray(votes, dtype=np.int64)
    n_classes = int(votes.max()) + 1 if n_classes is None else n_classes
    return int(np.argmax(np.bincount(votes, minlength=n_classes)))


def predict_matrix(model: EnsembleModel, samples: MatrixLike, n_trees: Optional[int] = None) -> np.ndarray:
    counts = count_votes(tree_votes(model, samples, n_trees), model.n_classes)
    return np.argmax(counts, axis=1)


def predict_majority(model: EnsembleModel, sample: Sequence[float]) -> int:
    """Majority-vote class code for a single sample."""
    if model.t == 0:
        raise InvalidConfigurationError("Cannot predict with an empty ensemble")
    return int(predict_matrix(model, np.asarray(sample, dtype=np.float64)[None, :])[0])


def classification_error(model: EnsembleModel, samples: MatrixLike, labels: Sequence[int]) -> float:
    """Fraction of samples whose majority vote differs from the true label."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InvalidConfigurationError("Test set is empty")
    return float(np.mean(predict_matrix(model, samples) != labels))


def prefix_errors(model: EnsembleModel, samples: MatrixLike, labels: Sequence[int]) -> np.ndarray:
    """Test error of the first m trees, for m = 1..t, from one pass over the votes."""
    labels = np.asarray(labels, dtype=np.int64)
    votes = tree_votes(model, samples)
    counts = np.zeros((labels.shape[0], model.n_classes), dtype=np.int64)
    columns = np.arange(labels.shape[0])
    errors = np.empty(model.t)
    for index, row in enumerate(votes):
        counts[columns, row] += 1
        errors[index] = np.mean(np.argmax(counts, axis=1) != labels)
    return errors


def total_node_count(model: EnsembleModel) -> int:
    return sum(tree.node_count for tree in model.trees)


def feature_usage(model: EnsembleModel) -> np.ndarray:
    """Number of trees that split on each feature."""
    usage = np.zeros(model.n_features, dtype=np.int64)
    for tree in model.trees:
        usage[tree.referenced_features()] += 1
    return usage
