import logging

import numpy as np
import pytest

from core.ensemble import (
    EnsembleBuilder,
    classification_error,
    count_votes,
    feature_usage,
    majority_vote,
    predict_majority,
    predict_matrix,
    prefix_errors,
    score_features,
    total_node_count,
    train_less,
    train_rf,
)
from core.errors import DataFormatError, InvalidConfigurationError
from core.feature_scores import uniform_distribution
from core.tree import LEAF
from models.data import DataMatrix, LabeledDataset, Scheme, SplitMode
from services.dataset_service import DatasetService
from services.model_service import ModelService


def reachable_nodes(tree):
    """Count nodes by walking the tree from the root."""
    count, stack = 0, [0]
    while stack:
        node = stack.pop()
        count += 1
        if tree.feature[node] != LEAF:
            stack.extend([tree.left[node], tree.right[node]])
    return count


def gaussian_blobs(n, d, seed, separation=2.0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    values = rng.standard_normal((n, d)) + np.where(labels[:, None] == 1, separation, -separation)
    return DataMatrix(values=values), labels


class TestVoting:
    """Test cases for majority voting helpers."""

    def test_majority_vote(self):
        assert majority_vote([1, 1, 0]) == 1
        assert majority_vote([2, 0, 2, 0, 1]) == 0

    def test_majority_vote_tie_goes_to_smallest(self):
        assert majority_vote([1, 0]) == 0
        assert majority_vote([3, 1, 3, 1], n_classes=4) == 1

    def test_count_votes(self):
        votes = np.array([[0, 1, 2], [0, 2, 2]])
        counts = count_votes(votes, 3)
        np.testing.assert_array_equal(counts, [[2, 0, 0], [0, 1, 1], [0, 0, 2]])


class TestEnsembleBuilder:
    """Test cases for EnsembleBuilder, train_less and train_rf."""

    def setup_method(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((120, 12))
        self.labels = (values[:, 0] + 0.5 * values[:, 3] > 0).astype(int)
        self.matrix = DataMatrix(values=values)

    def test_less_trees_use_only_their_subset(self):
        model = train_less(self.matrix, self.labels, t=8, k=4, scheme=Scheme.LEVERAGE, seed=3)
        assert model.t == 8
        assert len(model.tree_seconds) == 8
        for tree in model.trees:
            assert tree.feature_subset.size == 4
            assert set(tree.referenced_features().tolist()) <= set(tree.feature_subset.tolist())

    def test_rf_uses_per_node_candidates(self):
        model = train_rf(self.matrix, self.labels, t=3, seed=1)
        assert model.k is None
        assert model.tree_params.split_mode == SplitMode.PER_NODE_UNIFORM
        assert model.tree_params.candidates_per_node == 4
        assert all(tree.feature_subset is None for tree in model.trees)

    def test_rf_ignores_k_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            builder = EnsembleBuilder(self.matrix, self.labels, Scheme.RF, k=5)
        assert builder.k is None
        assert "ignored" in caplog.text

    @pytest.mark.parametrize("k", [0, 13, None])
    def test_invalid_k(self, k):
        with pytest.raises(InvalidConfigurationError):
            EnsembleBuilder(self.matrix, self.labels, Scheme.NORM, k=k)

    def test_train_less_rejects_rf(self):
        with pytest.raises(InvalidConfigurationError):
            train_less(self.matrix, self.labels, t=2, k=3, scheme=Scheme.RF)

    def test_negative_seed(self):
        with pytest.raises(InvalidConfigurationError):
            EnsembleBuilder(self.matrix, self.labels, Scheme.UNIFORM, k=3, seed=-1)

    def test_zero_trees(self):
        builder = EnsembleBuilder(self.matrix, self.labels, Scheme.UNIFORM, k=3)
        with pytest.raises(InvalidConfigurationError):
            builder.build(0)

    @pytest.mark.parametrize("scheme", [Scheme.UNIFORM, Scheme.NORM, Scheme.LEVERAGE, Scheme.RF])
    def test_deterministic_across_thread_counts(self, scheme):
        """Same data, params and seed give identical models for 1 and 4 threads."""
        service = ModelService()
        k = None if scheme == Scheme.RF else 5
        dumps, predictions, nodes = [], [], []
        for threads in (1, 4, 1, 4):
            builder = EnsembleBuilder(self.matrix, self.labels, scheme, k=k, seed=42)
            model = builder.build(10, threads=threads)
            dumps.append(service.dumps(model))
            predictions.append(predict_matrix(model, self.matrix))
            nodes.append(total_node_count(model))
        assert len(set(dumps)) == 1
        assert len(set(nodes)) == 1
        for other in predictions[1:]:
            np.testing.assert_array_equal(other, predictions[0])

    def test_different_seeds_differ(self):
        first = train_less(self.matrix, self.labels, t=5, k=3, scheme=Scheme.UNIFORM, seed=1)
        second = train_less(self.matrix, self.labels, t=5, k=3, scheme=Scheme.UNIFORM, seed=2)
        assert ModelService().dumps(first) != ModelService().dumps(second)

    def test_grow_tree_is_order_independent(self):
        builder = EnsembleBuilder(self.matrix, self.labels, Scheme.NORM, k=4, seed=9)
        forward = builder.grow(6)
        backward = [builder.grow_tree(index) for index in reversed(range(6))][::-1]
        for a, b in zip(forward, backward):
            assert a.tree.to_dict() == b.tree.to_dict()

    def test_uniform_with_all_features_gives_identical_trees(self):
        model = train_less(self.matrix, self.labels, t=5, k=12, scheme=Scheme.UNIFORM, seed=0)
        first = model.trees[0].to_dict()
        assert all(tree.to_dict() == first for tree in model.trees)
        errors = prefix_errors(model, self.matrix, self.labels)
        assert np.all(errors == errors[0])

    def test_precomputed_distribution(self):
        dist = uniform_distribution(12)
        builder = EnsembleBuilder(self.matrix, self.labels, Scheme.UNIFORM, k=3, distribution=dist)
        assert builder.distribution is dist
        assert builder.scores_seconds == 0.0

    def test_distribution_width_mismatch(self):
        with pytest.raises(InvalidConfigurationError):
            EnsembleBuilder(self.matrix, self.labels, Scheme.UNIFORM, k=3, distribution=uniform_distribution(5))

    def test_degenerate_matrix_falls_back_to_uniform(self):
        matrix = DataMatrix(values=np.zeros((10, 4)))
        labels = np.array([0, 1] * 5)
        model = train_less(matrix, labels, t=2, k=2, scheme=Scheme.LEVERAGE)
        assert model.fallback is True
        assert all(tree.node_count == 1 for tree in model.trees)

    def test_score_features(self):
        assert score_features(self.matrix, Scheme.RF) is None
        dist = score_features(self.matrix, Scheme.LEVERAGE, max_rank=3)
        assert dist.effective_rank == 3


class TestPredictionAndErrors:
    """Test cases for prediction, errors and accounting."""

    def setup_method(self):
        rng = np.random.default_rng(1)
        values = rng.standard_normal((150, 8))
        self.labels = (values[:, 1] > 0).astype(int) + (values[:, 2] > 1).astype(int)
        self.matrix = DataMatrix(values=values)
        self.model = train_less(
            self.matrix, self.labels, t=9, k=3, scheme=Scheme.NORM, seed=5, classes=["a", "b", "c"]
        )

    def test_prefix_errors_match_prefix_models(self):
        errors = prefix_errors(self.model, self.matrix, self.labels)
        for m in (1, 4, 9):
            expected = classification_error(self.model.prefix(m), self.matrix, self.labels)
            assert errors[m - 1] == pytest.approx(expected)

    def test_predict_majority_matches_matrix(self):
        codes = predict_matrix(self.model, self.matrix)
        for row in range(5):
            assert predict_majority(self.model, self.matrix.values[row]) == codes[row]

    def test_predict_majority_votes(self):
        sample = self.matrix.values[0]
        votes = [tree.predict(sample) for tree in self.model.trees]
        assert predict_majority(self.model, sample) == majority_vote(votes, 3)

    def test_feature_mismatch(self):
        with pytest.raises(DataFormatError):
            predict_matrix(self.model, np.zeros((2, 7)))

    def test_empty_test_set(self):
        with pytest.raises(InvalidConfigurationError):
            classification_error(self.model, np.zeros((0, 8)), [])

    def test_empty_ensemble(self):
        empty = self.model.model_copy(update={"trees": [], "tree_seconds": []})
        with pytest.raises(InvalidConfigurationError):
            predict_majority(empty, self.matrix.values[0])

    def test_prefix_bounds(self):
        assert self.model.prefix(3).t == 3
        with pytest.raises(InvalidConfigurationError):
            self.model.prefix(0)
        with pytest.raises(InvalidConfigurationError):
            self.model.prefix(10)

    def test_feature_usage(self):
        usage = feature_usage(self.model)
        assert usage.shape == (8,)
        assert usage.max() <= self.model.t
        assert usage.sum() == sum(tree.referenced_features().size for tree in self.model.trees)

    def test_node_accounting_by_traversal(self):
        rng = np.random.default_rng(2)
        for index in range(100):
            values = rng.standard_normal((int(rng.integers(5, 40)), 4))
            labels = rng.integers(0, 3, size=values.shape[0])
            scheme = [Scheme.UNIFORM, Scheme.NORM, Scheme.LEVERAGE, Scheme.RF][index % 4]
            model = EnsembleBuilder(
                DataMatrix(values=values), labels, scheme,
                k=None if scheme == Scheme.RF else 2, seed=index,
            ).build(3)
            assert total_node_count(model) == sum(reachable_nodes(tree) for tree in model.trees)
            for tree in model.trees:
                assert tree.node_count == 2 * tree.n_internal + 1


class TestRandomForestBaseline:
    """Random forest sanity on well separated Gaussian blobs."""

    def test_blobs_error_below_five_percent(self):
        service = DatasetService()
        errors = []
        for seed in range(10):
            matrix, labels = gaussian_blobs(1000, 20, seed)
            dataset = LabeledDataset(matrix=matrix, labels=labels, classes=["0", "1"])
            train, test = service.train_test_split(dataset, 0.25, seed=seed)
            model = train_rf(train.matrix, train.labels, t=20, seed=seed)
            errors.append(classification_error(model, test.matrix, test.labels))
        assert np.mean(errors) < 0.05
