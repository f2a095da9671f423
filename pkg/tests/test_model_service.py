import json

import numpy as np
import pytest

from core.ensemble import predict_matrix, train_less, train_rf
from core.errors import DataFormatError
from models.data import DataMatrix, Scheme
from services.model_service import ModelService


class TestModelService:
    """Test cases for ModelService."""

    def setup_method(self):
        rng = np.random.default_rng(3)
        values = rng.standard_normal((80, 6))
        self.labels = (values[:, 2] > 0).astype(int)
        self.matrix = DataMatrix(values=values)
        self.service = ModelService()
        self.model = train_less(
            self.matrix, self.labels, t=4, k=3, scheme=Scheme.LEVERAGE, seed=7, classes=["neg", "pos"]
        )

    def test_save_and_load(self, tmp_path):
        path = self.service.save(self.model, tmp_path / "models" / "less.json")
        loaded = self.service.load(path)
        assert loaded.scheme == Scheme.LEVERAGE
        assert loaded.k == 3
        assert loaded.t == 4
        assert loaded.classes == ["neg", "pos"]
        assert loaded.effective_rank == self.model.effective_rank
        np.testing.assert_array_equal(predict_matrix(loaded, self.matrix), predict_matrix(self.model, self.matrix))
        for original, restored in zip(self.model.trees, loaded.trees):
            np.testing.assert_array_equal(original.feature_subset, restored.feature_subset)

    def test_rf_model(self, tmp_path):
        model = train_rf(self.matrix, self.labels, t=2, seed=1)
        loaded = self.service.loads(self.service.dumps(model))
        assert loaded.k is None
        assert all(tree.feature_subset is None for tree in loaded.trees)
        assert loaded.tree_params == model.tree_params

    def test_same_seed_byte_identical(self, tmp_path):
        again = train_less(
            self.matrix, self.labels, t=4, k=3, scheme=Scheme.LEVERAGE, seed=7, classes=["neg", "pos"]
        )
        first = self.service.save(self.model, tmp_path / "a.json").read_bytes()
        second = self.service.save(again, tmp_path / "b.json").read_bytes()
        assert first == second

    def test_schema_layout(self):
        payload = json.loads(self.service.dumps(self.model))
        assert payload["schema_version"] == 1
        assert payload["tree_seconds"] is None
        assert len(payload["trees"]) == payload["t"] == 4
        node = payload["trees"][0]["nodes"][0]
        assert set(node) in ({"label"}, {"feature", "threshold", "left", "right"})

    def test_timings_on_request(self):
        payload = json.loads(self.service.dumps(self.model, include_timings=True))
        assert len(payload["tree_seconds"]) == 4

    def test_unsupported_schema_version(self):
        payload = json.loads(self.service.dumps(self.model))
        payload["schema_version"] = 99
        with pytest.raises(DataFormatError, match="schema version"):
            self.service.loads(json.dumps(payload))

    def test_tree_count_mismatch(self):
        payload = json.loads(self.service.dumps(self.model))
        payload["t"] = 5
        with pytest.raises(DataFormatError):
            self.service.loads(json.dumps(payload))

    @pytest.mark.parametrize("child", [10_000, 0])
    def test_child_index_out_of_range(self, child):
        payload = json.loads(self.service.dumps(self.model))
        nodes = payload["trees"][0]["nodes"]
        split = next(node for node in nodes if "left" in node)
        split["left"] = child
        with pytest.raises(DataFormatError, match="child"):
            self.service.loads(json.dumps(payload))

    def test_leaf_label_outside_classes(self):
        payload = json.loads(self.service.dumps(self.model))
        leaf = next(node for node in payload["trees"][1]["nodes"] if "label" in node)
        leaf["label"] = 2
        with pytest.raises(DataFormatError, match="leaf label"):
            self.service.loads(json.dumps(payload))

    def test_empty_tree(self):
        payload = json.loads(self.service.dumps(self.model))
        payload["trees"][0]["nodes"] = []
        with pytest.raises(DataFormatError):
            self.service.loads(json.dumps(payload))

    def test_malformed(self):
        with pytest.raises(DataFormatError):
            self.service.loads("{not json")
        with pytest.raises(DataFormatError):
            self.service.loads(json.dumps({"schema_version": 1, "scheme": "leverage"}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            self.service.load(tmp_path / "absent.json")
