import json
import logging
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from config import settings
from core.ensemble import EnsembleModel
from core.errors import DataFormatError
from core.tree import LEAF, DecisionTree
from models.persistence import SerializedModel, SerializedTree

PathLike = Union[str, Path]


class ModelService:
    """Service for saving and loading trained ensembles as JSON."""

    def __init__(self):
        self.schema_version = settings.model_schema_version
        self.logger = logging.getLogger(__name__)

    def to_serialized(self, model: EnsembleModel, include_timings: bool = False) -> SerializedModel:
        return SerializedModel(
            schema_version=self.schema_version,
            scheme=model.scheme,
            k=model.k,
            t=model.t,
            seed=model.seed,
            n_features=model.n_features,
            classes=model.classes,
            tree_params=model.tree_params,
            with_replacement=model.with_replacement,
            effective_rank=model.effective_rank,
            fallback=model.fallback,
            feature_scales=model.feature_scales,
            tree_seconds=model.tree_seconds if include_timings else None,
            trees=[SerializedTree(**tree.to_dict()) for tree in model.trees],
        )

    def dumps(self, model: EnsembleModel, include_timings: bool = False) -> str:
        """JSON text; without timings it is identical for identical training runs."""
        payload = self.to_serialized(model, include_timings).model_dump(mode="json", exclude_none=False)
        return json.dumps(payload, indent=1)

    def save(self, model: EnsembleModel, path: PathLike, include_timings: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(model, include_timings))
        self.logger.info(f"Saved {model.scheme.value} model with {model.t} trees to {path}")
        return path

    def loads(self, text: str) -> EnsembleModel:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"Model file is not valid JSON: {e}") from e
        version = raw.get("schema_version") if isinstance(raw, dict) else None
        if version != self.schema_version:
            raise DataFormatError(f"Unsupported model schema version {version!r}")
        try:
            stored = SerializedModel(**raw)
        except ValidationError as e:
            raise DataFormatError(f"Malformed model file: {e}") from e
        if len(stored.trees) != stored.t:
            raise DataFormatError(f"Model declares {stored.t} trees but stores {len(stored.trees)}")

        trees = [DecisionTree.from_dict(tree.model_dump()) for tree in stored.trees]
        for index, tree in enumerate(trees):
            leaf_labels = tree.label[tree.feature == LEAF]
            if leaf_labels.size and leaf_labels.max() >= len(stored.classes):
                raise DataFormatError(f"Tree {index} has a leaf label outside the {len(stored.classes)} stored classes")
        return EnsembleModel(
            trees=trees,
            scheme=stored.scheme,
            k=stored.k,
            seed=stored.seed,
            n_features=stored.n_features,
            classes=stored.classes,
            tree_params=stored.tree_params,
            with_replacement=stored.with_replacement,
            effective_rank=stored.effective_rank,
            fallback=stored.fallback,
            feature_scales=stored.feature_scales,
            tree_seconds=stored.tree_seconds or [],
        )

    def load(self, path: PathLike) -> EnsembleModel:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Model file {path} not found")
        model = self.loads(path.read_text())
        self.logger.info(f"Loaded {model.scheme.value} model with {model.t} trees from {path}")
        return model
