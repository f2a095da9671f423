from typing import List, Optional, Union

from pydantic import BaseModel, Field

from models.data import Scheme, TreeParams


class SerializedSplit(BaseModel):
    """Internal node: ``value <= threshold`` goes to ``left``."""
    feature: int = Field(ge=0)
    threshold: float
    left: int = Field(ge=0)
    right: int = Field(ge=0)


class SerializedLeaf(BaseModel):
    """Leaf node holding a class code."""
    label: int = Field(ge=0)


class SerializedTree(BaseModel):
    feature_subset: Optional[List[int]] = Field(description="Sampled features, null for RF trees")
    nodes: List[Union[SerializedSplit, SerializedLeaf]]


class SerializedModel(BaseModel):
    """On-disk form of an EnsembleModel (schema version 1)."""
    schema_version: int
    scheme: Scheme
    k: Optional[int] = None
    t: int = Field(ge=1)
    seed: int = Field(ge=0)
    n_features: int = Field(ge=1)
    classes: List[str]
    tree_params: TreeParams
    with_replacement: bool = False
    effective_rank: Optional[int] = None
    fallback: bool = False
    feature_scales: Optional[List[float]] = None
    tree_seconds: Optional[List[float]] = Field(default=None, description="Only written on request")
    trees: List[SerializedTree]
