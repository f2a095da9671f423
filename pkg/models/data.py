from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Scheme(str, Enum):
    """Feature selection scheme of an ensemble."""
    UNIFORM = "uniform"
    NORM = "norm"
    LEVERAGE = "leverage"
    RF = "rf"


SCORING_SCHEMES = (Scheme.UNIFORM, Scheme.NORM, Scheme.LEVERAGE)


class SplitMode(str, Enum):
    """How a tree picks candidate features at each node."""
    FIXED_SUBSET = "fixed_subset"
    PER_NODE_UNIFORM = "per_node_uniform"


class DataFormat(str, Enum):
    CSV = "csv"
    LIBSVM = "libsvm"


class DataMatrix(BaseModel):
    """Dense n x d real matrix: rows are samples, columns are features.

    The underlying array is copied on construction and marked read-only, so a
    matrix can be shared freely between threads.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(description="float64 array of shape (n_rows, n_cols)")

    @field_validator("values", mode="before")
    @classmethod
    def _validate_values(cls, value):
        array = np.array(value, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"DataMatrix must be two-dimensional, got {array.ndim} dimensions")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"DataMatrix needs at least one row and one column, got {array.shape}")
        finite = np.isfinite(array)
        if not finite.all():
            row, col = np.argwhere(~finite)[0]
            raise ValueError(f"Non-finite entry at row {row}, column {col}")
        array.setflags(write=False)
        return array

    @classmethod
    def from_array(cls, values) -> "DataMatrix":
        return cls(values=values)

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])

    def at(self, row: int, col: int) -> float:
        """Element access, defined only for in-range indices."""
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise IndexError(f"Index ({row}, {col}) outside a {self.n_rows}x{self.n_cols} matrix")
        return float(self.values[row, col])

    def restrict(self, columns: Sequence[int]) -> "DataMatrix":
        """Matrix restricted to the given feature columns, in the given order."""
        return DataMatrix(values=self.values[:, np.asarray(columns, dtype=np.int64)])

    def take_rows(self, rows: Sequence[int]) -> "DataMatrix":
        return DataMatrix(values=self.values[np.asarray(rows, dtype=np.int64), :])


class SvdFactors(BaseModel):
    """Top singular triplets of a matrix (right side only)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    singular_values: np.ndarray = Field(description="Non-increasing positive singular values")
    right_vectors: np.ndarray = Field(description="d x rank matrix whose columns are right singular vectors")

    @model_validator(mode="after")
    def _check_shapes(self) -> "SvdFactors":
        if self.singular_values.ndim != 1 or self.right_vectors.ndim != 2:
            raise ValueError("singular_values must be 1-D and right_vectors 2-D")
        if self.right_vectors.shape[1] != self.singular_values.shape[0]:
            raise ValueError("right_vectors must have one column per singular value")
        if np.any(self.singular_values <= 0):
            raise ValueError("singular values must be positive")
        if np.any(np.diff(self.singular_values) > 0):
            raise ValueError("singular values must be non-increasing")
        return self

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])


class FeatureDistribution(BaseModel):
    """Probability vector over the d features of a data matrix."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray = Field(description="Non-negative probabilities summing to one")
    scheme: Scheme = Field(description="Scheme that produced the distribution")
    effective_rank: Optional[int] = Field(default=None, description="Truncation rank used by leverage scores")
    fallback: bool = Field(default=False, description="True when a degenerate matrix forced the uniform fallback")

    @field_validator("probs", mode="before")
    @classmethod
    def _validate_probs(cls, value):
        probs = np.array(value, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("probs must be a non-empty vector")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probs must be finite and non-negative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probs must sum to 1, got {total!r}")
        probs.setflags(write=False)
        return probs

    @property
    def n_features(self) -> int:
        return int(self.probs.shape[0])


class LabeledDataset(BaseModel):
    """Feature matrix plus integer-coded labels and their decoding table."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: DataMatrix
    labels: Optional[np.ndarray] = Field(default=None, description="Class codes in 0..C-1, one per row")
    classes: List[str] = Field(default_factory=list, description="Decoding table: code -> original label")
    informative_columns: Optional[List[int]] = Field(
        default=None, description="Columns carrying the signal (planted datasets only)"
    )

    @field_validator("labels", mode="before")
    @classmethod
    def _coerce_labels(cls, value):
        if value is None:
            return None
        labels = np.array(value, dtype=np.int64)
        labels.setflags(write=False)
        return labels

    @model_validator(mode="after")
    def _check_labels(self) -> "LabeledDataset":
        if self.labels is None:
            return self
        if self.labels.shape != (self.matrix.n_rows,):
            raise ValueError(
                f"Expected {self.matrix.n_rows} labels, got shape {self.labels.shape}"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise ValueError("Label codes must index into the classes table")
        return self

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def decode(self, codes: Sequence[int]) -> List[str]:
        return [self.classes[int(code)] for code in codes]


class TreeParams(BaseModel):
    """Growth parameters of a single decision tree."""

    model_config = ConfigDict(frozen=True)

    min_samples_split: int = Field(default=2, ge=2, description="Nodes with fewer samples become leaves")
    max_depth: Optional[int] = Field(default=None, ge=1, description="Depth cap, None for unlimited")
    split_mode: SplitMode = Field(default=SplitMode.FIXED_SUBSET)
    candidates_per_node: Optional[int] = Field(
        default=None, ge=1, description="m for per-node uniform mode, defaults to ceil(sqrt(d))"
    )
