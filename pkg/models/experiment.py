from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import settings
from models.data import DataFormat, Scheme


class Experiment(str, Enum):
    """Measurement families of the benchmark harness."""
    ERROR_VS_TIME = "error_vs_time"
    ERROR_VS_TREES = "error_vs_trees"
    NODES_TO_EPSILON = "nodes_to_epsilon"


_LIST_FIELDS = ("schemes", "k_values", "experiments")
_OPTIONAL_FIELDS = ("max_train_samples", "max_depth", "planted_amplification", "node_budget", "n_features")


class ExperimentConfig(BaseModel):
    """One benchmark manifest. Loaded from a flat ``key=value`` file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # Data source: "planted" or a path
    dataset: str = Field(default="planted", description="'planted' or a CSV/LIBSVM path")
    data_format: DataFormat = DataFormat.CSV
    label_col: str = Field(default="-1", description="Label column position or header name")
    has_header: bool = True
    n_features: Optional[int] = Field(default=None, ge=1, description="LIBSVM feature count; inferred when unset")
    planted_n: int = Field(default=2000, ge=2)
    planted_d: int = Field(default=500, ge=1)
    planted_informative: int = Field(default=20, ge=1)
    planted_classes: int = Field(default=2, ge=2)
    planted_noise: float = Field(default=0.5, ge=0)
    planted_amplification: Optional[float] = Field(default=None, gt=0)
    test_fraction: float = Field(default=settings.test_fraction, gt=0, lt=1)
    max_train_samples: Optional[int] = Field(default=None, ge=1)
    scale: bool = False

    # What to compare
    schemes: List[Scheme] = Field(default_factory=lambda: list(Scheme))
    k_values: List[int] = Field(default_factory=list, description="Empty means {ceil(sqrt d), 2 ceil(sqrt d)}")
    trees: int = Field(default=100, ge=1, description="t, the maximum number of trees")
    repetitions: int = Field(default=settings.repetitions, ge=1)
    experiments: List[Experiment] = Field(default_factory=lambda: list(Experiment))
    epsilon_target: float = Field(default=0.25, gt=0, le=1)
    time_budget_secs: float = Field(default=settings.time_budget_secs, ge=0)
    node_budget: Optional[int] = Field(default=None, ge=1)

    # Model parameters
    max_rank: int = Field(default=settings.max_rank, ge=1)
    min_samples_split: int = Field(default=2, ge=2)
    max_depth: Optional[int] = Field(default=None, ge=1)
    with_replacement: bool = False

    # Execution and output
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=settings.threads, ge=1)
    include_scores_time: bool = False
    output_dir: str = settings.output_dir
    append: bool = False

    @field_validator(*_LIST_FIELDS, mode="before")
    @classmethod
    def _split_lists(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator(*_OPTIONAL_FIELDS, mode="before")
    @classmethod
    def _blank_is_none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
            return None
        return value

    @classmethod
    def from_file(cls, path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """Read a ``key=value`` manifest; non-None ``overrides`` win over file values."""
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file {path} not found")
        values: Dict[str, Any] = {
            key.strip().lower(): value for key, value in dotenv_values(path).items() if value is not None
        }
        values.update({key: value for key, value in (overrides or {}).items() if value is not None})
        return cls(**values)


class ExperimentRecord(BaseModel):
    """Metrics after ``tree_index`` trees of one repetition."""
    scheme: Scheme
    k: int = Field(description="Features per tree; per-node candidates for rf")
    rep: int = Field(ge=0)
    tree_index: int = Field(ge=1)
    cum_time_s: float = Field(ge=0, description="Summed per-tree training time")
    test_error: float = Field(ge=0, le=1)
    cum_nodes: int = Field(ge=0)
    seed: int = Field(ge=0)


class CurvePoint(BaseModel):
    """Mean curve point over repetitions."""
    scheme: Scheme
    k: int
    tree_index: int
    x: float = Field(description="Mean cumulative time or the tree count, depending on the axis")
    mean_error: float
    std_error: float
    mean_cum_time_s: float
    mean_cum_nodes: float
    n_reps: int


class FinalError(BaseModel):
    scheme: Scheme
    k: int
    trees: int
    mean_error: float
    std_error: float
    mean_accuracy: float


class NodeBudgetError(BaseModel):
    """Mean error of the longest prefix whose mean node count fits the budget."""
    scheme: Scheme
    k: int
    node_budget: int
    trees: Optional[int] = None
    mean_error: Optional[float] = None


class NodesToEpsilonResult(BaseModel):
    scheme: Scheme
    k: int
    epsilon: float
    nodes: Optional[int] = Field(default=None, description="Mean total nodes when the target was met")
    trees: Optional[int] = None
    mean_error: Optional[float] = None
    elapsed_s: float = 0.0
    exceeded_budget: bool = False
    reason: Optional[str] = Field(default=None, description="'time_budget' or 'tree_limit' when exceeded")


class RunFailure(BaseModel):
    experiment: str
    scheme: Optional[Scheme] = None
    k: Optional[int] = None
    error: str


class BenchSummary(BaseModel):
    schema_version: int
    config: ExperimentConfig
    n_train: int
    n_test: int
    n_features: int
    k_values: List[int]
    scores_seconds: Dict[str, float] = Field(default_factory=dict)
    error_vs_time: List[CurvePoint] = Field(default_factory=list)
    error_vs_trees: List[CurvePoint] = Field(default_factory=list)
    final_errors: List[FinalError] = Field(default_factory=list)
    nodes_to_epsilon: List[NodesToEpsilonResult] = Field(default_factory=list)
    node_budget_errors: List[NodeBudgetError] = Field(default_factory=list)
    failures: List[RunFailure] = Field(default_factory=list)
