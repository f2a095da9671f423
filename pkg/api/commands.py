import json
import logging
import sys
import time
from argparse import Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from config import settings
from core.ensemble import (
    EnsembleBuilder,
    classification_error,
    predict_matrix,
    total_node_count,
)
from core.errors import InvalidConfigurationError
from core.experiment_runner import ExperimentRunner
from core.feature_scores import coherence, compute_distribution, uniform_distribution
from models.data import DataFormat, LabeledDataset, Scheme, TreeParams
from models.experiment import ExperimentConfig
from services.dataset_service import DatasetService
from services.model_service import ModelService
from services.report_service import ReportService

logger = logging.getLogger(__name__)

DEFAULT_TREES = 100


# Response models
class ScoresResponse(BaseModel):
    scheme: Scheme
    n_features: int
    effective_rank: Optional[int] = None
    fallback: bool = False
    coherence: float
    probs: List[float]


class TrainSummary(BaseModel):
    scheme: Scheme
    k: Optional[int]
    trees: int
    nodes: int
    train_seconds: float
    scores_seconds: float
    training_error: float
    model_path: str

    def line(self) -> str:
        k = "-" if self.k is None else self.k
        return (
            f"trained {self.trees} {self.scheme.value} trees (k={k}): {self.nodes} nodes, "
            f"{self.train_seconds:.3f}s training, {self.scores_seconds:.3f}s scoring, "
            f"training error {self.training_error:.4f} -> {self.model_path}"
        )


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text if text.endswith("\n") else text + "\n")
        logger.info(f"Wrote {path}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_dataset(args: Namespace) -> LabeledDataset:
    if not args.data:
        raise InvalidConfigurationError("--data is required")
    service = DatasetService(delimiter=args.delimiter)
    return service.load(
        args.data,
        DataFormat(args.format),
        label_column=args.label_col,
        has_header=not args.no_header,
        n_features=args.n_features,
    )


def _tree_params(args: Namespace) -> TreeParams:
    min_split = 2 if args.min_split is None else args.min_split
    return TreeParams(min_samples_split=min_split, max_depth=args.max_depth)


def cmd_scores(args: Namespace) -> int:
    """Write the feature distribution of ``--scheme`` as JSON."""
    scheme = Scheme(args.scheme or Scheme.LEVERAGE)
    if scheme == Scheme.RF:
        raise InvalidConfigurationError("rf has no feature distribution; choose uniform, norm or leverage")

    if scheme == Scheme.UNIFORM and not args.data:
        if not args.n_features:
            raise InvalidConfigurationError("uniform scores need --data or --n-features")
        distribution = uniform_distribution(args.n_features)
    else:
        dataset = _load_dataset(args)
        distribution = compute_distribution(dataset.matrix, scheme, max_rank=args.max_rank)

    response = ScoresResponse(
        scheme=distribution.scheme,
        n_features=distribution.n_features,
        effective_rank=distribution.effective_rank,
        fallback=distribution.fallback,
        coherence=coherence(distribution),
        probs=distribution.probs.tolist(),
    )
    _emit(json.dumps(response.model_dump(mode="json"), indent=1), args.out)
    return 0


def cmd_train(args: Namespace) -> int:
    """Train a LESS or RF ensemble and save it to ``--model``."""
    if not args.model:
        raise InvalidConfigurationError("--model is required for train")
    trees = DEFAULT_TREES if args.trees is None else args.trees
    if trees < 1:
        raise InvalidConfigurationError(f"--trees must be >= 1, got {trees}")
    scheme = Scheme(args.scheme or Scheme.LEVERAGE)
    if scheme != Scheme.RF and args.k is None:
        raise InvalidConfigurationError(f"--k is required for the {scheme.value} scheme")
    if scheme != Scheme.RF and args.k < 1:
        raise InvalidConfigurationError(f"--k must be >= 1, got {args.k}")
    dataset = _load_dataset(args)
    if not dataset.has_labels:
        raise InvalidConfigurationError("Training data needs a label column")

    scales = None
    if args.scale:
        service = DatasetService(delimiter=args.delimiter)
        scales = service.fit_unit_variance(dataset)
        dataset = service.apply_scales(dataset, scales)

    builder = EnsembleBuilder(
        dataset.matrix,
        dataset.labels,
        scheme,
        k=args.k,
        params=_tree_params(args),
        seed=0 if args.seed is None else args.seed,
        classes=dataset.classes,
        with_replacement=args.with_replacement,
        max_rank=args.max_rank,
    )
    model = builder.build(trees, threads=args.threads or settings.threads)
    if scales is not None:
        model = model.model_copy(update={"feature_scales": scales.tolist()})

    path = ModelService().save(model, args.model)
    summary = TrainSummary(
        scheme=model.scheme,
        k=model.k,
        trees=model.t,
        nodes=total_node_count(model),
        train_seconds=sum(model.tree_seconds),
        scores_seconds=model.scores_seconds,
        training_error=classification_error(model, dataset.matrix, dataset.labels),
        model_path=str(path),
    )
    print(summary.line())
    return 0


def cmd_predict(args: Namespace) -> int:
    """Write one decoded label per input row; report the error when labels are present."""
    if not args.model:
        raise InvalidConfigurationError("--model is required for predict")
    model = ModelService().load(args.model)
    dataset = _load_dataset(args)
    values = dataset.matrix.values
    if model.feature_scales is not None and values.shape[1] == model.n_features:
        values = values / np.asarray(model.feature_scales)

    codes = predict_matrix(model, values)
    predicted = [model.classes[int(code)] for code in codes]
    _emit("\n".join(predicted), args.out)

    if dataset.has_labels:
        truth = dataset.decode(dataset.labels)
        error = float(np.mean([p != t for p, t in zip(predicted, truth)]))
        print(f"error: {error:.6f} ({len(truth)} rows)", file=sys.stderr)
    return 0


def bench_overrides(args: Namespace) -> Dict[str, Any]:
    """Flags that override values of the bench config file."""
    overrides: Dict[str, Any] = {
        "seed": args.seed,
        "threads": args.threads,
        "repetitions": args.repetitions,
        "trees": args.trees,
        "max_rank": args.max_rank,
        "min_samples_split": args.min_split,
        "max_depth": args.max_depth,
        "n_features": args.n_features,
        "output_dir": args.out,
    }
    # store_true flags only override when given
    if args.with_replacement:
        overrides["with_replacement"] = True
    if args.no_header:
        overrides["has_header"] = False
    if args.data:
        overrides.update(dataset=args.data, data_format=args.format, label_col=args.label_col)
    if args.k is not None:
        overrides["k_values"] = [args.k]
    if args.scheme:
        overrides["schemes"] = [args.scheme]
    return overrides


def cmd_bench(args: Namespace) -> int:
    """Run the configured experiments and write curves, summary and failures.

    Returns 3 when some runs failed; their partial results are still written.
    """
    overrides = bench_overrides(args)
    if args.config:
        config = ExperimentConfig.from_file(args.config, overrides)
    else:
        config = ExperimentConfig(**{key: value for key, value in overrides.items() if value is not None})

    start = time.perf_counter()
    runner = ExperimentRunner(config, DatasetService(delimiter=args.delimiter))
    summary = runner.run_all()
    reports = ReportService(config.output_dir)
    if runner.records:
        reports.write_curves(runner.records, append=config.append)
    reports.write_summary(summary)
    reports.write_failures(summary.failures)

    logger.info(f"Benchmark finished in {time.perf_counter() - start:.1f}s; artifacts in {config.output_dir}")
    for final in summary.final_errors:
        print(f"{final.scheme.value:>8} k={final.k:<4} error {final.mean_error:.4f} +- {final.std_error:.4f} after {final.trees} trees")
    for result in summary.nodes_to_epsilon:
        outcome = f"{result.nodes} nodes" if not result.exceeded_budget else f"exceeded ({result.reason})"
        print(f"{result.scheme.value:>8} k={result.k:<4} epsilon {result.epsilon}: {outcome}")
    return 3 if summary.failures else 0


COMMANDS = {
    "scores": cmd_scores,
    "train": cmd_train,
    "predict": cmd_predict,
    "bench": cmd_bench,
}
