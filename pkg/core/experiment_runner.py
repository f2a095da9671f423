import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from core.ensemble import EnsembleBuilder, prefix_errors, score_features
from core.errors import DataFormatError, InvalidConfigurationError, LessError
from core.sampling import spawn_seed
from core.tree import rf_candidate_count
from models.data import FeatureDistribution, LabeledDataset, Scheme, TreeParams
from models.experiment import (
    BenchSummary,
    CurvePoint,
    Experiment,
    ExperimentConfig,
    ExperimentRecord,
    FinalError,
    NodeBudgetError,
    NodesToEpsilonResult,
    RunFailure,
)
from services.dataset_service import DatasetService

# stream tags for seeds derived from the master seed
_DATA_STREAM = 0
_REP_STREAM = 1

RunKey = Tuple[Scheme, int]


def default_k_values(n_features: int) -> List[int]:
    """{ceil(sqrt d), 2 ceil(sqrt d)} clipped to d."""
    base = math.isqrt(n_features - 1) + 1
    return sorted({min(base, n_features), min(2 * base, n_features)})


class ExperimentRunner:
    """Runs the benchmark families of one ExperimentConfig.

    Every repetition trains its ensemble with a seed derived from the master
    seed and the repetition id, so records do not depend on how repetitions
    are scheduled. Times are sums of measured per-tree durations.
    """

    def __init__(self, config: ExperimentConfig, dataset_service: Optional[DatasetService] = None):
        self.config = config
        self.dataset_service = dataset_service or DatasetService()
        self.logger = logging.getLogger(__name__)
        self.failures: List[RunFailure] = []
        self.scores_seconds: Dict[str, float] = {}
        self._data: Optional[Tuple[LabeledDataset, LabeledDataset]] = None
        self._records: Optional[List[ExperimentRecord]] = None
        self._distributions: Dict[Scheme, Optional[FeatureDistribution]] = {}

    # ------------------------------------------------------------------ data

    def prepare_data(self) -> Tuple[LabeledDataset, LabeledDataset]:
        """Load or generate the dataset and split it (cached)."""
        if self._data is not None:
            return self._data
        cfg = self.config
        if cfg.dataset == "planted":
            dataset = self.dataset_service.make_planted_dataset(
                n=cfg.planted_n,
                d=cfg.planted_d,
                n_informative=cfg.planted_informative,
                class_count=cfg.planted_classes,
                noise_scale=cfg.planted_noise,
                seed=spawn_seed(cfg.seed, _DATA_STREAM),
                amplification=cfg.planted_amplification,
            )
        else:
            dataset = self.dataset_service.load(
                cfg.dataset,
                cfg.data_format,
                label_column=cfg.label_col,
                has_header=cfg.has_header,
                n_features=cfg.n_features,
            )
        if not dataset.has_labels or dataset.n_classes < 2:
            raise DataFormatError("Benchmark data needs labels with at least two classes")

        train, test = self.dataset_service.train_test_split(dataset, cfg.test_fraction, seed=cfg.seed)
        train = self.dataset_service.subsample(train, cfg.max_train_samples, seed=cfg.seed)
        if cfg.scale:
            scales = self.dataset_service.fit_unit_variance(train)
            train = self.dataset_service.apply_scales(train, scales)
            test = self.dataset_service.apply_scales(test, scales)
        self.logger.info(
            f"Benchmark data: {train.matrix.n_rows} train / {test.matrix.n_rows} test rows "
            f"(test fraction {cfg.test_fraction}), {train.matrix.n_cols} features"
        )
        self._data = (train, test)
        return self._data

    def k_values(self) -> List[int]:
        train, _ = self.prepare_data()
        n_features = train.matrix.n_cols
        values = list(self.config.k_values) or default_k_values(n_features)
        for k in values:
            if not 1 <= k <= n_features:
                raise InvalidConfigurationError(f"k={k} outside [1, {n_features}]")
        return values

    def runs(self) -> List[RunKey]:
        """(scheme, k) pairs to evaluate; rf reports its per-node candidate count as k."""
        train, _ = self.prepare_data()
        pairs: List[RunKey] = []
        for scheme in self.config.schemes:
            if scheme == Scheme.RF:
                pairs.append((scheme, rf_candidate_count(train.matrix.n_cols)))
            else:
                pairs.extend((scheme, k) for k in self.k_values())
        return pairs

    def rep_seed(self, rep: int) -> int:
        return spawn_seed(self.config.seed, _REP_STREAM, rep)

    def _distribution(self, scheme: Scheme) -> Optional[FeatureDistribution]:
        if scheme not in self._distributions:
            train, _ = self.prepare_data()
            start = time.perf_counter()
            self._distributions[scheme] = score_features(train.matrix, scheme, max_rank=self.config.max_rank)
            self.scores_seconds[scheme.value] = time.perf_counter() - start
        return self._distributions[scheme]

    def builder(self, scheme: Scheme, k: int, rep: int) -> EnsembleBuilder:
        cfg = self.config
        train, _ = self.prepare_data()
        params = TreeParams(min_samples_split=cfg.min_samples_split, max_depth=cfg.max_depth)
        return EnsembleBuilder(
            train.matrix,
            train.labels,
            scheme,
            k=None if scheme == Scheme.RF else k,
            params=params,
            seed=self.rep_seed(rep),
            classes=train.classes,
            with_replacement=cfg.with_replacement,
            max_rank=cfg.max_rank,
            distribution=self._distribution(scheme),
        )

    def _time_offset(self, scheme: Scheme) -> float:
        if not self.config.include_scores_time:
            return 0.0
        return self.scores_seconds.get(scheme.value, 0.0)

    def _map_reps(self, func, reps: Sequence[int]) -> list:
        workers = min(self.config.threads, len(reps))
        if workers <= 1:
            return [func(rep) for rep in reps]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, reps))

    # ---------------------------------------------------------------- curves

    def _curve_records(self, scheme: Scheme, k: int, rep: int) -> List[ExperimentRecord]:
        cfg = self.config
        _, test = self.prepare_data()
        inner_threads = cfg.threads if cfg.repetitions == 1 else 1
        builder = self.builder(scheme, k, rep)
        model = builder.build(cfg.trees, threads=inner_threads)
        errors = prefix_errors(model, test.matrix, test.labels)
        cum_time = self._time_offset(scheme) + np.cumsum(model.tree_seconds)
        cum_nodes = np.cumsum([tree.node_count for tree in model.trees])
        return [
            ExperimentRecord(
                scheme=scheme,
                k=k,
                rep=rep,
                tree_index=index + 1,
                cum_time_s=float(cum_time[index]),
                test_error=float(errors[index]),
                cum_nodes=int(cum_nodes[index]),
                seed=builder.seed,
            )
            for index in range(model.t)
        ]

    def collect_records(self) -> List[ExperimentRecord]:
        """Per-tree records for every (scheme, k, repetition); computed once."""
        if self._records is not None:
            return self._records
        reps = list(range(self.config.repetitions))
        records: List[ExperimentRecord] = []
        for scheme, k in self.runs():
            try:
                self._distribution(scheme)
                per_rep = self._map_reps(lambda rep: self._curve_records(scheme, k, rep), reps)
            except (LessError, ValueError) as e:
                self.logger.error(f"Curve run {scheme.value} k={k} failed: {e}")
                self.failures.append(RunFailure(experiment="curves", scheme=scheme, k=k, error=str(e)))
                continue
            for rep_records in per_rep:
                records.extend(rep_records)
            self.logger.info(f"Collected {scheme.value} k={k}: {len(reps)} repetitions x {self.config.trees} trees")
        self._records = records
        return records

    def run_error_vs_time(self) -> List[ExperimentRecord]:
        """Records with cumulative training time as the x-axis."""
        return self.collect_records()

    def run_error_vs_trees(self) -> List[ExperimentRecord]:
        """Same instrumentation as ``run_error_vs_time``; x-axis is the tree count."""
        return self.collect_records()

    # ------------------------------------------------------- nodes to epsilon

    def _nodes_to_epsilon_run(self, scheme: Scheme, k: int) -> NodesToEpsilonResult:
        cfg = self.config
        _, test = self.prepare_data()
        reps = list(range(cfg.repetitions))
        builders = [self.builder(scheme, k, rep) for rep in reps]
        n_test = test.matrix.n_rows
        columns = np.arange(n_test)
        counts = np.zeros((len(reps), n_test, len(builders[0].classes)), dtype=np.int64)
        cum_nodes = np.zeros(len(reps), dtype=np.int64)
        cum_time = np.zeros(len(reps))
        offset = self._time_offset(scheme)
        elapsed = offset
        result = dict(scheme=scheme, k=k, epsilon=cfg.epsilon_target)

        for tree_index in range(cfg.trees):
            if elapsed >= cfg.time_budget_secs:
                self.logger.info(f"{scheme.value} k={k}: time budget exhausted after {tree_index} trees")
                return NodesToEpsilonResult(**result, elapsed_s=elapsed, exceeded_budget=True, reason="time_budget")
            grown = self._map_reps(lambda rep: builders[rep].grow_tree(tree_index), reps)
            errors = np.empty(len(reps))
            for rep, item in enumerate(grown):
                counts[rep, columns, item.tree.predict_many(test.matrix.values)] += 1
                cum_nodes[rep] += item.tree.node_count
                cum_time[rep] += item.seconds
                errors[rep] = np.mean(np.argmax(counts[rep], axis=1) != test.labels)
            elapsed = offset + float(cum_time.mean())
            mean_error = float(errors.mean())
            if mean_error <= cfg.epsilon_target:
                nodes = int(round(float(cum_nodes.mean())))
                self.logger.info(f"{scheme.value} k={k}: error {mean_error:.4f} with {tree_index + 1} trees, {nodes} nodes")
                return NodesToEpsilonResult(
                    **result, nodes=nodes, trees=tree_index + 1, mean_error=mean_error, elapsed_s=elapsed
                )
        self.logger.info(f"{scheme.value} k={k}: target {cfg.epsilon_target} not met with {cfg.trees} trees")
        return NodesToEpsilonResult(**result, elapsed_s=elapsed, exceeded_budget=True, reason="tree_limit")

    def run_nodes_to_epsilon(self) -> List[NodesToEpsilonResult]:
        """Grow every ensemble tree by tree until the mean test error reaches epsilon."""
        results: List[NodesToEpsilonResult] = []
        for scheme, k in self.runs():
            try:
                self._distribution(scheme)
                results.append(self._nodes_to_epsilon_run(scheme, k))
            except (LessError, ValueError) as e:
                self.logger.error(f"Nodes-to-epsilon run {scheme.value} k={k} failed: {e}")
                self.failures.append(RunFailure(experiment="nodes_to_epsilon", scheme=scheme, k=k, error=str(e)))
        return results

    # --------------------------------------------------------------- summary

    def run_all(self) -> BenchSummary:
        """Run the configured experiment families and summarise them."""
        cfg = self.config
        train, test = self.prepare_data()
        summary = BenchSummary(
            schema_version=settings.bench_schema_version,
            config=cfg,
            n_train=train.matrix.n_rows,
            n_test=test.matrix.n_rows,
            n_features=train.matrix.n_cols,
            k_values=self.k_values(),
        )
        wants_curves = {Experiment.ERROR_VS_TIME, Experiment.ERROR_VS_TREES} & set(cfg.experiments)
        if wants_curves:
            records = self.collect_records()
            if Experiment.ERROR_VS_TIME in wants_curves:
                summary.error_vs_time = mean_curves(records, axis="time")
            if Experiment.ERROR_VS_TREES in wants_curves:
                summary.error_vs_trees = mean_curves(records, axis="trees")
            summary.final_errors = final_errors(records)
            if cfg.node_budget is not None:
                summary.node_budget_errors = error_at_node_budget(records, cfg.node_budget)
        if Experiment.NODES_TO_EPSILON in cfg.experiments:
            summary.nodes_to_epsilon = self.run_nodes_to_epsilon()
        summary.scores_seconds = dict(self.scores_seconds)
        summary.failures = list(self.failures)
        return summary

    @property
    def records(self) -> List[ExperimentRecord]:
        return self._records or []


def _group(records: Sequence[ExperimentRecord]) -> Dict[Tuple[Scheme, int, int], List[ExperimentRecord]]:
    groups: Dict[Tuple[Scheme, int, int], List[ExperimentRecord]] = defaultdict(list)
    for record in records:
        groups[(record.scheme, record.k, record.tree_index)].append(record)
    return groups


def mean_curves(records: Sequence[ExperimentRecord], axis: str = "trees") -> List[CurvePoint]:
    """Mean and standard deviation over repetitions at each tree count."""
    if axis not in ("time", "trees"):
        raise InvalidConfigurationError(f"axis must be 'time' or 'trees', got {axis!r}")
    points = []
    for (scheme, k, tree_index), group in _group(records).items():
        errors = np.array([record.test_error for record in group])
        times = np.array([record.cum_time_s for record in group])
        nodes = np.array([record.cum_nodes for record in group])
        points.append(CurvePoint(
            scheme=scheme,
            k=k,
            tree_index=tree_index,
            x=float(times.mean()) if axis == "time" else float(tree_index),
            mean_error=float(errors.mean()),
            std_error=float(errors.std()),
            mean_cum_time_s=float(times.mean()),
            mean_cum_nodes=float(nodes.mean()),
            n_reps=len(group),
        ))
    return points


def final_errors(records: Sequence[ExperimentRecord]) -> List[FinalError]:
    """Mean +- std of the error at the last tree of every (scheme, k)."""
    last: Dict[Tuple[Scheme, int], int] = {}
    for record in records:
        key = (record.scheme, record.k)
        last[key] = max(last.get(key, 0), record.tree_index)
    results = []
    for (scheme, k), trees in last.items():
        errors = np.array([
            record.test_error for record in records
            if record.scheme == scheme and record.k == k and record.tree_index == trees
        ])
        results.append(FinalError(
            scheme=scheme,
            k=k,
            trees=trees,
            mean_error=float(errors.mean()),
            std_error=float(errors.std()),
            mean_accuracy=float(1.0 - errors.mean()),
        ))
    return results


def error_at_node_budget(records: Sequence[ExperimentRecord], node_budget: int) -> List[NodeBudgetError]:
    """Error of the longest prefix whose mean node count stays within ``node_budget``."""
    best: Dict[Tuple[Scheme, int], NodeBudgetError] = {}
    for point in mean_curves(records, axis="trees"):
        key = (point.scheme, point.k)
        entry = best.setdefault(key, NodeBudgetError(scheme=point.scheme, k=point.k, node_budget=node_budget))
        if point.mean_cum_nodes <= node_budget and (entry.trees is None or point.tree_index > entry.trees):
            entry.trees = point.tree_index
            entry.mean_error = point.mean_error
    return list(best.values())


def run_error_vs_time(config: ExperimentConfig) -> List[ExperimentRecord]:
    return ExperimentRunner(config).run_error_vs_time()


def run_error_vs_trees(config: ExperimentConfig) -> List[ExperimentRecord]:
    return ExperimentRunner(config).run_error_vs_trees()


def run_nodes_to_epsilon(config: ExperimentConfig) -> List[NodesToEpsilonResult]:
    return ExperimentRunner(config).run_nodes_to_epsilon()
