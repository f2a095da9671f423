#!/usr/bin/env python3
"""
Script to compare leverage-score and uniform feature sampling on planted data.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

import numpy as np

from core.experiment_runner import ExperimentRunner
from models.data import Scheme
from models.experiment import Experiment, ExperimentConfig, ExperimentRecord
from services.report_service import ReportService


def paired_final_errors(records: List[ExperimentRecord], scheme: Scheme, k: int) -> Dict[int, float]:
    """Error after the last tree of each repetition."""
    last: Dict[int, ExperimentRecord] = {}
    for record in records:
        if record.scheme == scheme and record.k == k:
            if record.rep not in last or record.tree_index > last[record.rep].tree_index:
                last[record.rep] = record
    return {rep: record.test_error for rep, record in last.items()}


def run_benchmark(config: ExperimentConfig, k: int) -> Optional[float]:
    """Run the comparison and print its results; returns the paired mean difference."""

    runner = ExperimentRunner(config)
    summary = runner.run_all()
    reports = ReportService(config.output_dir)
    reports.write_curves(runner.records)
    reports.write_summary(summary)
    reports.write_failures(summary.failures)

    print(f"\nFinal errors ({config.repetitions} repetitions, {config.trees} trees):")
    for final in summary.final_errors:
        print(f"  {final.scheme.value:>8} k={final.k:<4} {final.mean_error:.4f} +- {final.std_error:.4f}")

    leverage = paired_final_errors(runner.records, Scheme.LEVERAGE, k)
    uniform = paired_final_errors(runner.records, Scheme.UNIFORM, k)
    shared = sorted(set(leverage) & set(uniform))
    difference = None
    if shared:
        difference = float(np.mean([uniform[rep] - leverage[rep] for rep in shared]))
        print(f"\nPaired mean difference uniform - leverage: {100 * difference:.2f} percentage points")

    if summary.nodes_to_epsilon:
        print(f"\nNodes to epsilon = {config.epsilon_target}:")
        for result in summary.nodes_to_epsilon:
            outcome = f"{result.nodes} nodes ({result.trees} trees)" if not result.exceeded_budget else f">T ({result.reason})"
            print(f"  {result.scheme.value:>8} k={result.k:<4} {outcome}")

    if summary.failures:
        print(f"\nFailed runs:")
        for failure in summary.failures:
            print(f"  - {failure.experiment} {failure.scheme} k={failure.k}: {failure.error}")
    return difference


def main():
    """Main function."""
    parser = argparse.ArgumentParser(description="Leverage vs uniform feature sampling on planted data")
    parser.add_argument("--repetitions", "-r", type=int, default=30, help="Seeded repetitions per scheme")
    parser.add_argument("--trees", "-t", type=int, default=100, help="Trees per ensemble")
    parser.add_argument("--k", type=int, default=50, help="Features per tree")
    parser.add_argument("--epsilon", type=float, default=0.25, help="Target error for the node count comparison")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--with-rf", action="store_true", help="Include norm and rf baselines")
    parser.add_argument("--out", default="bench_results/planted", help="Output directory")

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    schemes = [Scheme.LEVERAGE, Scheme.UNIFORM]
    if args.with_rf:
        schemes += [Scheme.NORM, Scheme.RF]
    config = ExperimentConfig(
        dataset="planted",
        planted_n=2000,
        planted_d=500,
        planted_informative=20,
        schemes=schemes,
        k_values=[args.k],
        trees=args.trees,
        repetitions=args.repetitions,
        experiments=[Experiment.ERROR_VS_TREES, Experiment.NODES_TO_EPSILON],
        epsilon_target=args.epsilon,
        max_rank=20,
        seed=args.seed,
        threads=args.threads,
        output_dir=args.out,
    )

    print("LESS planted benchmark")
    print("=" * 50)
    difference = run_benchmark(config, args.k)
    return 0 if difference is not None and difference > 0 else 1


if __name__ == "__main__":
    sys.exit(main())
