import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Union

from core.errors import DataFormatError
from models.experiment import BenchSummary, ExperimentRecord, RunFailure

PathLike = Union[str, Path]

CURVE_COLUMNS = ["scheme", "k", "rep", "tree_index", "cum_time_s", "test_error", "cum_nodes"]


class ReportService:
    """Writes benchmark artifacts: curves CSV, JSON summary and failure manifest."""

    CURVES_FILE = "curves.csv"
    SUMMARY_FILE = "summary.json"
    FAILURES_FILE = "failures.json"

    def __init__(self, output_dir: PathLike):
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger(__name__)

    def write_curves(self, records: Iterable[ExperimentRecord], append: bool = False) -> Path:
        """Per-repetition records, one row per tree.

        In append mode an existing file must carry the same header.
        """
        path = self.output_dir / self.CURVES_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        appending = append and path.is_file() and path.stat().st_size > 0
        if appending:
            with path.open(newline="") as handle:
                header = next(csv.reader(handle), [])
            if header != CURVE_COLUMNS:
                raise DataFormatError(f"Cannot append to {path}: header {header} != {CURVE_COLUMNS}")

        count = 0
        with path.open("a" if appending else "w", newline="") as handle:
            writer = csv.writer(handle)
            if not appending:
                writer.writerow(CURVE_COLUMNS)
            for record in records:
                writer.writerow([
                    record.scheme.value,
                    record.k,
                    record.rep,
                    record.tree_index,
                    f"{record.cum_time_s:.6f}",
                    repr(record.test_error),
                    record.cum_nodes,
                ])
                count += 1
        self.logger.info(f"{'Appended' if appending else 'Wrote'} {count} curve rows to {path}")
        return path

    def read_curves(self, path: Optional[PathLike] = None) -> List[ExperimentRecord]:
        path = Path(path) if path else self.output_dir / self.CURVES_FILE
        if not path.is_file():
            raise FileNotFoundError(f"Curves file {path} not found")
        with path.open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        # the seed column is not part of the CSV; 0 marks it unknown
        return [ExperimentRecord(**row, seed=0) for row in rows]

    def write_summary(self, summary: BenchSummary) -> Path:
        path = self.output_dir / self.SUMMARY_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary.model_dump(mode="json"), indent=2))
        self.logger.info(f"Wrote benchmark summary to {path}")
        return path

    def write_failures(self, failures: List[RunFailure]) -> Optional[Path]:
        """Failure manifest; nothing is written when every run succeeded."""
        if not failures:
            return None
        path = self.output_dir / self.FAILURES_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps([failure.model_dump(mode="json") for failure in failures], indent=2))
        self.logger.warning(f"{len(failures)} benchmark runs failed; see {path}")
        return path
