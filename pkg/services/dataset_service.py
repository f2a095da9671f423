import csv
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.datasets import dump_svmlight_file, load_svmlight_file
from sklearn.model_selection import train_test_split as sklearn_split
from sklearn.preprocessing import StandardScaler

from config import settings
from core.errors import DataFormatError, InvalidConfigurationError
from core.sampling import seeded_rng
from models.data import DataFormat, DataMatrix, LabeledDataset

PathLike = Union[str, Path]

# E[(0.5 + U)^2] for U ~ U(0, 1): second moment of a planted latent magnitude
_LATENT_SECOND_MOMENT = 13.0 / 12.0


def encode_labels(raw: Sequence[str]) -> Tuple[np.ndarray, List[str]]:
    """Map raw labels to codes 0..C-1.

    Numeric label sets are ordered numerically (so "-1" < "1" < "10"),
    anything else lexicographically. Returns (codes, classes).
    """
    tokens = [str(value).strip() for value in raw]
    unique = sorted(set(tokens))
    try:
        unique.sort(key=float)
    except ValueError:
        pass
    lookup = {token: code for code, token in enumerate(unique)}
    return np.array([lookup[token] for token in tokens], dtype=np.int64), unique


class DatasetService:
    """Service for loading, splitting and generating labeled datasets."""

    def __init__(self, delimiter: Optional[str] = None):
        self.delimiter = delimiter or settings.csv_delimiter
        self.logger = logging.getLogger(__name__)

    def load(
        self,
        path: PathLike,
        data_format: DataFormat = DataFormat.CSV,
        label_column: Optional[Union[int, str]] = -1,
        has_header: bool = True,
        n_features: Optional[int] = None,
    ) -> LabeledDataset:
        """Load ``path`` in the given format."""
        if DataFormat(data_format) == DataFormat.LIBSVM:
            return self.load_libsvm(path, n_features=n_features)
        return self.load_csv(path, label_column=label_column, has_header=has_header)

    def load_csv(
        self,
        path: PathLike,
        label_column: Optional[Union[int, str]] = -1,
        has_header: bool = True,
    ) -> LabeledDataset:
        """Load a delimited text file.

        ``label_column`` is a column position (negative counts from the end),
        a header name, or None for unlabeled data. Every other cell must parse
        as a finite real.
        """
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Dataset {path} not found")

        with path.open(newline="") as handle:
            rows = [row for row in csv.reader(handle, delimiter=self.delimiter) if row]
        header = rows.pop(0) if has_header and rows else None
        if not rows:
            raise DataFormatError(f"{path}: no data rows")

        width = len(header) if header is not None else len(rows[0])
        for line, row in enumerate(rows, start=2 if header is not None else 1):
            if len(row) != width:
                raise DataFormatError(f"{path}: line {line} has {len(row)} cells, expected {width}")

        label_index = self._resolve_label_column(label_column, header, width, path)
        feature_columns = [col for col in range(width) if col != label_index]
        if not feature_columns:
            raise DataFormatError(f"{path}: no feature columns")

        values = np.empty((len(rows), len(feature_columns)), dtype=np.float64)
        first_line = 2 if header is not None else 1
        for row_number, row in enumerate(rows):
            for target, col in enumerate(feature_columns):
                cell = row[col].strip()
                try:
                    value = float(cell)
                except ValueError:
                    value = np.nan
                if not np.isfinite(value):
                    raise DataFormatError(
                        f"{path}: cannot parse {cell!r} as a finite number "
                        f"(line {row_number + first_line}, column {col + 1})"
                    )
                values[row_number, target] = value

        labels, classes = (None, [])
        if label_index is not None:
            labels, classes = encode_labels([row[label_index] for row in rows])
        self.logger.info(f"Loaded {path}: {values.shape[0]} rows, {values.shape[1]} features, {len(classes)} classes")
        return LabeledDataset(matrix=DataMatrix(values=values), labels=labels, classes=classes)

    def _resolve_label_column(
        self,
        label_column: Optional[Union[int, str]],
        header: Optional[List[str]],
        width: int,
        path: Path,
    ) -> Optional[int]:
        if label_column is None or str(label_column).strip().lower() == "none":
            return None
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            names = [name.strip() for name in header or []]
            if label_column not in names:
                raise DataFormatError(f"{path}: label column {label_column!r} not in header")
            return names.index(label_column)
        index = int(label_column)
        if not -width <= index < width:
            raise DataFormatError(f"{path}: label column {index} out of range for {width} columns")
        return index % width

    def load_libsvm(self, path: PathLike, n_features: Optional[int] = None) -> LabeledDataset:
        """Load "label idx:val ..." lines with 1-based, increasing indices."""
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Dataset {path} not found")
        try:
            sparse, raw_labels = load_svmlight_file(str(path), n_features=n_features, zero_based=False)
        except ValueError as e:
            raise DataFormatError(f"{path}: {e}") from e
        values = sparse.toarray()
        if values.shape[1] == 0:
            raise DataFormatError(f"{path}: no features")
        bad = ~np.isfinite(values)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise DataFormatError(f"{path}: non-finite value at line {row + 1}, feature {col + 1}")
        labels, classes = encode_labels([format(value, "g") for value in raw_labels])
        self.logger.info(f"Loaded {path}: {values.shape[0]} rows, {values.shape[1]} features, {len(classes)} classes")
        return LabeledDataset(matrix=DataMatrix(values=values), labels=labels, classes=classes)

    def save_csv(self, dataset: LabeledDataset, path: PathLike, label_name: str = "label") -> None:
        """Write features then the decoded label column, with a header."""
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle, delimiter=self.delimiter)
            n_cols = dataset.matrix.n_cols
            header = [f"x{col}" for col in range(n_cols)]
            if dataset.has_labels:
                header.append(label_name)
            writer.writerow(header)
            decoded = dataset.decode(dataset.labels) if dataset.has_labels else None
            for row_number, row in enumerate(dataset.matrix.values):
                cells = [repr(float(value)) for value in row]
                if decoded is not None:
                    cells.append(decoded[row_number])
                writer.writerow(cells)

    def save_libsvm(self, dataset: LabeledDataset, path: PathLike) -> None:
        """Write in LIBSVM format; labels must be numeric."""
        if not dataset.has_labels:
            raise DataFormatError("LIBSVM output needs labels")
        try:
            numeric = np.array([float(label) for label in dataset.decode(dataset.labels)])
        except ValueError as e:
            raise DataFormatError(f"LIBSVM labels must be numeric: {e}") from e
        dump_svmlight_file(dataset.matrix.values, numeric, str(path), zero_based=False)

    def train_test_split(
        self,
        dataset: LabeledDataset,
        test_fraction: Optional[float] = None,
        seed: int = 0,
        stratify: bool = False,
    ) -> Tuple[LabeledDataset, LabeledDataset]:
        """Seeded shuffle, then partition into (train, test)."""
        test_fraction = settings.test_fraction if test_fraction is None else test_fraction
        if not 0.0 < test_fraction < 1.0:
            raise InvalidConfigurationError(f"test_fraction must be in (0, 1), got {test_fraction}")
        indices = np.arange(dataset.matrix.n_rows)
        try:
            train_rows, test_rows = sklearn_split(
                indices,
                test_size=test_fraction,
                random_state=np.random.RandomState(seed % 2**32),
                shuffle=True,
                stratify=dataset.labels if stratify else None,
            )
        except ValueError as e:
            raise InvalidConfigurationError(f"Cannot split {indices.size} rows with fraction {test_fraction}: {e}") from e
        if train_rows.size == 0 or test_rows.size == 0:
            raise InvalidConfigurationError("Split would leave an empty partition")
        return self.take_rows(dataset, train_rows), self.take_rows(dataset, test_rows)

    def take_rows(self, dataset: LabeledDataset, rows: Sequence[int]) -> LabeledDataset:
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(
            matrix=dataset.matrix.take_rows(rows),
            labels=None if dataset.labels is None else dataset.labels[rows],
            classes=dataset.classes,
            informative_columns=dataset.informative_columns,
        )

    def subsample(self, dataset: LabeledDataset, max_rows: Optional[int], seed: int = 0) -> LabeledDataset:
        """Seeded row sample of at most ``max_rows`` rows, in original order."""
        if max_rows is None or max_rows >= dataset.matrix.n_rows:
            return dataset
        if max_rows < 1:
            raise InvalidConfigurationError(f"max_rows must be >= 1, got {max_rows}")
        rows = np.sort(seeded_rng(seed).choice(dataset.matrix.n_rows, size=max_rows, replace=False))
        return self.take_rows(dataset, rows)

    def fit_unit_variance(self, dataset: LabeledDataset) -> np.ndarray:
        """Per-column divisors giving unit variance (1 for constant columns).

        Scaling changes column norms and therefore the norm and leverage
        distributions.
        """
        scaler = StandardScaler(with_mean=False).fit(dataset.matrix.values)
        return np.asarray(scaler.scale_, dtype=np.float64)

    def apply_scales(self, dataset: LabeledDataset, scales: Sequence[float]) -> LabeledDataset:
        scales = np.asarray(scales, dtype=np.float64)
        if scales.shape != (dataset.matrix.n_cols,):
            raise DataFormatError(f"Expected {dataset.matrix.n_cols} scales, got {scales.shape[0]}")
        return dataset.model_copy(update={"matrix": DataMatrix(values=dataset.matrix.values / scales)})

    def make_planted_dataset(
        self,
        n: int,
        d: int,
        n_informative: int,
        class_count: int = 2,
        noise_scale: float = 0.5,
        seed: int = 0,
        amplification: Optional[float] = None,
        latent_count: Optional[int] = None,
        positive_rate: Optional[float] = None,
    ) -> LabeledDataset:
        """Synthetic data where the first ``n_informative`` columns carry the label.

        ``latent_count`` hidden signs s_i (P(s_i = +1) = ``positive_rate``)
        with magnitudes in [0.5, 1.5) drive the label: the number of positive
        signs modulo ``class_count`` (XOR of the signs for two classes).
        Informative column j is latent j mod latent_count plus
        ``noise_scale`` Gaussian noise, standardised to unit second moment and
        multiplied by ``amplification``, so its expected squared norm is
        amplification^2 times that of a noise column. Remaining columns are
        N(0, 1) noise.
        """
        amplification = settings.planted_amplification if amplification is None else amplification
        latent_count = settings.planted_latent_count if latent_count is None else latent_count
        positive_rate = settings.planted_positive_rate if positive_rate is None else positive_rate
        if n < 1 or d < 1:
            raise InvalidConfigurationError(f"Need n >= 1 and d >= 1, got n={n}, d={d}")
        if not 1 <= n_informative <= d:
            raise InvalidConfigurationError(f"n_informative must be in [1, {d}], got {n_informative}")
        if class_count < 2:
            raise InvalidConfigurationError(f"class_count must be >= 2, got {class_count}")
        if noise_scale < 0 or amplification <= 0 or not 0.0 < positive_rate < 1.0:
            raise InvalidConfigurationError("noise_scale >= 0, amplification > 0 and positive_rate in (0, 1) required")

        rng = seeded_rng(seed)
        n_latent = max(1, min(latent_count, n_informative))
        signs = np.where(rng.random((n, n_latent)) < positive_rate, 1.0, -1.0)
        latents = signs * (0.5 + rng.random((n, n_latent)))
        codes = np.count_nonzero(signs > 0, axis=1) % class_count

        source = np.arange(n_informative) % n_latent
        informative = latents[:, source] + noise_scale * rng.standard_normal((n, n_informative))
        informative *= amplification / np.sqrt(_LATENT_SECOND_MOMENT + noise_scale ** 2)
        noise = rng.standard_normal((n, d - n_informative))

        self.logger.info(
            f"Planted dataset: n={n}, d={d}, {n_informative} informative columns over {n_latent} latents, "
            f"amplification {amplification}"
        )
        return LabeledDataset(
            matrix=DataMatrix(values=np.hstack([informative, noise])),
            labels=codes,
            classes=[str(code) for code in range(class_count)],
            informative_columns=list(range(n_informative)),
        )
