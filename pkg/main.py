import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from api.commands import COMMANDS
from config import settings
from core.errors import DataFormatError, InvalidConfigurationError, LessError
from models.data import DataFormat, Scheme

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_COMPUTE = 3


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="CSV or LIBSVM dataset path")
    parser.add_argument("--format", choices=[f.value for f in DataFormat], default=DataFormat.CSV.value)
    parser.add_argument("--label-col", default="-1", help="Label column position or name; 'none' for unlabeled data")
    parser.add_argument("--no-header", action="store_true", help="CSV file has no header row")
    parser.add_argument("--delimiter", default=None, help=f"CSV delimiter (default {settings.csv_delimiter!r})")
    parser.add_argument("--n-features", type=int, default=None, help="Feature count (LIBSVM width, uniform scores)")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scheme", choices=[s.value for s in Scheme], default=None)
    parser.add_argument("--k", type=int, default=None, help="Features sampled per tree")
    parser.add_argument("--trees", type=int, default=None, help="Number of trees t")
    parser.add_argument("--seed", type=int, default=None, help="Master seed")
    parser.add_argument("--max-rank", type=int, default=None, help=f"SVD truncation rank (default {settings.max_rank})")
    parser.add_argument("--min-split", type=int, default=None, help="Minimum samples to split a node (default 2)")
    parser.add_argument("--max-depth", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None, help="Worker threads")
    parser.add_argument("--with-replacement", action="store_true", help="Sample tree features with replacement")


def build_parser() -> CliParser:
    parser = CliParser(prog="less-trees", description="LESS tree ensembles: leverage-score feature sampling for decision trees")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    scores = sub.add_parser("scores", help="Compute a feature sampling distribution")
    _add_data_flags(scores)
    scores.add_argument("--scheme", choices=[s.value for s in Scheme], default=None)
    scores.add_argument("--max-rank", type=int, default=None)
    scores.add_argument("--out", help="Output JSON path (default stdout)")

    train = sub.add_parser("train", help="Train an ensemble")
    _add_data_flags(train)
    _add_model_flags(train)
    train.add_argument("--scale", action="store_true", help="Scale features to unit variance first")
    train.add_argument("--model", "--out", dest="model", help="Model output path")

    predict = sub.add_parser("predict", help="Predict labels with a saved ensemble")
    _add_data_flags(predict)
    predict.add_argument("--model", required=True, help="Saved model path")
    predict.add_argument("--out", help="Predictions path (default stdout)")

    bench = sub.add_parser("bench", help="Run the benchmark harness")
    _add_data_flags(bench)
    _add_model_flags(bench)
    bench.add_argument("--config", help="key=value experiment manifest")
    bench.add_argument("--repetitions", type=int, default=None)
    bench.add_argument("--out", help="Output directory (overrides output_dir)")
    return parser


def _exit_code(error: Exception) -> int:
    if isinstance(error, (UsageError, InvalidConfigurationError, ValidationError)):
        return EXIT_USAGE
    if isinstance(error, (DataFormatError, FileNotFoundError, OSError)):
        return EXIT_DATA
    # DegenerateMatrixError and any other LessError
    return EXIT_COMPUTE


def main(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the subcommand, return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"less-trees: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except (LessError, ValidationError, OSError, ValueError) as e:
        code = _exit_code(e)
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        if isinstance(e, ValidationError) and e.errors():
            first = e.errors()[0]
            message = f"{'.'.join(str(part) for part in first['loc'])}: {first['msg']}"
        else:
            message = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"less-trees: error: {message}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
