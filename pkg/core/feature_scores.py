"""Feature-importance distributions: uniform, squared column norm, leverage."""

import logging
from typing import Optional, Sequence

import numpy as np

from config import settings
from core.errors import DegenerateMatrixError, InvalidConfigurationError
from core.matrix_core import column_squared_norms, truncated_svd
from models.data import DataMatrix, FeatureDistribution, Scheme

logger = logging.getLogger(__name__)


def uniform_distribution(n_features: int) -> FeatureDistribution:
    """Every feature gets probability 1/d."""
    if n_features < 1:
        raise InvalidConfigurationError(f"Need at least one feature, got {n_features}")
    return FeatureDistribution(probs=np.full(n_features, 1.0 / n_features), scheme=Scheme.UNIFORM)


def norm_distribution(matrix: DataMatrix) -> FeatureDistribution:
    """Probabilities proportional to squared column norms; zero columns get 0."""
    norms = column_squared_norms(matrix)
    total = norms.sum()
    if total <= 0:
        raise DegenerateMatrixError("All columns are zero, norm scores are undefined")
    return FeatureDistribution(probs=norms / total, scheme=Scheme.NORM)


def leverage_distribution(
    matrix: DataMatrix,
    max_rank: Optional[int] = None,
    rank_tol: Optional[float] = None,
) -> FeatureDistribution:
    """Normalised column leverage scores from the top-r right singular vectors.

    pi_j = (1/r) * sum_i v_i(j)^2, with r the effective truncation rank
    (numerical rank when it is below ``max_rank``).
    """
    max_rank = settings.max_rank if max_rank is None else max_rank
    factors = truncated_svd(matrix, max_rank=max_rank, rank_tol=rank_tol)
    scores = np.einsum("jr,jr->j", factors.right_vectors, factors.right_vectors) / factors.rank
    # renormalise away rounding so the sum is one to machine precision
    scores = scores / scores.sum()
    return FeatureDistribution(probs=scores, scheme=Scheme.LEVERAGE, effective_rank=factors.rank)


def compute_distribution(
    matrix: DataMatrix,
    scheme: Scheme,
    max_rank: Optional[int] = None,
    rank_tol: Optional[float] = None,
) -> FeatureDistribution:
    """Dispatch to the distribution of ``scheme``."""
    scheme = Scheme(scheme)
    if scheme == Scheme.UNIFORM:
        return uniform_distribution(matrix.n_cols)
    if scheme == Scheme.NORM:
        return norm_distribution(matrix)
    if scheme == Scheme.LEVERAGE:
        return leverage_distribution(matrix, max_rank=max_rank, rank_tol=rank_tol)
    raise InvalidConfigurationError(f"Scheme {scheme.value!r} has no feature distribution")


def coherence(distribution: FeatureDistribution) -> float:
    """d times the largest probability; 1.0 means perfectly flat."""
    return float(distribution.n_features * distribution.probs.max())


def distribution_mass(distribution: FeatureDistribution, columns: Sequence[int]) -> float:
    """Total probability carried by ``columns``."""
    return float(distribution.probs[np.asarray(columns, dtype=np.int64)].sum())
