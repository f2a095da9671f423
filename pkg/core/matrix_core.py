"""Column norms and truncated SVD of a DataMatrix.

The truncated SVD is a block subspace (power) iteration followed by a
Rayleigh-Ritz step. The matrix is decomposed as given, without centering.
"""

import logging
from typing import Optional

import numpy as np

from config import settings
from core.errors import DegenerateMatrixError, InvalidConfigurationError
from models.data import DataMatrix, SvdFactors

logger = logging.getLogger(__name__)


def column_squared_norms(matrix: DataMatrix) -> np.ndarray:
    """Squared Euclidean norm of every column, length d."""
    values = matrix.values
    return np.einsum("ij,ij->j", values, values)


def truncated_svd(
    matrix: DataMatrix,
    max_rank: int,
    rank_tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
    seed: Optional[int] = None,
    oversample: Optional[int] = None,
) -> SvdFactors:
    """Top singular values and right singular vectors of ``matrix``.

    Returns min(max_rank, numerical rank) triplets, where the numerical rank
    counts singular values above ``rank_tol`` times the largest one. Iteration
    stops when the leading singular values change by less than ``tol``
    (relative) between sweeps, or after ``max_iter`` sweeps.
    """
    if max_rank < 1:
        raise InvalidConfigurationError(f"max_rank must be >= 1, got {max_rank}")
    rank_tol = settings.rank_tol if rank_tol is None else rank_tol
    max_iter = settings.svd_max_iter if max_iter is None else max_iter
    tol = settings.svd_tol if tol is None else tol
    seed = settings.svd_seed if seed is None else seed
    oversample = settings.svd_oversample if oversample is None else oversample

    values = matrix.values
    if not np.any(values):
        raise DegenerateMatrixError("Cannot decompose an all-zero matrix")

    n_rows, n_cols = values.shape
    full_rank = min(n_rows, n_cols)
    target = min(max_rank, full_rank)
    block = min(target + oversample, full_rank)

    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((n_cols, block)))

    previous = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        left, _ = np.linalg.qr(values @ basis)
        basis, upper = np.linalg.qr(values.T @ left)
        estimate = np.linalg.svd(upper, compute_uv=False)[:target]
        if previous is not None:
            change = np.max(np.abs(estimate - previous) / np.maximum(estimate, np.finfo(float).tiny))
            if change < tol:
                break
        previous = estimate

    # Rayleigh-Ritz on the converged subspace
    _, singular_values, ritz_t = np.linalg.svd(values @ basis, full_matrices=False)
    right_vectors = basis @ ritz_t.T

    cutoff = rank_tol * singular_values[0]
    numerical_rank = int(np.count_nonzero(singular_values > cutoff))
    rank = min(target, numerical_rank)
    logger.debug(
        f"truncated_svd: {n_rows}x{n_cols}, requested {max_rank}, rank {rank} after {iterations} sweeps"
    )
    return SvdFactors(
        singular_values=singular_values[:rank].copy(),
        right_vectors=np.ascontiguousarray(right_vectors[:, :rank]),
    )
