"""
Dense linear-algebra kernel shared by the criterion, search and analysis modules.

Every determinant is handled in log space. Singular or indefinite matrices are reported, never raised:
the public functions return a failed `Result` carrying a `SingularReport`, the hot-path helpers return
`WORST_LOG_VALUE`.
"""

import numpy as np
import scipy.linalg as la
from on_rails import Result, ValidationError, def_result
from scipy.linalg import lapack

from gbd_design._libs.ResultDetails.SingularReport import SingularReport

PD_TOLERANCE_FACTOR = 1e-12
SYMMETRY_TOLERANCE = 1e-10
WORST_LOG_VALUE = float('-inf')


class SpdFactorization:
    """
    Lower Cholesky factor of a symmetric positive-definite matrix together with its log-determinant.
    """

    def __init__(self, factor: np.ndarray):
        factor = np.array(factor, dtype=float)
        factor.setflags(write=False)
        self.factor = factor
        self.dimension = factor.shape[0]
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))

    def reconstruct(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def __repr__(self):
        return f"SpdFactorization(dimension={self.dimension}, log_det={self.log_det:.12g})"


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """
    Converts `values` to a finite 2-D float array. A 1-D input becomes a single column.
    """

    matrix = np.array(values, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError(f"The {name} must be a non-empty 2-D array.")
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"The {name} contains NaN or infinite entries.")
    return matrix


def symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) * 0.5


def pd_tolerance(m: np.ndarray) -> float:
    return PD_TOLERANCE_FACTOR * float(np.max(np.diag(m)))


@def_result()
def spd_factorize(m) -> Result[SpdFactorization]:
    """
    Cholesky-factorizes a symmetric positive-definite matrix.

    :param m: square matrix, symmetric within a relative tolerance of 1e-10. It is symmetrized before the
    factorization.

    :return: `Result.ok(SpdFactorization)`, or a failed Result with a `SingularReport` naming the first pivot
    at or below `1e-12 * max(diag(m))`. Non-square or asymmetric input fails with a `ValidationError`.
    """

    matrix = as_matrix(m)
    rows, cols = matrix.shape
    if rows != cols:
        return Result.fail(ValidationError(message=f"The matrix must be square, got {rows}x{cols}."))
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOLERANCE * scale:
        return Result.fail(ValidationError(message="The matrix is not symmetric."))

    matrix = symmetrize(matrix)
    diagonal = np.diag(matrix)
    tolerance = pd_tolerance(matrix)
    if tolerance <= 0:
        return Result.fail(SingularReport(pivot=int(np.argmax(diagonal <= 0))))

    factor, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        return Result.fail(SingularReport(pivot=int(info) - 1))
    if info < 0:  # pragma: no cover
        return Result.fail(ValidationError(message=f"LAPACK rejected argument {-info}."))

    small = np.flatnonzero(np.diag(factor) ** 2 <= tolerance)
    if small.size > 0:
        return Result.fail(SingularReport(pivot=int(small[0])))
    return Result.ok(SpdFactorization(factor))


@def_result()
def solve_spd(f: SpdFactorization, rhs) -> Result[np.ndarray]:
    """
    Solves `m x = rhs` given the factorization of `m`. A 1-D right-hand side gives a 1-D solution.
    """

    values = np.array(rhs, dtype=float)
    if values.shape[0] != f.dimension:
        return Result.fail(ValidationError(
            message=f"The right-hand side has {values.shape[0]} rows, expected {f.dimension}."))
    return Result.ok(la.cho_solve((f.factor, True), values))


@def_result()
def gram(x, sigma_factor: SpdFactorization) -> Result[np.ndarray]:
    """
    Computes the GLS information matrix `x' Sigma^-1 x` from the factorization of Sigma.
    The output is exactly symmetric.
    """

    matrix = as_matrix(x, "model matrix")
    if matrix.shape[0] != sigma_factor.dimension:
        return Result.fail(ValidationError(
            message=f"The model matrix has {matrix.shape[0]} rows but the covariance matrix has side "
                    f"{sigma_factor.dimension}."))
    return Result.ok(symmetrize(matrix.T @ la.cho_solve((sigma_factor.factor, True), matrix)))


def spd_log_det(m: np.ndarray) -> float:
    """
    Log-determinant of a symmetric matrix, or `WORST_LOG_VALUE` when it is not positive definite.
    Used inside the exchange loop.

    The matrix is scaled to unit diagonal before factorizing, so the pivot tolerance applies to every block
    alike: a large prior block (tiny tau) cannot hide a singular primary block.
    """

    matrix = symmetrize(m)
    diagonal = np.diag(matrix)
    if not np.all(diagonal > 0):
        return WORST_LOG_VALUE
    scale = 1.0 / np.sqrt(diagonal)
    try:
        factor = np.linalg.cholesky(matrix * scale[:, None] * scale[None, :])
    except np.linalg.LinAlgError:
        return WORST_LOG_VALUE
    pivots = np.diag(factor)
    if np.min(pivots) ** 2 <= PD_TOLERANCE_FACTOR:
        return WORST_LOG_VALUE
    return float(np.sum(np.log(diagonal))) + 2.0 * float(np.sum(np.log(pivots)))


def reciprocal_condition(m: np.ndarray) -> np.ndarray:
    """
    Reciprocal 2-norm condition number of one symmetric matrix or of a stack of them (last two axes),
    computed after scaling to unit diagonal so that column scaling does not matter.
    A matrix with a non-positive diagonal entry gets 0.
    """

    matrix = np.asarray(m, dtype=float)
    diagonal = np.diagonal(matrix, axis1=-2, axis2=-1)
    positive = np.all(diagonal > 0, axis=-1)
    scale = 1.0 / np.sqrt(np.where(diagonal > 0, diagonal, 1.0))
    scaled = matrix * scale[..., :, None] * scale[..., None, :]
    with np.errstate(divide='ignore', invalid='ignore'):
        condition = np.linalg.cond(scaled)
        result = np.where(np.isfinite(condition) & (condition > 0), 1.0 / condition, 0.0)
    return np.where(positive, result, 0.0)
