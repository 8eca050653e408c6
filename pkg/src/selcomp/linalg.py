"""Sparse factorisation helpers shared by the equilibrium and condensation steps."""

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class NotPositiveDefinite(ArithmeticError):
    pass


def factorize(A, check_pd=True):
    """Symmetric LU factorisation without pivoting of a sparse SPD matrix.

    With diagonal pivoting disabled, the diagonal of ``U`` equals the pivots
    of an ``LDL^T`` factorisation, which yields a cheap definiteness test.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is non-positive (only when ``check_pd``).
    ArithmeticError
        If the matrix is exactly singular.
    """
    A = sp.csc_matrix(A)
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise ArithmeticError(f"singular matrix: {exc}") from exc
    piv = lu.U.diagonal()
    if not np.all(np.isfinite(piv)):
        raise ArithmeticError("non-finite pivot")
    if check_pd and np.any(piv <= 0.0):
        raise NotPositiveDefinite(f"{int(np.sum(piv <= 0.0))} non-positive pivots")
    if np.any(piv == 0.0):
        raise ArithmeticError("zero pivot")
    return lu


def min_pivot(lu):
    return float(np.min(np.abs(lu.U.diagonal())))
