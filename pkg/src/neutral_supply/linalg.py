"""Dense real-matrix kernels with explicit tolerances.

Every definiteness test in the package goes through :func:`is_neg_def` and
friends so that a single relative gate decides what "strictly negative"
means numerically.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBasis, InvalidMatrix, SingularPivot

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "as_matrix",
    "as_symmetric",
    "sym",
    "sym_eigen",
    "lambda_max",
    "lambda_min",
    "is_neg_def",
    "is_neg_semidef",
    "is_pos_def",
    "numeric_rank",
    "kernel_basis",
    "orth_complement",
    "schur_complement",
    "block_diag",
]


@dataclass(frozen=True)
class Tolerance:
    """Relative thresholds used by the definiteness and rank tests.

    Parameters
    ----------
    definiteness_eps : float
        A symmetric ``m`` counts as negative definite when
        ``lambda_max(m) < -definiteness_eps * (1 + ||m||)``.
    rank_eps : float
        Singular values at or below ``rank_eps * sigma_max`` are treated
        as zero.
    """

    definiteness_eps: float = 1e-8
    rank_eps: float = 1e-9

    def __post_init__(self):
        for name in ("definiteness_eps", "rank_eps"):
            value = getattr(self, name)
            if not (0.0 < value <= 1e-3):
                raise ValueError(f"{name} must lie in (0, 1e-3], got {value!r}")


DEFAULT_TOL = Tolerance()


def as_matrix(m, rows=None, cols=None, name="matrix"):
    """Return `m` as a finite 2-D float array, optionally checking its shape."""
    try:
        a = np.asarray(m, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrix(f"{name}: {exc}") from None
    if rows is not None and cols is not None and a.size == rows * cols == 0:
        a = a.reshape(rows, cols)
    elif a.ndim < 2:
        a = np.atleast_2d(a)
    if a.ndim != 2:
        raise InvalidMatrix(f"{name} must be 2-D, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise InvalidMatrix(f"{name} must have {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise InvalidMatrix(f"{name} must have {cols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix(f"{name} contains non-finite entries")
    return a


def sym(m):
    """Symmetric part ``(m + m.T) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def as_symmetric(m, tol=DEFAULT_TOL, name="matrix"):
    """Validate and symmetrize a square matrix.

    Asymmetry up to ``rank_eps * ||m||`` is averaged away; anything larger
    is rejected.
    """
    a = as_matrix(m, name=name)
    if a.shape[0] != a.shape[1]:
        raise InvalidMatrix(f"{name} must be square, got shape {a.shape}")
    if a.size:
        scale = np.linalg.norm(a, 2)
        if np.max(np.abs(a - a.T)) > tol.rank_eps * max(scale, 1.0):
            raise InvalidMatrix(f"{name} is not symmetric")
    return sym(a)


def _check_sym(m):
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * (1.0 + np.max(np.abs(a))):
        raise InvalidMatrix("matrix is not symmetric")
    return sym(a)


def sym_eigen(m):
    """Eigen-decomposition of a symmetric matrix.

    Returns
    -------
    eigenvalues : ndarray
        Sorted ascending.
    eigenvectors : ndarray
        Orthonormal columns matching `eigenvalues`.
    """
    a = _check_sym(m)
    return np.linalg.eigh(a)


def lambda_max(m):
    """Largest eigenvalue of a symmetric matrix (``-inf`` for an empty one)."""
    a = _check_sym(m)
    if a.shape[0] == 0:
        return -np.inf
    return float(np.linalg.eigvalsh(a)[-1])


def lambda_min(m):
    """Smallest eigenvalue of a symmetric matrix (``+inf`` for an empty one)."""
    a = _check_sym(m)
    if a.shape[0] == 0:
        return np.inf
    return float(np.linalg.eigvalsh(a)[0])


def _scale(a):
    return 1.0 + (np.linalg.norm(a, 2) if a.size else 0.0)


def is_neg_def(m, tol=DEFAULT_TOL):
    """Strict negativity test.

    Returns ``(ok, margin)`` where ``margin`` is ``lambda_max(m)`` and
    ``ok`` is true iff ``margin < -definiteness_eps * (1 + ||m||)``.
    An empty matrix is vacuously negative definite.
    """
    a = _check_sym(m)
    margin = lambda_max(a)
    if a.shape[0] == 0:
        return True, margin
    return bool(margin < -tol.definiteness_eps * _scale(a)), margin


def is_neg_semidef(m, tol=DEFAULT_TOL):
    """Non-strict test: ``lambda_max(m) <= definiteness_eps * (1 + ||m||)``."""
    a = _check_sym(m)
    margin = lambda_max(a)
    if a.shape[0] == 0:
        return True, margin
    return bool(margin <= tol.definiteness_eps * _scale(a)), margin


def is_pos_def(m, tol=DEFAULT_TOL):
    """Strict positivity test; the margin reported is ``lambda_min(m)``."""
    ok, margin = is_neg_def(-np.asarray(m, dtype=float), tol)
    return ok, -margin


def numeric_rank(c, tol=DEFAULT_TOL):
    """Number of singular values above ``rank_eps * sigma_max``."""
    c = as_matrix(c)
    if c.size == 0:
        return 0
    s = np.linalg.svd(c, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_eps * s[0]))


def _fix_signs(v):
    # first entry that is clearly nonzero becomes positive, column by column
    v = v.copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        big = np.flatnonzero(np.abs(col) > 1e-12 * max(np.max(np.abs(col)), 1e-300))
        if big.size and col[big[0]] < 0:
            v[:, k] = -col
    return v


def kernel_basis(c, tol=DEFAULT_TOL):
    """Orthonormal basis of ``Ker c`` (possibly with zero columns)."""
    c = as_matrix(c)
    n = c.shape[1]
    if c.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, _, vh = np.linalg.svd(c)
    r = numeric_rank(c, tol)
    return _fix_signs(vh[r:].T)


def orth_complement(v, tol=DEFAULT_TOL):
    """Columns completing the orthonormal `v` to a square orthogonal matrix."""
    v = as_matrix(v)
    n, k = v.shape
    if k and np.max(np.abs(v.T @ v - np.eye(k))) > 1e-8:
        raise InvalidBasis("columns are not orthonormal")
    if k == 0:
        return np.eye(n)
    if k == n:
        return np.zeros((n, 0))
    u, _, _ = np.linalg.svd(v, full_matrices=True)
    return _fix_signs(u[:, k:])


def schur_complement(m, split, tol=DEFAULT_TOL):
    """``A - B D^{-1} B^T`` for ``m = [[A, B], [B^T, D]]`` with ``A`` of size `split`."""
    m = _check_sym(m)
    a = m[:split, :split]
    b = m[:split, split:]
    d = m[split:, split:]
    if d.shape[0] == 0:
        return a.copy()
    if numeric_rank(d, tol) < d.shape[0]:
        raise SingularPivot("pivot block is numerically singular")
    return sym(a - b @ np.linalg.solve(d, b.T))


def block_diag(*blocks):
    """Block-diagonal matrix that, unlike scipy's, keeps zero-sized blocks' shapes."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
