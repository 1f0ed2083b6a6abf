"""Dense factorizations with fixed conventions.

Matrices are plain C-order float64 ndarrays throughout the package. LAPACK
(via numpy) does the heavy lifting; these wrappers pin down the conventions
callers rely on: economy sizes, non-increasing singular values, and a QR with
non-negative diagonal so the factorization is unique.
"""

import numpy as np

from .errors import ShapeError


def _as_matrix(a, op):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{op} expects a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{op} requires finite entries")
    return a


def thin_svd(a):
    """Economy SVD: a ~= u @ diag(s) @ vt.T with s non-increasing >= 0.

    Returns (u, s, v) where u is rows x k, v is cols x k, k = min(shape).
    """
    a = _as_matrix(a, "thin_svd")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ShapeError(
            f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} matrix"
        ) from exc
    return u, s, vt.T


def thin_qr(a):
    """Economy QR with diag(R) >= 0.

    Sign-normalizing the rows of R (and matching columns of Q) makes the
    factorization unique for full-rank input; rank deficiency just leaves
    zero diagonal entries, which is allowed.
    """
    a = _as_matrix(a, "thin_qr")
    if a.shape[0] < a.shape[1]:
        raise ShapeError(f"thin_qr needs rows >= cols, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    flip = np.where(np.diag(r) < 0, -1.0, 1.0)
    q = q * flip
    r = r * flip[:, None]
    return q, r
