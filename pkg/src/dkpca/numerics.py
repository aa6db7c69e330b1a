"""Dense linear-algebra helpers: ordered eigenpairs, Stiefel projection, subspace angles.

All tolerances used across the package live in this module so they can be
tuned in one place.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateInputError, InvalidArgumentError

#: maximum allowed asymmetry before ``sym_eig_desc`` refuses a matrix
SYMMETRY_TOL = 1e-8
#: relative gap under which two eigenvalues are treated as one cluster
EIG_CLUSTER_RTOL = 1e-10
#: smallest singular value / largest singular value below which a block is rank deficient
RANK_RTOL = 1e-12
#: orthonormality tolerance for inputs of ``principal_angles``
ORTHO_TOL = 1e-8
#: relative threshold defining numerical rank from an eigenvalue spectrum
NUMERICAL_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class EigPairs:
    """Eigenvalues in non-increasing order with matching orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray


def normalize_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive.

    Ties go to the lowest row index (``argmax`` semantics).
    """
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    rows = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[rows, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _order_clusters(values: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # within a cluster of (numerically) equal eigenvalues order columns
    # lexicographically, largest first; stable but not canonical. Values keep
    # their sorted positions so the sequence stays non-increasing.
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    tol = EIG_CLUSTER_RTOL * scale
    order = np.arange(values.size)
    start = 0
    while start < values.size:
        stop = start + 1
        while stop < values.size and values[stop - 1] - values[stop] <= tol:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            keys = [tuple(-block[:, k]) for k in range(block.shape[1])]
            local = sorted(range(block.shape[1]), key=lambda k: keys[k])
            order[start:stop] = start + np.asarray(local)
        start = stop
    return values, vectors[:, order]


def sym_eig_desc(S: np.ndarray) -> EigPairs:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    The matrix is symmetrized as ``(S + S.T) / 2`` before decomposition.
    Each eigenvector's largest-magnitude entry is made positive.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidArgumentError("matrix has non-finite entries")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(S), initial=0.0)):
        raise InvalidArgumentError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w = w[::-1].copy()
    V = normalize_signs(V[:, ::-1])
    w, V = _order_clusters(w, V)
    return EigPairs(values=w, vectors=V)


def stiefel_project(A: np.ndarray) -> np.ndarray:
    """Euclidean projection of an N x s matrix onto the Stiefel manifold.

    Computed as ``U @ Vt`` from the compact SVD. Raises
    :class:`DegenerateInputError` when ``A`` is numerically rank deficient.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] > A.shape[0]:
        raise InvalidArgumentError(f"expected a tall N x s matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DegenerateInputError("matrix has non-finite entries")
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if sv.size and (sv[0] == 0.0 or sv[-1] <= RANK_RTOL * sv[0]):
        raise DegenerateInputError(
            f"rank-deficient input (singular values {sv[0]:.3e} .. {sv[-1]:.3e})"
        )
    return U @ Vt


def orthonormality_error(H: np.ndarray) -> float:
    """``max |H^T H - I|``."""
    H = np.asarray(H, dtype=float)
    return float(np.max(np.abs(H.T @ H - np.eye(H.shape[1])), initial=0.0))


def principal_angles(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans of U and V."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if V.ndim == 1:
        V = V[:, None]
    if U.shape != V.shape:
        raise InvalidArgumentError(f"shape mismatch {U.shape} vs {V.shape}")
    for name, M in (("U", U), ("V", V)):
        err = orthonormality_error(M)
        if err > ORTHO_TOL:
            raise InvalidArgumentError(f"{name} is not orthonormal (error {err:.3e})")
    # scipy uses the sine/cosine split, accurate for tiny angles
    angles = scipy.linalg.subspace_angles(U, V)
    return np.clip(np.sort(angles), 0.0, np.pi / 2)


def numerical_rank(values: np.ndarray, rtol: float = NUMERICAL_RANK_RTOL) -> int:
    """Count of eigenvalues whose magnitude exceeds ``rtol * max |value|``."""
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0 or values.max() == 0.0:
        return 0
    return int(np.count_nonzero(values > rtol * values.max()))
