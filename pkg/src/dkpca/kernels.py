"""Kernel functions, kernel matrices and the inter-level coupling matrices.

Two kernels are supported, :class:`Linear` and :class:`RBF`. Each knows how
to evaluate itself, its gradient in the first argument, its Gram matrix, the
coupling matrix it induces on the level below, and the vector-Jacobian
products of those last two (used by :func:`dkpca.core.gradient`).

Kernel matrices are never scaled by a level's ``eta`` here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from . import _core
from .errors import InvalidArgumentError


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.size} vs {y.size}")
    return x, y


@dataclass(frozen=True)
class Linear:
    """``k(x, y) = x^T y``."""

    def to_dict(self):
        return {"type": "linear"}

    def eval(self, x, y) -> float:
        x, y = _check_pair(x, y)
        return float(x @ y)

    def grad(self, z, y) -> np.ndarray:
        z, y = _check_pair(z, y)
        return y.copy()

    def matrix(self, A, B=None) -> np.ndarray:
        A = _as_matrix(A, "A")
        B = A if B is None else _as_matrix(B, "B")
        if A.shape[1] != B.shape[1]:
            raise InvalidArgumentError(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
        return A @ B.T

    def matrix_vjp(self, H, K, P):
        # d<P, H H^T>/dH
        return (P + P.T) @ H

    def coupling(self, H, H_next, K=None):
        return H_next @ (H_next.T @ H)

    def coupling_vjp(self, H, H_next, Q, K=None):
        """Gradients of ``<Q, coupling(H, H_next)>`` w.r.t. ``H`` and ``H_next``."""
        C = H_next @ H_next.T
        dH = C @ Q
        gC = Q @ H.T
        dH_next = (gC + gC.T) @ H_next
        return dH, dH_next


@dataclass(frozen=True)
class RBF:
    """``k(x, y) = exp(-|x - y|^2 / (2 sigma2))``."""

    sigma2: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidArgumentError(f"RBF bandwidth must be > 0, got {self.sigma2}")

    def to_dict(self):
        return {"type": "rbf", "sigma2": float(self.sigma2)}

    def eval(self, x, y) -> float:
        x, y = _check_pair(x, y)
        d = x - y
        return float(np.exp(-(d @ d) / (2.0 * self.sigma2)))

    def grad(self, z, y) -> np.ndarray:
        z, y = _check_pair(z, y)
        d = z - y
        return -(d / self.sigma2) * np.exp(-(d @ d) / (2.0 * self.sigma2))

    def matrix(self, A, B=None) -> np.ndarray:
        A = _as_matrix(A, "A")
        if B is None:
            return _core.rbf_gram(A, None, self.sigma2)
        B = _as_matrix(B, "B")
        if A.shape[1] != B.shape[1]:
            raise InvalidArgumentError(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
        return _core.rbf_gram(A, B, self.sigma2)

    def matrix_vjp(self, H, K, P):
        # d<P, K(H)>/dh_a = sum_k (P + P^T)_ak grad_1 k(h_a, h_k)
        W = (P + P.T) * K
        return -_core.pair_diff_contract(W, H) / self.sigma2

    def coupling(self, H, H_next, K=None):
        return _core.rbf_coupling(H, H_next, self.sigma2)

    def coupling_vjp(self, H, H_next, Q, K=None):
        """Gradients of ``<Q, coupling(H, H_next)>`` w.r.t. ``H`` and ``H_next``.

        With ``A = (H_next H_next^T) * K(H)`` the coupling is
        ``-(diag(A 1) - A) H / sigma2``; the three routes through ``H``
        (explicit factor, ``K`` and nothing else) and the one through
        ``H_next`` are accumulated here.
        """
        if K is None:
            K = self.matrix(H)
        C = H_next @ H_next.T
        A = C * K
        dH = -_core.pair_diff_contract(A, Q) / self.sigma2
        # F[i, n] = d<Q, G>/dA[i, n]
        qh = np.einsum("ij,ij->i", Q, H)
        F = -(qh[:, None] - Q @ H.T) / self.sigma2
        gC = F * K
        dH_next = (gC + gC.T) @ H_next
        dH = dH + self.matrix_vjp(H, K, F * C)
        return dH, dH_next


KernelSpec = Union[Linear, RBF]


def kernel_from_dict(doc) -> KernelSpec:
    kind = str(doc.get("type", "")).lower()
    if kind == "linear":
        return Linear()
    if kind == "rbf":
        return RBF(float(doc["sigma2"]))
    raise InvalidArgumentError(f"unknown kernel type {doc.get('type')!r}")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)``."""
    return spec.eval(x, y)


def kernel_grad(spec: KernelSpec, z, y) -> np.ndarray:
    """Gradient of ``k(z, y)`` with respect to ``z``."""
    return spec.grad(z, y)


def center_kernel(K: np.ndarray) -> np.ndarray:
    """Double-center a square kernel matrix (feature-space mean removal)."""
    n = K.shape[0]
    one = np.full((n, n), 1.0 / n)
    return K - one @ K - K @ one + one @ K @ one


def kernel_matrix(spec: KernelSpec, A, B=None, center: bool = False) -> np.ndarray:
    """Kernel matrix with entry ``(i, k) = k(a_i, b_k)``.

    ``center`` double-centers the result and requires ``B`` to be omitted.
    """
    K = spec.matrix(A, B)
    if center:
        if B is not None:
            raise InvalidArgumentError("centering is only defined for square kernel matrices")
        K = center_kernel(K)
    return K


def coupling_matrix(spec_next: KernelSpec, H_j, H_next) -> np.ndarray:
    """Coupling matrix of level j given the next level's kernel and hidden features.

    Row i is ``sum_n grad_1 k_next(h_i, h_n) * <g_n, g_i>`` where ``h`` are
    rows of ``H_j`` and ``g`` rows of ``H_next``.
    """
    H_j = _as_matrix(H_j, "H_j")
    H_next = _as_matrix(H_next, "H_next")
    if H_j.shape[0] != H_next.shape[0]:
        raise InvalidArgumentError(
            f"row-count mismatch: {H_j.shape[0]} vs {H_next.shape[0]}"
        )
    return spec_next.coupling(H_j, H_next)


def coupling_matrix_loops(spec_next: KernelSpec, H_j, H_next) -> np.ndarray:
    """Reference summation form of :func:`coupling_matrix`, one pair at a time."""
    H_j = _as_matrix(H_j, "H_j")
    H_next = _as_matrix(H_next, "H_next")
    if H_j.shape[0] != H_next.shape[0]:
        raise InvalidArgumentError("row-count mismatch")
    N = H_j.shape[0]
    out = np.zeros_like(H_j)
    for i in range(N):
        for n in range(N):
            out[i] += spec_next.grad(H_j[i], H_j[n]) * float(H_next[n] @ H_next[i])
    return out


def jacobian_stack(spec_next: KernelSpec, H_j) -> np.ndarray:
    """The N^2 x s stack whose block i holds ``grad_1 k(h_i, h_n)^T`` for n = 1..N."""
    H_j = _as_matrix(H_j, "H_j")
    N, s = H_j.shape
    J = np.empty((N * N, s))
    for i in range(N):
        for n in range(N):
            J[i * N + n] = spec_next.grad(H_j[i], H_j[n])
    return J


def coupling_matrix_blockform(spec_next: KernelSpec, H_j, H_next) -> np.ndarray:
    """Coupling via the Khatri-Rao product ``(I_N kr (H' H'^T))^T J``."""
    H_j = _as_matrix(H_j, "H_j")
    H_next = _as_matrix(H_next, "H_next")
    N = H_j.shape[0]
    KR = scipy.linalg.khatri_rao(np.eye(N), H_next @ H_next.T)
    return KR.T @ jacobian_stack(spec_next, H_j)
