"""Pure numpy implementations of the hot kernels.

Signatures match the compiled ``_ext`` module exactly.
"""
import numpy as np
from scipy.spatial.distance import cdist


def sqdist(A, B):
    """Pairwise squared Euclidean distances between rows of A and rows of B."""
    return cdist(A, B, "sqeuclidean")


def rbf_gram(A, B, sigma2):
    """``exp(-|a_i - b_k|^2 / (2 sigma2))`` for every pair of rows."""
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * sigma2))


def rbf_coupling(H, H_next, sigma2):
    """Row i: ``sum_n grad_1 k(h_i, h_n) * <g_n, g_i>`` with g the rows of ``H_next``."""
    K = rbf_gram(H, H, sigma2)
    A = (H_next @ H_next.T) * K
    return (A @ H - A.sum(axis=1)[:, None] * H) / sigma2


def pair_diff_contract(W, H):
    """Row a: ``sum_k W[a, k] * (h_a - h_k)``."""
    return W.sum(axis=1)[:, None] * H - W @ H
