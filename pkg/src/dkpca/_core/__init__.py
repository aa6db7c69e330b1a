"""Hot kernels with a compiled implementation and a numpy fallback.

The compiled ``_ext`` module is used when it imports; otherwise the numpy
fallback is selected. Set ``DKPCA_BACKEND=python`` to force the fallback.
``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _fallback

if os.environ.get("DKPCA_BACKEND", "").lower() == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ext as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def available_backends():
    """Mapping name -> module for every implementation importable here."""
    out = {"python": _fallback}
    try:
        from . import _ext

        out["cython"] = _ext
    except ImportError:
        pass
    return out


def _pair(A, B):
    # keep one buffer when both arguments are the same matrix (symmetric fast path)
    A = _c(A)
    return A, (A if B is None or B is A else _c(B))


def sqdist(A, B=None):
    return _impl.sqdist(*_pair(A, B))


def rbf_gram(A, B, sigma2):
    return _impl.rbf_gram(*_pair(A, B), float(sigma2))


def rbf_coupling(H, H_next, sigma2):
    return _impl.rbf_coupling(_c(H), _c(H_next), float(sigma2))


def pair_diff_contract(W, H):
    return _impl.pair_diff_contract(_c(W), _c(H))
