"""Out-of-sample encoding, pre-image reconstruction and latent traversals.

Linear levels are inverted exactly through the dual representation; RBF
levels fall back to a kernel smoother over the training latents. For the
two-level model with a linear second level, new points are encoded in
closed form by eliminating the interconnection matrices from the
stationarity conditions; every other architecture uses a kernel smoother.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ArchitectureSpec, DeepState, TrainConfig, analytic_two_level_linear, fit
from .dataio import as_data_matrix, save_csv
from .errors import InvalidArgumentError, NoSupportError
from .kernels import Linear, kernel_matrix


@dataclass
class FittedModel:
    """A trained model together with the (optionally centered) training inputs."""

    arch: ArchitectureSpec
    state: DeepState
    train_data: np.ndarray
    mean: Optional[np.ndarray] = None
    preimage_sigma2: Optional[Sequence[float]] = None
    W1: Optional[np.ndarray] = field(init=False, default=None)

    def __post_init__(self):
        X = as_data_matrix(self.train_data)
        if self.mean is not None:
            self.mean = np.asarray(self.mean, dtype=float).ravel()
            if self.mean.size != X.shape[1]:
                raise InvalidArgumentError("mean has the wrong dimension")
        self.train_data = X
        if self.state.n_levels != self.arch.n_levels:
            raise InvalidArgumentError("state and architecture disagree on depth")
        for j, (lv, h) in enumerate(zip(self.arch.levels, self.state.H), start=1):
            if h.shape != (X.shape[0], lv.s):
                raise InvalidArgumentError(f"level {j}: H shape {h.shape} does not match data")
        if isinstance(self.arch.levels[0].kernel, Linear):
            self.W1 = self._Xc.T @ self.state.H[0] / self.arch.levels[0].eta

    @property
    def _Xc(self):
        return self.train_data if self.mean is None else self.train_data - self.mean

    @property
    def n_levels(self):
        return self.arch.n_levels

    @property
    def d(self):
        return self.train_data.shape[1]

    def closed_form_available(self) -> bool:
        return self.n_levels == 1 or (self.n_levels == 2 and isinstance(self.arch.levels[1].kernel, Linear))

    def kernel_vector(self, x_star) -> np.ndarray:
        x = self._center(x_star)
        return kernel_matrix(self.arch.levels[0].kernel, self._Xc, x[None, :])[:, 0]

    def _center(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.d:
            raise InvalidArgumentError(f"expected a vector of length {self.d}, got {x.size}")
        return x if self.mean is None else x - self.mean

    def level_sigma2(self, j: int) -> float:
        """Bandwidth of the latent-space smoother used to invert RBF level ``j`` (1-based)."""
        if self.preimage_sigma2 is not None:
            return float(self.preimage_sigma2[j - 1])
        H = self.state.H[j - 1]
        sq = np.sum((H[:, None, :] - H[None, :, :]) ** 2, axis=-1)
        med = float(np.median(sq[np.triu_indices(H.shape[0], 1)])) if H.shape[0] > 1 else 1.0
        return med if med > 0 else 1.0


def fit_model(
    arch: ArchitectureSpec,
    X,
    config: TrainConfig = TrainConfig(),
    *,
    center: bool = False,
    preimage_sigma2=None,
):
    """Fit ``arch`` on ``X`` and wrap the result; returns ``(model, report)``."""
    X = as_data_matrix(X)
    mean = X.mean(axis=0) if center else None
    Xc = X if mean is None else X - mean
    state, report = fit(arch, Xc, config)
    return FittedModel(arch, state, X, mean, preimage_sigma2), report


def analytic_model(X, s1: int, s2: int, eta1=1.0, eta2=1.0, *, kernel1=None, center=False):
    """Exact two-level model with linear second level (see :func:`analytic_two_level_linear`)."""
    from .core import two_level_linear

    X = as_data_matrix(X)
    mean = X.mean(axis=0) if center else None
    Xc = X if mean is None else X - mean
    arch = two_level_linear(s1, s2, eta1, eta2, kernel1)
    K1 = kernel_matrix(arch.levels[0].kernel, Xc)
    return FittedModel(arch, analytic_two_level_linear(K1, s1, s2, eta1, eta2), X, mean)


# ---------------------------------------------------------------------------
# encoding


def smoother_weights(kvec, kernel) -> np.ndarray:
    """Normalized weights of the kernel smoother for a vector of kernel values."""
    kvec = np.asarray(kvec, dtype=float)
    if isinstance(kernel, Linear):
        # similarities can be negative: use a softmax instead
        z = np.exp(kvec - kvec.max())
        return z / z.sum()
    total = kvec.sum()
    if not total > 0:
        raise NoSupportError("all kernel weights vanish; the point is outside the training support")
    return kvec / total


def encode_smoother(model: FittedModel, x_star) -> list:
    w = smoother_weights(model.kernel_vector(x_star), model.arch.levels[0].kernel)
    return [w @ H for H in model.state.H]


def _solve_consistent(S, rhs):
    """Solve ``S h = rhs``; min-norm least squares if ``S`` is singular but the system consistent."""
    try:
        cond = np.linalg.cond(S)
    except np.linalg.LinAlgError:
        cond = np.inf
    if np.isfinite(cond) and cond < 1e12:
        return np.linalg.solve(S, rhs)
    h, *_ = np.linalg.lstsq(S, rhs, rcond=1e-10)
    scale = max(1.0, np.abs(rhs).max())
    if np.abs(S @ h - rhs).max() > 1e-8 * scale:
        return None
    return h


def encode_closed_form(model: FittedModel, x_star) -> Optional[list]:
    """Closed-form encoding by elimination; ``None`` when the system cannot be solved."""
    if not model.closed_form_available():
        raise InvalidArgumentError("closed-form encoding needs one level or two levels with linear k2")
    k = model.kernel_vector(x_star)
    lv1 = model.arch.levels[0]
    H1, L1 = model.state.H[0], model.state.Lambda[0]
    if np.any(np.abs(L1) < 1e-12 * max(1.0, np.abs(L1).max())):
        return None
    Hk = H1.T @ k
    if model.n_levels == 1:
        return [Hk / (lv1.eta * L1)]
    eta1, eta2 = lv1.eta, model.arch.levels[1].eta
    H2, L2 = model.state.H[1], model.state.Lambda[1]
    B = H2.T @ H1  # s2 x s1
    S = np.diag(L2) - (B / L1) @ B.T / eta2**2
    rhs = (B / L1) @ Hk / (eta1 * eta2)
    h2 = _solve_consistent(S, rhs)
    if h2 is None:
        return None
    h1 = (Hk / eta1 + B.T @ h2 / eta2) / L1
    return [h1, h2]


def encode_oos(model: FittedModel, x_star, method: str = "auto") -> list:
    """Hidden features of every level for a new input ``x_star``.

    ``method`` is ``"auto"`` (closed form where available, smoother
    otherwise), ``"closed_form"`` or ``"smoother"``.
    """
    if method not in ("auto", "closed_form", "smoother"):
        raise InvalidArgumentError(f"unknown encoding method {method!r}")
    if method == "smoother" or (method == "auto" and not model.closed_form_available()):
        return encode_smoother(model, x_star)
    out = encode_closed_form(model, x_star)
    if out is None:
        warnings.warn("closed-form encoding is singular; falling back to the kernel smoother")
        return encode_smoother(model, x_star)
    return out


def encode_many(model: FittedModel, X, method: str = "auto") -> list:
    """Encode every row of ``X``; returns one N_eval x s_j matrix per level."""
    X = as_data_matrix(X)
    per_row = [encode_oos(model, x, method) for x in X]
    return [np.vstack([r[j] for r in per_row]) for j in range(model.n_levels)]


# ---------------------------------------------------------------------------
# reconstruction


def _latent_smoother(model, a, j):
    # inverse of RBF level j: weights from similarity of a to training latents of level j
    H = model.state.H[j - 1]
    d2 = np.sum((H - a) ** 2, axis=1)
    logits = -(d2 - d2.min()) / (2.0 * model.level_sigma2(j))
    w = np.exp(logits)
    return w / w.sum()


def reconstruct(model: FittedModel, h, level: Optional[int] = None) -> np.ndarray:
    """Map a latent vector of ``level`` (default: the top level) back to input space."""
    n = model.n_levels
    level = n if level is None else int(level)
    if not 1 <= level <= n:
        raise InvalidArgumentError(f"level {level} out of range 1..{n}")
    a = np.asarray(h, dtype=float).ravel()
    if a.size != model.arch.levels[level - 1].s:
        raise InvalidArgumentError(
            f"level {level} latent must have length {model.arch.levels[level - 1].s}, got {a.size}"
        )
    for j in range(level, 1, -1):
        lv = model.arch.levels[j - 1]
        if isinstance(lv.kernel, Linear):
            a = model.state.H[j - 2].T @ (model.state.H[j - 1] @ a) / lv.eta
        else:
            a = _latent_smoother(model, a, j) @ model.state.H[j - 2]
    if model.W1 is not None:
        x = model.W1 @ a
    else:
        x = _latent_smoother(model, a, 1) @ model._Xc
    return x if model.mean is None else x + model.mean


def reconstruction_error(model: FittedModel, X_eval=None, *, training: bool = False, method: str = "auto") -> float:
    """Mean over samples of ``|x - x_hat|^2 / d``.

    With ``training=True`` the stored top-level latents of the training rows
    are decoded directly and ``X_eval`` must be omitted.
    """
    if training:
        if X_eval is not None:
            raise InvalidArgumentError("training=True uses the stored training data")
        X = model.train_data
        top = model.state.H[-1]
    else:
        X = as_data_matrix(X_eval)
        if X.shape[1] != model.d:
            raise InvalidArgumentError(f"expected {model.d} columns, got {X.shape[1]}")
        top = encode_many(model, X, method)[-1]
    Xh = np.vstack([reconstruct(model, t) for t in top])
    return float(np.mean(np.sum((X - Xh) ** 2, axis=1)) / X.shape[1])


# ---------------------------------------------------------------------------
# traversal


@dataclass
class TraversalSpec:
    level: int
    component: int
    grid: Sequence[float]
    base: Optional[Sequence[float]] = None
    base_index: int = 0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float).ravel()
        if self.grid.size == 0:
            raise InvalidArgumentError("traversal grid is empty")
        if not np.all(np.isfinite(self.grid)):
            raise InvalidArgumentError("traversal grid must be finite")

    def manifest(self) -> dict:
        return {
            "level": int(self.level),
            "component": int(self.component),
            "grid": self.grid.tolist(),
            "base": None if self.base is None else [float(v) for v in self.base],
            "base_index": int(self.base_index),
        }


def traverse(model: FittedModel, spec: TraversalSpec) -> np.ndarray:
    """Decode the base latent with one component swept over ``spec.grid``.

    Components are 1-based. Only levels at or below ``spec.level`` are
    recomputed; the base latent belongs to ``spec.level``.
    """
    n = model.n_levels
    if not 1 <= spec.level <= n:
        raise InvalidArgumentError(f"level {spec.level} out of range 1..{n}")
    s = model.arch.levels[spec.level - 1].s
    if not 1 <= spec.component <= s:
        raise InvalidArgumentError(f"component {spec.component} out of range 1..{s}")
    if spec.base is None:
        if not 0 <= spec.base_index < model.train_data.shape[0]:
            raise InvalidArgumentError("base_index out of range")
        base = model.state.H[spec.level - 1][spec.base_index].copy()
    else:
        base = np.asarray(spec.base, dtype=float).ravel().copy()
        if base.size != s:
            raise InvalidArgumentError(f"base must have length {s}")
    out = []
    for v in spec.grid:
        a = base.copy()
        a[spec.component - 1] = v
        out.append(reconstruct(model, a, spec.level))
    return np.vstack(out)


def write_traversal(path_csv, path_manifest, samples, spec: TraversalSpec) -> None:
    save_csv(path_csv, samples)
    with open(path_manifest, "w", encoding="utf-8") as fh:
        json.dump(spec.manifest(), fh, indent=2)


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: FittedModel, report=None) -> dict:
    from .core import state_to_dict

    doc = state_to_dict(model.arch, model.state, report)
    doc["train_data"] = model.train_data.tolist()
    doc["center"] = model.mean is not None
    doc["preimage_sigma2"] = None if model.preimage_sigma2 is None else [float(v) for v in model.preimage_sigma2]
    return doc


def model_from_dict(doc):
    """Rebuild ``(model, report)`` from :func:`model_to_dict` output."""
    from .core import state_from_dict

    if "train_data" not in doc:
        raise InvalidArgumentError("model document has no train_data")
    arch, state, report = state_from_dict(doc)
    X = as_data_matrix(doc["train_data"])
    mean = X.mean(axis=0) if doc.get("center") else None
    return FittedModel(arch, state, X, mean, doc.get("preimage_sigma2")), report
