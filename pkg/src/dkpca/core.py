"""Deep kernel PCA model: architecture, residual objective, gradients and training.

Every level j carries hidden features ``H[j]`` (N x s_j, orthonormal columns)
and deep eigenvalues ``Lambda[j]`` (length s_j). The residual of level j is::

    R_j = K_j H_j / eta_j + G_j / eta_{j+1} - H_j diag(Lambda_j)

where ``K_1`` is the data kernel matrix, ``K_j = k_j(H_{j-1})`` for j >= 2,
``G_j`` is the coupling matrix induced by the next level's kernel, and the
last level has no coupling term. Training minimizes::

    J = 1/2 |R_1|^2 + sum_{j >= 2} |R_j|^2

over the product of Stiefel manifolds (and unconstrained ``Lambda``) with
projected gradient descent and per-block Armijo backtracking.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, NumericalFailure
from .kernels import KernelSpec, Linear, kernel_from_dict, kernel_matrix
from .numerics import normalize_signs, orthonormality_error, stiefel_project, sym_eig_desc

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LevelSpec:
    kernel: KernelSpec
    s: int
    eta: float = 1.0

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise InvalidArgumentError(f"s must be a positive integer, got {self.s}")
        if self.eta == 0 or not math.isfinite(self.eta):
            raise InvalidArgumentError(f"eta must be finite and non-zero, got {self.eta}")

    def to_dict(self):
        return {"kernel": self.kernel.to_dict(), "s": int(self.s), "eta": float(self.eta)}

    @classmethod
    def from_dict(cls, doc):
        return cls(kernel_from_dict(doc["kernel"]), int(doc["s"]), float(doc.get("eta", 1.0)))


@dataclass(frozen=True)
class ArchitectureSpec:
    levels: tuple

    def __init__(self, levels: Sequence[LevelSpec]):
        levels = tuple(levels)
        if not levels:
            raise InvalidArgumentError("an architecture needs at least one level")
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> list[int]:
        return [lv.s for lv in self.levels]

    def to_dict(self):
        return {"levels": [lv.to_dict() for lv in self.levels]}

    @classmethod
    def from_dict(cls, doc):
        return cls([LevelSpec.from_dict(d) for d in doc["levels"]])

    def check(self, N: int) -> None:
        for j, lv in enumerate(self.levels, start=1):
            if lv.s > N:
                raise InvalidArgumentError(f"level {j}: s={lv.s} exceeds N={N}")


def two_level_linear(s1: int, s2: int, eta1: float = 1.0, eta2: float = 1.0, kernel1=None):
    """Two levels with a linear second-level kernel (first level linear by default)."""
    return ArchitectureSpec(
        [LevelSpec(kernel1 or Linear(), s1, eta1), LevelSpec(Linear(), s2, eta2)]
    )


@dataclass
class DeepState:
    """Hidden features and deep eigenvalues of every level."""

    H: list
    Lambda: list

    def __post_init__(self):
        self.H = [np.asarray(h, dtype=float) for h in self.H]
        self.Lambda = [np.asarray(l, dtype=float).ravel() for l in self.Lambda]
        if len(self.H) != len(self.Lambda):
            raise InvalidArgumentError("H and Lambda must have one entry per level")
        for j, (h, l) in enumerate(zip(self.H, self.Lambda), start=1):
            if h.ndim != 2 or h.shape[1] != l.size:
                raise InvalidArgumentError(f"level {j}: H shape {h.shape} vs Lambda size {l.size}")

    @property
    def n_levels(self):
        return len(self.H)

    @property
    def N(self):
        return self.H[0].shape[0]

    def copy(self):
        return DeepState([h.copy() for h in self.H], [l.copy() for l in self.Lambda])

    def orthonormality_error(self) -> float:
        return max(orthonormality_error(h) for h in self.H)

    def negative_eigenvalues(self):
        """(level, index) pairs, 1-based, of deep eigenvalues below zero."""
        return [
            (j, i)
            for j, l in enumerate(self.Lambda, start=1)
            for i in np.flatnonzero(l < 0) + 1
        ]


class Init(str, Enum):
    SHALLOW_WARM_START = "shallow_warm_start"
    RANDOM_ORTHONORMAL = "random_orthonormal"


@dataclass(frozen=True)
class TrainConfig:
    epsilon: float = 1e-5
    max_iters: int = 20000
    alpha0: float = 1.0
    shrink: float = 0.5
    armijo_c: float = 1e-4
    max_halvings: int = 40
    seed: int = 0
    init: Init = Init.SHALLOW_WARM_START

    def __post_init__(self):
        object.__setattr__(self, "init", Init(self.init))
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be > 0")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if not self.alpha0 > 0:
            raise InvalidArgumentError("alpha0 must be > 0")
        if not 0 < self.shrink < 1 or not 0 < self.armijo_c < 1:
            raise InvalidArgumentError("shrink and armijo_c must lie in (0, 1)")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["init"] = self.init.value
        return d


@dataclass
class FitReport:
    objective_trace: list = field(default_factory=list)
    level_residuals: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    max_orthonormality_error: float = 0.0
    negative_eigenvalues: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["negative_eigenvalues"] = [[int(a), int(b)] for a, b in self.negative_eigenvalues]
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["negative_eigenvalues"] = [tuple(p) for p in doc.get("negative_eigenvalues", [])]
        return cls(**doc)


# ---------------------------------------------------------------------------
# level quantities


def _check_state(arch: ArchitectureSpec, state: DeepState, K1) -> None:
    if state.n_levels != arch.n_levels:
        raise InvalidArgumentError(
            f"state has {state.n_levels} levels, architecture has {arch.n_levels}"
        )
    N = K1.shape[0]
    if K1.shape != (N, N):
        raise InvalidArgumentError(f"K1 must be square, got {K1.shape}")
    for j, (lv, h) in enumerate(zip(arch.levels, state.H), start=1):
        if h.shape != (N, lv.s):
            raise InvalidArgumentError(f"level {j}: expected H of shape {(N, lv.s)}, got {h.shape}")


def _kernels(arch, H, K1):
    # K[0] = K1, K[j] = k_{j+1}(H[j-1]) (0-based)
    return [K1] + [arch.levels[j].kernel.matrix(H[j - 1]) for j in range(1, arch.n_levels)]


def _couplings(arch, H, Ks):
    n = arch.n_levels
    return [arch.levels[j + 1].kernel.coupling(H[j], H[j + 1], Ks[j + 1]) for j in range(n - 1)]


def _weights(n_levels):
    return [0.5] + [1.0] * (n_levels - 1)


def _residuals(arch, H, Lam, Ks, Gs):
    out = []
    for j, lv in enumerate(arch.levels):
        R = Ks[j] @ H[j] / lv.eta - H[j] * Lam[j]
        if j < arch.n_levels - 1:
            R = R + Gs[j] / arch.levels[j + 1].eta
        out.append(R)
    return out


def residuals(arch: ArchitectureSpec, state: DeepState, K1) -> list:
    """Per-level residual matrices of the coupled eigen-equations."""
    K1 = np.asarray(K1, dtype=float)
    _check_state(arch, state, K1)
    Ks = _kernels(arch, state.H, K1)
    return _residuals(arch, state.H, state.Lambda, Ks, _couplings(arch, state.H, Ks))


def _objective(arch, H, Lam, K1):
    Ks = _kernels(arch, H, K1)
    Rs = _residuals(arch, H, Lam, Ks, _couplings(arch, H, Ks))
    norms = [float(np.linalg.norm(R)) for R in Rs]
    J = sum(w * r * r for w, r in zip(_weights(arch.n_levels), norms))
    return J, norms


def objective(arch: ArchitectureSpec, state: DeepState, K1):
    """Residual objective ``J`` and the unsquared Frobenius norm of each level residual."""
    K1 = np.asarray(K1, dtype=float)
    _check_state(arch, state, K1)
    return _objective(arch, state.H, state.Lambda, K1)


def _gradient(arch, H, Lam, K1):
    n = arch.n_levels
    Ks = _kernels(arch, H, K1)
    Gs = _couplings(arch, H, Ks)
    Rs = _residuals(arch, H, Lam, Ks, Gs)
    gH = [np.zeros_like(h) for h in H]
    gL = []
    for j, (lv, w) in enumerate(zip(arch.levels, _weights(n))):
        B = 2.0 * w * Rs[j]
        gH[j] += Ks[j] @ B / lv.eta - B * Lam[j]
        gL.append(-np.einsum("ij,ij->j", H[j], B))
        if j > 0:
            gH[j - 1] += lv.kernel.matrix_vjp(H[j - 1], Ks[j], B @ H[j].T / lv.eta)
        if j < n - 1:
            nxt = arch.levels[j + 1]
            dH, dH_next = nxt.kernel.coupling_vjp(H[j], H[j + 1], B / nxt.eta, Ks[j + 1])
            gH[j] += dH
            gH[j + 1] += dH_next
    return gH, gL


def gradient(arch: ArchitectureSpec, state: DeepState, K1):
    """Euclidean gradients of ``J`` with respect to every ``H[j]`` and ``Lambda[j]``."""
    K1 = np.asarray(K1, dtype=float)
    _check_state(arch, state, K1)
    return _gradient(arch, state.H, state.Lambda, K1)


def level_matrix(arch: ArchitectureSpec, state: DeepState, K1, j: int) -> np.ndarray:
    """The N x N matrix whose eigen-equation level ``j`` (1-based) solves."""
    K1 = np.asarray(K1, dtype=float)
    _check_state(arch, state, K1)
    if not 1 <= j <= arch.n_levels:
        raise InvalidArgumentError(f"level index {j} out of range 1..{arch.n_levels}")
    i = j - 1
    lv = arch.levels[i]
    K = K1 if i == 0 else lv.kernel.matrix(state.H[i - 1])
    M = K / lv.eta
    if i < arch.n_levels - 1:
        nxt = arch.levels[i + 1]
        Hn = state.H[i + 1]
        if isinstance(nxt.kernel, Linear):
            # G H^T = Hn Hn^T H H^T; the symmetric form agrees on span(H)
            M = M + Hn @ Hn.T / nxt.eta
        else:
            Kn = nxt.kernel.matrix(state.H[i])
            G = nxt.kernel.coupling(state.H[i], Hn, Kn)
            M = M + G @ state.H[i].T / nxt.eta
    return M


# ---------------------------------------------------------------------------
# closed-form solutions


def shallow_kpca(K, s: int, eta: float = 1.0):
    """Top-``s`` eigenpairs of ``K / eta``: hidden features and eigenvalues."""
    K = np.asarray(K, dtype=float)
    if s > K.shape[0] or s < 1:
        raise InvalidArgumentError(f"need 1 <= s <= N, got s={s}, N={K.shape[0]}")
    if eta == 0:
        raise InvalidArgumentError("eta must be non-zero")
    pairs = sym_eig_desc(K / eta)
    return pairs.vectors[:, :s].copy(), pairs.values[:s].copy()


def analytic_two_level_linear(K1, s1: int, s2: int, eta1: float = 1.0, eta2: float = 1.0) -> DeepState:
    """Exact stationary point of the two-level model with a linear second level.

    ``H1`` holds the top ``s1`` eigenvectors of ``K1``, ``H2`` its first
    ``s2`` columns; ``Lambda1`` is shifted by ``1/eta2`` on those columns and
    ``Lambda2 = 1/eta2``.
    """
    K1 = np.asarray(K1, dtype=float)
    N = K1.shape[0]
    if not 1 <= s2 <= s1 <= N:
        raise InvalidArgumentError(f"need 1 <= s2 <= s1 <= N, got s1={s1}, s2={s2}, N={N}")
    pairs = sym_eig_desc(K1)
    H1 = pairs.vectors[:, :s1].copy()
    L1 = pairs.values[:s1] / eta1
    L1[:s2] += 1.0 / eta2
    H2 = H1[:, :s2].copy()
    L2 = np.full(s2, 1.0 / eta2)
    return DeepState([H1, H2], [L1, L2])


# ---------------------------------------------------------------------------
# initialization


def _linear_level_eigvecs(H_prev: np.ndarray, s: int) -> np.ndarray:
    # H_prev H_prev^T has eigenvalue 1 on span(H_prev) and 0 elsewhere; take
    # H_prev's own columns first, then an orthonormal complement
    t = H_prev.shape[1]
    if s <= t:
        return H_prev[:, :s].copy()
    N = H_prev.shape[0]
    P = np.eye(N) - H_prev @ H_prev.T
    comp = sym_eig_desc(P).vectors[:, : s - t]
    return np.hstack([H_prev, comp])


def _random_state(arch, N, seed):
    rng = np.random.default_rng(seed)
    H = [stiefel_project(rng.standard_normal((N, lv.s))) for lv in arch.levels]
    return DeepState(H, [np.ones(lv.s) for lv in arch.levels])


def _rayleigh_lambdas(arch, state, K1):
    return [
        np.einsum("ij,ij->j", state.H[j], level_matrix(arch, state, K1, j + 1) @ state.H[j])
        for j in range(arch.n_levels)
    ]


def init_state(arch: ArchitectureSpec, K1, config: TrainConfig = TrainConfig()) -> DeepState:
    """Starting point for :func:`fit`.

    Warm start solves each level's shallow problem in sequence (the kernel of
    level j built from the features of level j-1), then sets every
    ``Lambda[j]`` to the Rayleigh quotients of the coupled level matrices.
    Random start draws seeded Gaussian matrices and projects them.
    """
    K1 = np.asarray(K1, dtype=float)
    N = K1.shape[0]
    arch.check(N)
    if config.init is Init.RANDOM_ORTHONORMAL:
        return _random_state(arch, N, config.seed)
    try:
        H, L = [], []
        h, l = shallow_kpca(K1, arch.levels[0].s, arch.levels[0].eta)
        H.append(h)
        L.append(l)
        for lv in arch.levels[1:]:
            if isinstance(lv.kernel, Linear):
                h = _linear_level_eigvecs(H[-1], lv.s)
                l = np.einsum("ij,ij->j", h, H[-1] @ (H[-1].T @ h)) / lv.eta
            else:
                h, l = shallow_kpca(lv.kernel.matrix(H[-1]), lv.s, lv.eta)
            stiefel_project(h)  # rank check
            H.append(h)
            L.append(l)
        state = DeepState(H, L)
        if arch.n_levels > 1:
            state.Lambda = _rayleigh_lambdas(arch, state, K1)
        return state
    except DegenerateInputError as exc:
        warnings.warn(f"warm start failed ({exc}); using a random orthonormal start")
        return _random_state(arch, N, config.seed)


# ---------------------------------------------------------------------------
# training


def _sort_levels(state: DeepState) -> DeepState:
    H, L = [], []
    for h, l in zip(state.H, state.Lambda):
        order = np.argsort(-l, kind="stable")
        H.append(normalize_signs(h[:, order]))
        L.append(l[order].copy())
    return DeepState(H, L)


def fit(
    arch: ArchitectureSpec,
    X=None,
    config: TrainConfig = TrainConfig(),
    *,
    K1=None,
    init: Optional[DeepState] = None,
    callback: Optional[Callable[[int, DeepState, float], None]] = None,
):
    """Train by projected gradient descent with per-block backtracking.

    Pass either data ``X`` (the level-1 kernel is applied) or a precomputed
    ``K1``. Every ``H[j]`` and ``Lambda[j]`` is a block; each block gets its
    own Armijo stepsize starting at ``alpha0``, then all blocks move together.
    If the joint move fails the Armijo test the stepsizes are shrunk together.
    ``callback(iteration, state, J)`` runs after every accepted iteration.

    Returns ``(state, report)``; non-convergence is reported, not raised.
    """
    if (X is None) == (K1 is None):
        raise InvalidArgumentError("pass exactly one of X or K1")
    if K1 is None:
        K1 = kernel_matrix(arch.levels[0].kernel, X)
    K1 = np.asarray(K1, dtype=float)
    N = K1.shape[0]
    if K1.shape != (N, N) or not np.all(np.isfinite(K1)):
        raise InvalidArgumentError("K1 must be a finite square matrix")
    arch.check(N)

    state = init.copy() if init is not None else init_state(arch, K1, config)
    _check_state(arch, state, K1)
    report = FitReport()
    reseeded = set()

    H, Lam = state.H, state.Lambda
    J, norms = _objective(arch, H, Lam, K1)
    report.objective_trace.append(J)
    report.max_orthonormality_error = state.orthonormality_error()
    n = arch.n_levels
    c = config.armijo_c

    def project(j, A):
        try:
            return stiefel_project(A)
        except DegenerateInputError:
            if j in reseeded:
                raise NumericalFailure(f"level {j + 1}: projection degenerate twice") from None
            reseeded.add(j)
            msg = f"level {j + 1}: degenerate projection input, re-randomized"
            report.warnings.append(msg)
            log.warning(msg)
            rng = np.random.default_rng(config.seed + 1000 + j)
            return stiefel_project(A + 1e-6 * rng.standard_normal(A.shape))

    def candidate(kind, j, alpha, gH, gL):
        if kind == "H":
            return project(j, H[j] - alpha * gH[j])
        return Lam[j] - alpha * gL[j]

    def with_block(kind, j, value):
        if kind == "H":
            return [value if i == j else H[i] for i in range(n)], Lam
        return H, [value if i == j else Lam[i] for i in range(n)]

    blocks = [("H", j) for j in range(n)] + [("L", j) for j in range(n)]

    for it in range(1, config.max_iters + 1):
        gH, gL = _gradient(arch, H, Lam, K1)
        steps = {}
        for kind, j in blocks:
            cur = H[j] if kind == "H" else Lam[j]
            alpha = config.alpha0
            accepted = False
            for _ in range(config.max_halvings + 1):
                new = candidate(kind, j, alpha, gH, gL)
                delta = new - cur
                dd = float(np.sum(delta * delta))
                Jb, _ = _objective(arch, *with_block(kind, j, new), K1)
                if Jb <= J - (c / alpha) * dd:
                    accepted = True
                    break
                alpha *= config.shrink
            steps[(kind, j)] = (alpha, new, delta, dd, accepted)

        # stationarity test: change / stepsize, including failed blocks
        stat = max(
            float(np.max(np.abs(d), initial=0.0)) / a for a, _, d, _, _ in steps.values()
        )
        movers = {k: v for k, v in steps.items() if v[4] and v[3] > 0}
        if not movers:
            report.iterations = it
            report.converged = stat <= config.epsilon
            if not report.converged:
                report.warnings.append("line search failed in every block")
            break

        scale = 1.0
        for _ in range(config.max_halvings + 1):
            newH, newL = list(H), list(Lam)
            decrease = 0.0
            for (kind, j), (alpha, new, delta, dd, _) in movers.items():
                if scale != 1.0:
                    new = candidate(kind, j, alpha * scale, gH, gL)
                    cur = H[j] if kind == "H" else Lam[j]
                    dd = float(np.sum((new - cur) ** 2))
                if kind == "H":
                    newH[j] = new
                else:
                    newL[j] = new
                decrease += (c / (alpha * scale)) * dd
            Jn, norms_n = _objective(arch, newH, newL, K1)
            if Jn <= J - decrease:
                break
            scale *= config.shrink
        else:
            # fall back to the single best block, which passed its own test
            key = min(movers, key=lambda k: _objective(arch, *with_block(k[0], k[1], movers[k][1]), K1)[0])
            newH, newL = with_block(key[0], key[1], movers[key][1])
            Jn, norms_n = _objective(arch, newH, newL, K1)

        H, Lam, J, norms = newH, newL, Jn, norms_n
        report.objective_trace.append(J)
        err = max(orthonormality_error(h) for h in H)
        report.max_orthonormality_error = max(report.max_orthonormality_error, err)
        if callback is not None:
            callback(it, DeepState(H, Lam), J)
        report.iterations = it
        if stat <= config.epsilon:
            report.converged = True
            break

    state = _sort_levels(DeepState(H, Lam))
    J, norms = _objective(arch, state.H, state.Lambda, K1)
    report.level_residuals = norms
    report.negative_eigenvalues = state.negative_eigenvalues()
    return state, report


# ---------------------------------------------------------------------------
# serialization


def state_to_dict(arch: ArchitectureSpec, state: DeepState, report: Optional[FitReport] = None):
    return {
        "schema_version": SCHEMA_VERSION,
        "arch": arch.to_dict(),
        "H": [h.tolist() for h in state.H],
        "Lambda": [l.tolist() for l in state.Lambda],
        "fit_report": None if report is None else report.to_dict(),
    }


def state_from_dict(doc):
    """Inverse of :func:`state_to_dict`: returns ``(arch, state, report)``."""
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InvalidArgumentError(f"unsupported schema_version {version!r}")
    arch = ArchitectureSpec.from_dict(doc["arch"])
    state = DeepState(
        [np.array(h, dtype=float).reshape(-1, lv.s) for h, lv in zip(doc["H"], arch.levels)],
        [np.array(l, dtype=float) for l in doc["Lambda"]],
    )
    rep = doc.get("fit_report")
    return arch, state, (None if rep is None else FitReport.from_dict(rep))


def dumps_state(arch, state, report=None, **extra) -> str:
    # json writes floats with repr(), the shortest string that round-trips exactly
    doc = state_to_dict(arch, state, report)
    doc.update(extra)
    return json.dumps(doc)


def loads_state(text: str):
    return state_from_dict(json.loads(text))
