"""Deep features for supervised tasks: extraction, linear predictors, metrics, grid search."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .core import ArchitectureSpec, LevelSpec, TrainConfig
from .dataio import SplitSpec, as_data_matrix, rng_for, split_indices
from .errors import InvalidArgumentError
from .generative import FittedModel, encode_many, fit_model
from .kernels import Linear, RBF


class Task(str, Enum):
    REGRESSION = "regression"
    BINARY = "binary_classification"


@dataclass(frozen=True)
class PredictorSpec:
    task: Task = Task.BINARY
    ridge: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if not (math.isfinite(self.ridge) and self.ridge >= 0):
            raise InvalidArgumentError("ridge must be finite and >= 0")


def extract_features(model: FittedModel, X=None, is_training: bool = False) -> np.ndarray:
    """Concatenated hidden features ``[h1 ... hn]``, one row per sample."""
    if is_training:
        return np.hstack(model.state.H)
    return np.hstack(encode_many(model, X))


def fit_predict(F_train, y_train, F_test, spec: PredictorSpec = PredictorSpec()) -> np.ndarray:
    """Ridge least squares with an unpenalized intercept.

    Classification trains on +-1 targets and thresholds the score at zero,
    returning labels in {0, 1}.
    """
    F_train = np.asarray(F_train, dtype=float)
    F_test = np.asarray(F_test, dtype=float)
    y = np.asarray(y_train, dtype=float).ravel()
    if F_train.ndim != 2 or F_train.shape[0] != y.size:
        raise InvalidArgumentError("feature rows and targets disagree")
    if F_test.ndim != 2 or F_test.shape[1] != F_train.shape[1]:
        raise InvalidArgumentError("train and test feature widths disagree")
    if spec.task is Task.BINARY:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise InvalidArgumentError("classification labels must be 0 or 1")
        t = 2.0 * y - 1.0
    else:
        t = y
    A = np.hstack([F_train, np.ones((y.size, 1))])
    G = A.T @ A
    D = np.eye(G.shape[0])
    D[-1, -1] = 0.0
    G = G + spec.ridge * D
    if spec.ridge == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise InvalidArgumentError("normal equations are singular; use ridge > 0")
    w = np.linalg.solve(G, A.T @ t)
    score = np.hstack([F_test, np.ones((F_test.shape[0], 1))]) @ w
    if spec.task is Task.BINARY:
        return (score > 0).astype(int)
    return score


def metrics(pred, truth, task) -> dict:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size == 0 or pred.size != truth.size:
        raise InvalidArgumentError("predictions and truth must be non-empty and of equal length")
    if Task(task) is Task.BINARY:
        return {"ACC": 100.0 * float(np.mean(pred == truth))}
    return {"RMSE": float(np.sqrt(np.mean((pred - truth) ** 2)))}


def _score(m: dict) -> float:
    # larger is better
    return m["ACC"] if "ACC" in m else -m["RMSE"]


# ---------------------------------------------------------------------------
# synthetic task


def make_binary_task(n: int = 200, seed: int = 0, d: int = 6, noise_std: float = 0.05):
    """Labels from a nonlinear rule on two latent factors, observed through a smooth embedding.

    ``z`` is uniform on [-1, 1]^2 and ``y = 1[|z|^2 > 1/2]`` (a disc). The
    inputs are a fixed random linear map of ``(z1, z2, sin(pi z1), cos(pi z2))``
    to ``d`` dimensions plus Gaussian noise. Returns ``(X, y, z)``.
    """
    if n < 10 or d < 2:
        raise InvalidArgumentError("need n >= 10 and d >= 2")
    rng = rng_for(seed, "task")
    z = rng.uniform(-1.0, 1.0, (n, 2))
    feats = np.column_stack([z[:, 0], z[:, 1], np.sin(np.pi * z[:, 0]), np.cos(np.pi * z[:, 1])])
    A = rng.standard_normal((feats.shape[1], d)) / math.sqrt(feats.shape[1])
    X = feats @ A + noise_std * rng.standard_normal((n, d))
    y = (np.sum(z**2, axis=1) > 0.5).astype(int)
    return as_data_matrix(X), y, z


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class FeatureModelSpec:
    """How features are learned: ``sizes`` per level, RBF first level, ``level2`` kernel kind."""

    sizes: tuple = (5,)
    level2: str = "linear"  # "linear" or "rbf"

    def arch(self, sigma2: float, eta2: float = 1.0, sigma2_2: Optional[float] = None) -> ArchitectureSpec:
        levels = [LevelSpec(RBF(sigma2), self.sizes[0], 1.0)]
        for s in self.sizes[1:]:
            k = Linear() if self.level2 == "linear" else RBF(sigma2_2 if sigma2_2 is not None else 1.0)
            levels.append(LevelSpec(k, s, eta2))
        return ArchitectureSpec(levels)


@dataclass
class GridResult:
    params: dict
    val: dict
    test: dict
    trials: list = field(default_factory=list)


def default_sigma2_grid(k: int = 10) -> np.ndarray:
    return np.exp(np.linspace(-2.0, 7.0, k))


def _evaluate(fspec, params, Xtr, ytr, Xev, yev, pspec, config):
    arch = fspec.arch(**params)
    model, _ = fit_model(arch, Xtr, config)
    Ftr = extract_features(model, is_training=True)
    Fev = extract_features(model, Xev)
    pred = fit_predict(Ftr, ytr, Fev, pspec)
    return metrics(pred, yev, pspec.task)


def grid_search(
    X,
    y,
    fspec: FeatureModelSpec,
    split_spec: SplitSpec = SplitSpec(),
    *,
    sigma2_grid: Sequence[float] = None,
    eta2_grid: Sequence[float] = (1.0,),
    sigma2_2_grid: Sequence[Optional[float]] = (None,),
    pspec: PredictorSpec = PredictorSpec(),
    config: TrainConfig = TrainConfig(max_iters=2000),
    workers: int = 1,
) -> GridResult:
    """Pick hyperparameters on the validation split, report the test metric.

    Single-level specs ignore ``eta2_grid`` and ``sigma2_2_grid``. Ties go to
    the earliest grid point, so results are deterministic for any ``workers``.
    """
    X = as_data_matrix(X)
    y = np.asarray(y).ravel()
    tr, va, te = split_indices(X.shape[0], split_spec)
    sig = default_sigma2_grid() if sigma2_grid is None else sigma2_grid
    if len(fspec.sizes) == 1:
        grid = [{"sigma2": float(s)} for s in sig]
    else:
        grid = [
            {"sigma2": float(s), "eta2": float(e), "sigma2_2": s2}
            for s, e, s2 in itertools.product(sig, eta2_grid, sigma2_2_grid)
        ]

    def run(p):
        try:
            return _evaluate(fspec, p, X[tr], y[tr], X[va], y[va], pspec, config)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(run, grid))
    else:
        vals = [run(p) for p in grid]
    trials = [{"params": p, "val": v} for p, v in zip(grid, vals)]
    ok = [(i, v) for i, v in enumerate(vals) if v is not None]
    if not ok:
        raise InvalidArgumentError("every grid point failed")
    best = max(ok, key=lambda iv: (_score(iv[1]), -iv[0]))[0]
    params = grid[best]
    test = _evaluate(fspec, params, X[tr], y[tr], X[te], y[te], pspec, config)
    return GridResult(params, vals[best], test, trials)
