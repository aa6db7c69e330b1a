"""Synthetic datasets, CSV ingestion and seeded train/validation/test splits.

Random numbers come from numpy's PCG64. Each generator draws from its own
stream, derived as ``SeedSequence(seed, spawn_key=(STREAM_ID,))``, so adding
a consumer never shifts the numbers another one sees:

=========================  ==========
purpose                    stream id
=========================  ==========
square noise               1
complex-shape layout       2
gaussian covariance        3
gaussian samples           4
split permutation          5
downstream task            6
=========================  ==========
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CsvParseError, InvalidArgumentError

STREAMS = {
    "square_noise": 1,
    "complex_layout": 2,
    "gaussian_cov": 3,
    "gaussian_samples": 4,
    "split": 5,
    "task": 6,
}

DEFAULT_NOISE_STD = 0.05
RING_RADIUS = 1.5
SPIRAL_R0 = 0.1
SPIRAL_RATE = 0.3
SPIRAL_TURNS = 4 * np.pi


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Independent PCG64 generator for ``purpose`` derived from ``seed``."""
    if seed < 0:
        raise InvalidArgumentError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[purpose],))
    return np.random.Generator(np.random.PCG64(ss))


def as_data_matrix(values) -> np.ndarray:
    """Validate and freeze an N x d sample matrix (rows are samples)."""
    X = np.array(values, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidArgumentError(f"data must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("data contains non-finite entries")
    X.flags.writeable = False
    return X


def _square_perimeter(t: np.ndarray) -> np.ndarray:
    # t in [0, 8): arc length along the square [-1, 1]^2, counter-clockwise from (-1, -1)
    t = np.mod(t, 8.0)
    side = np.floor(t / 2.0).astype(int)
    u = t - 2.0 * side - 1.0  # in [-1, 1)
    x = np.select([side == 0, side == 1, side == 2], [u, np.ones_like(u), -u], -np.ones_like(u))
    y = np.select([side == 0, side == 1, side == 2], [-np.ones_like(u), u, np.ones_like(u)], -u)
    return np.column_stack([x, y])


def gen_synth_square(n: int, noise_std: float = DEFAULT_NOISE_STD, seed: int = 0) -> np.ndarray:
    """Points evenly spaced (by arc length) on the perimeter of [-1, 1]^2, plus noise.

    Spacing is offset by half a step so that no point lands on a corner when
    ``n`` is a multiple of 4.
    """
    if n < 4:
        raise InvalidArgumentError(f"need n >= 4, got {n}")
    if noise_std < 0:
        raise InvalidArgumentError("noise_std must be >= 0")
    t = (np.arange(n) + 0.5) * (8.0 / n)
    X = _square_perimeter(t)
    if noise_std > 0:
        X = X + noise_std * rng_for(seed, "square_noise").standard_normal(X.shape)
    return as_data_matrix(X)


def _group_sizes(n: int, groups: int) -> list[int]:
    base, extra = divmod(n, groups)
    return [base + (1 if g < extra else 0) for g in range(groups)]


def gen_synth_complex(n: int, seed: int = 0, noise_std: float = DEFAULT_NOISE_STD) -> np.ndarray:
    """Square, two spirals of opposite chirality and a ring, in that row order."""
    if n < 8:
        raise InvalidArgumentError(f"need n >= 8, got {n}")
    rng = rng_for(seed, "complex_layout")
    n_sq, n_sp1, n_sp2, n_ring = _group_sizes(n, 4)

    square = _square_perimeter(rng.uniform(0.0, 8.0, n_sq))

    def spiral(m, chirality):
        theta = rng.uniform(0.0, SPIRAL_TURNS, m)
        r = SPIRAL_R0 + SPIRAL_RATE * theta
        return np.column_stack([r * np.cos(theta), chirality * r * np.sin(theta)])

    sp1 = spiral(n_sp1, 1.0)
    sp2 = -spiral(n_sp2, -1.0)
    phi = rng.uniform(0.0, 2 * np.pi, n_ring)
    ring = RING_RADIUS * np.column_stack([np.cos(phi), np.sin(phi)])

    X = np.vstack([square, sp1, sp2, ring])
    X = X + noise_std * rng.standard_normal(X.shape)
    return as_data_matrix(X)


def synth_gaussian_covariance(d: int, seed: int) -> np.ndarray:
    """The fixed SPD covariance ``A^T A / d + 0.1 I`` used by :func:`gen_synth_gaussian`."""
    A = rng_for(seed, "gaussian_cov").standard_normal((d, d))
    return A.T @ A / d + 0.1 * np.eye(d)


def gen_synth_gaussian(n: int, d: int = 140, seed: int = 0) -> np.ndarray:
    """Zero-mean Gaussian samples with a seeded SPD covariance.

    Rows are generated in order from one stream, so the first rows do not
    depend on ``n``.
    """
    if n < 1 or d < 1:
        raise InvalidArgumentError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    L = np.linalg.cholesky(synth_gaussian_covariance(d, seed))
    Z = rng_for(seed, "gaussian_samples").standard_normal((n, d))
    return as_data_matrix(Z @ L.T)


def _parse_rows(path, header: bool):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = None
    if header:
        if not rows:
            raise CsvParseError("missing header", row=1)
        names = [c.strip() for c in rows[0]]
        body_start = 2
        rows = rows[1:]
    else:
        body_start = 1
    rows = [(i + body_start, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise CsvParseError("no data rows", row=body_start)
    width = len(rows[0][1])
    if names is not None and len(names) != width:
        raise CsvParseError(f"header has {len(names)} columns, data has {width}", row=1)
    values = np.empty((len(rows), width))
    for k, (lineno, r) in enumerate(rows):
        if len(r) != width:
            raise CsvParseError(f"expected {width} columns, found {len(r)}", row=lineno)
        for c, cell in enumerate(r):
            try:
                values[k, c] = float(cell)
            except ValueError:
                raise CsvParseError(f"non-numeric cell {cell!r}", row=lineno, col=c + 1) from None
            if not np.isfinite(values[k, c]):
                raise CsvParseError(f"non-finite cell {cell!r}", row=lineno, col=c + 1)
    return names, values


def load_csv(path, header: bool = False) -> np.ndarray:
    """Read a numeric, rectangular, comma-separated file (UTF-8, '.' decimals)."""
    _, values = _parse_rows(path, header)
    return as_data_matrix(values)


def load_csv_with_target(path, target_col, header: bool = False):
    """Split a CSV into features and a target column.

    ``target_col`` is a column name (requires ``header``) or an integer index;
    negative indices count from the end.
    """
    names, values = _parse_rows(path, header)
    if isinstance(target_col, str) and not target_col.lstrip("-").isdigit():
        if names is None:
            raise InvalidArgumentError("a named target column requires a header row")
        if target_col not in names:
            raise InvalidArgumentError(f"target column {target_col!r} not in header {names}")
        idx = names.index(target_col)
    else:
        idx = int(target_col)
        if not -values.shape[1] <= idx < values.shape[1]:
            raise InvalidArgumentError(f"target column index {idx} out of range")
        idx %= values.shape[1]
    y = values[:, idx].copy()
    X = np.delete(values, idx, axis=1)
    return as_data_matrix(X), y


def save_csv(path, values, header=None) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fracs):
            raise InvalidArgumentError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise InvalidArgumentError(f"split fractions must sum to 1, got {sum(fracs)!r}")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")


def split_indices(n: int, spec: SplitSpec):
    """Seeded permutation of ``range(n)`` cut into train/val/test index arrays."""
    perm = rng_for(spec.seed, "split").permutation(n)
    n_train = int(np.floor(spec.train_frac * n + 1e-9))
    n_val = int(np.floor(spec.val_frac * n + 1e-9))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split(data, spec: SplitSpec):
    """Partition the rows of ``data`` into (train, val, test) matrices."""
    X = as_data_matrix(data)
    tr, va, te = split_indices(X.shape[0], spec)
    return as_data_matrix(X[tr]), as_data_matrix(X[va]), as_data_matrix(X[te])


def load_dataset_path(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise InvalidArgumentError(f"data file {p} does not exist")
    return p
