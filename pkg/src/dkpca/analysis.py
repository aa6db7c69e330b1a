"""Explained variance, approximation-error bounds and the eigenvalue-shift identities.

All results here concern the two-level model with a linear second level,
where the first-level matrix is ``K1/eta1 + H2 H2^T / eta2``. In the full
decomposition (``s1 = s2 = N``) its spectrum is the data-kernel spectrum
shifted by ``1/eta2``, which is what makes the deep model explain more
variance than shallow KPCA when ``eta2`` is negative enough.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ArchitectureSpec, DeepState, level_matrix
from .errors import ConditionViolatedError, InvalidArgumentError
from .numerics import NUMERICAL_RANK_RTOL, sym_eig_desc

SANDWICH_TOL = 1e-8


@dataclass
class VarianceReport:
    level: int
    eigenvalues: np.ndarray
    per_component_pct: np.ndarray
    cumulative_pct: np.ndarray
    denominator: float
    clamped: bool = False

    def to_dict(self):
        d = asdict(self)
        for k in ("eigenvalues", "per_component_pct", "cumulative_pct"):
            d[k] = np.asarray(d[k]).tolist()
        return d

    def rows(self):
        return [
            {"component": i + 1, "eigenvalue": float(l), "pct": float(p), "cumulative_pct": float(c)}
            for i, (l, p, c) in enumerate(zip(self.eigenvalues, self.per_component_pct, self.cumulative_pct))
        ]


@dataclass
class BoundsReport:
    lower: float
    upper: float
    actual: float
    r1: int
    regime: int  # sign of eta2
    eta2: float = float("nan")
    s1: int = 0
    s2: int = 0

    @property
    def holds(self) -> bool:
        return self.sandwich_slack() <= SANDWICH_TOL

    def sandwich_slack(self) -> float:
        """Largest violation of ``lower <= actual <= upper`` (non-positive when it holds)."""
        return max(self.lower - self.actual, self.actual - self.upper)

    def to_dict(self):
        return asdict(self)


def explained_variance(eigs, denominator_spectrum, level: int = 1) -> VarianceReport:
    """Percent of the (clamped) denominator spectrum carried by each of ``eigs``."""
    eigs = np.asarray(eigs, dtype=float).ravel()
    spec = np.real(np.asarray(denominator_spectrum)).astype(float).ravel()
    clamped = bool(np.any(spec < 0))
    total = float(np.sum(np.clip(spec, 0.0, None)))
    if not total > 0:
        raise InvalidArgumentError("explained variance needs a positive denominator")
    pct = 100.0 * eigs / total
    return VarianceReport(level, eigs, pct, np.cumsum(pct), total, clamped)


def level_variance(arch: ArchitectureSpec, state: DeepState, K1, j: int = 1) -> VarianceReport:
    """Explained variance of level ``j``'s deep eigenvalues over the spectrum of ``M_j``."""
    M = level_matrix(arch, state, K1, j)
    if np.allclose(M, M.T, rtol=0, atol=1e-10 * max(1.0, np.abs(M).max())):
        spectrum = np.linalg.eigvalsh((M + M.T) / 2)
    else:
        spectrum = np.linalg.eigvals(M).real
    lam = np.sort(state.Lambda[j - 1])[::-1]
    return explained_variance(lam, spectrum, level=j)


def shallow_variance(K1, s: int) -> VarianceReport:
    vals = sym_eig_desc(np.asarray(K1, dtype=float)).values
    return explained_variance(vals[:s], vals, level=1)


# ---------------------------------------------------------------------------
# approximation bounds


def bounds_lemma1(K1, state: DeepState, eta2: float, s1: int, s2: int, eta1: float = 1.0) -> BoundsReport:
    """Lower and upper bounds on ``|K1 - H1 Lambda1 H1^T|_F`` for a two-level linear-k2 state."""
    if state.n_levels != 2:
        raise InvalidArgumentError(f"bounds need a two-level state, got {state.n_levels} levels")
    if eta2 == 0:
        raise InvalidArgumentError("eta2 must be non-zero")
    K1 = np.asarray(K1, dtype=float)
    H1, H2 = state.H
    L1 = state.Lambda[0]
    if H1.shape[1] != s1 or H2.shape[1] != s2:
        raise InvalidArgumentError("s1/s2 do not match the state's shapes")

    lam1 = sym_eig_desc(K1 / eta1 + H2 @ H2.T / eta2).values
    thr = NUMERICAL_RANK_RTOL * np.abs(lam1).max()
    nonzero = np.abs(lam1) > thr
    r1 = int(np.count_nonzero(nonzero))
    tail = float(np.sum(lam1[s1:][nonzero[s1:]] ** 2))
    lam_tilde = sym_eig_desc(K1).values

    lower = math.sqrt(tail) - math.sqrt(s2) / abs(eta2)
    if eta2 < 0:
        inner = tail - (s2 / eta2 + 2.0 * np.sum(lam_tilde[:s2])) / eta2
    else:
        inner = tail - (1.0 / eta2 - 2.0 * s1 * np.sum(lam1[:s1])) * s2 / eta2
    upper = math.sqrt(inner) if inner >= 0 else float("nan")
    actual = float(np.linalg.norm(K1 - (H1 * L1) @ H1.T))
    return BoundsReport(lower, upper, actual, r1, int(np.sign(eta2)), float(eta2), s1, s2)


# ---------------------------------------------------------------------------
# explained-variance advantage


def _pd_spectrum(K1):
    vals = sym_eig_desc(np.asarray(K1, dtype=float)).values
    if not vals[-1] > 0:
        raise InvalidArgumentError(f"K1 must be positive definite (smallest eigenvalue {vals[-1]:.3e})")
    return vals


def deep_spectrum(lam_tilde, eta2: float) -> np.ndarray:
    """Full-decomposition level-1 spectrum: every eigenvalue shifted by ``1/eta2``."""
    lam = np.asarray(lam_tilde, dtype=float) + 1.0 / eta2
    if np.any(lam < -1e-10):
        raise ConditionViolatedError(
            f"eta2={eta2} drives deep eigenvalues negative (min {lam.min():.3e}); "
            "need eta2 > 0 or eta2 < -1/lambda_min"
        )
    return lam


def variance_advantage(K1, eta2: float, n: int):
    """Cumulative explained variance of the top ``n`` deep and shallow components.

    Returns ``(deep_cum, shallow_cum, holds)`` with fractions in [0, 1].
    """
    vals = _pd_spectrum(K1)
    N = vals.size
    if not 1 <= n < N:
        raise InvalidArgumentError(f"need 1 <= n < N={N}, got n={n}")
    deep = deep_spectrum(vals, eta2)
    shallow_cum = float(np.sum(vals[:n]) / np.sum(vals))
    deep_cum = float(np.sum(deep[:n]) / np.sum(deep))
    return deep_cum, shallow_cum, deep_cum > shallow_cum


def predicted_variance_gain(spectrum, eta2: float, n: int) -> float:
    """Closed-form ``deep_cum - shallow_cum`` in the full decomposition."""
    lam = np.sort(np.asarray(spectrum, dtype=float))[::-1]
    N = lam.size
    tr = float(np.sum(lam))
    denom = eta2 * tr + N
    if tr == 0 or denom == 0:
        raise InvalidArgumentError("predicted gain undefined: zero trace or eta2 * Tr + N = 0")
    return (n - N * float(np.sum(lam[:n])) / tr) / denom


def lemma2_eta2(K1, factor: float = 1.01) -> float:
    """``factor * (-1/lambda_min)``, the negative eta2 just past the threshold where deep variance always wins."""
    return factor * (-1.0 / _pd_spectrum(K1)[-1])


def lemma2_table(K1, eta2: float):
    """Rows ``(n, shallow_cum, deep_cum, gain, predicted)`` for every n in 1..N-1."""
    vals = _pd_spectrum(K1)
    rows = []
    for n in range(1, vals.size):
        deep_cum, shallow_cum, holds = variance_advantage(K1, eta2, n)
        rows.append(
            {
                "n": n,
                "shallow_cum": shallow_cum,
                "deep_cum": deep_cum,
                "gain": deep_cum - shallow_cum,
                "predicted_gain": predicted_variance_gain(vals, eta2, n),
                "holds": holds,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# export


def write_rows_csv(path, rows) -> None:
    rows = list(rows)
    if not rows:
        raise InvalidArgumentError("nothing to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
