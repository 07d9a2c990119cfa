"""Laplacian-regularized estimation of simulator bias.

Given real-minus-synthetic discrepancies ``y`` with fidelity weights ``w`` the
bias estimate minimizes

    sum_e w_e (b_e - y_e)^2 + lam * b' L b,

solved in closed form ``(M + lam L) b = M y`` on each similarity component.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import lsqr

from .similarity import SimilarityModel

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "EdgeData",
    "WeightSpec",
    "CalibrationResult",
    "TunerTrace",
    "fidelity_weights",
    "solve_bias",
    "degrees_of_freedom",
    "calibrate",
    "baseline_sim",
    "baseline_real",
    "baseline_const",
    "sure_score",
    "tune_lambda_sure",
    "tune_lambda_cv",
    "tune_lambda_discrepancy",
    "select_lambda",
]

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 5.0, 10.0, 20.0, 50.0, 100.0)


@dataclass(frozen=True)
class EdgeData:
    """Per-edge real and synthetic samples.

    ``synthetic_means`` marks simulator means as known exactly (abundant
    simulator runs); the synthetic sample lists are then ignored.
    """

    real: tuple[np.ndarray, ...]
    synthetic: tuple[np.ndarray, ...] = ()
    synthetic_means: np.ndarray | None = None

    def __post_init__(self):
        real = tuple(np.asarray(s, dtype=float).ravel() for s in self.real)
        object.__setattr__(self, "real", real)
        if self.synthetic_means is not None:
            mu = np.asarray(self.synthetic_means, dtype=float).ravel()
            if mu.shape != (len(real),):
                raise ValueError("synthetic_means must have one entry per edge")
            object.__setattr__(self, "synthetic_means", mu)
        else:
            syn = tuple(np.asarray(s, dtype=float).ravel() for s in self.synthetic)
            if len(syn) != len(real):
                raise ValueError("need one synthetic sample list per edge")
            if any(s.size == 0 for s in syn):
                raise ValueError("every edge needs at least one synthetic sample")
            object.__setattr__(self, "synthetic", syn)

    @classmethod
    def with_exact_synthetic(cls, real: Sequence, synthetic_means) -> "EdgeData":
        return cls(tuple(real), (), np.asarray(synthetic_means, dtype=float))

    @property
    def edge_count(self) -> int:
        return len(self.real)

    @property
    def n_real(self) -> np.ndarray:
        return np.array([s.size for s in self.real], dtype=int)

    @property
    def n_synthetic(self) -> np.ndarray:
        if self.synthetic_means is not None:
            return np.full(self.edge_count, np.inf)
        return np.array([s.size for s in self.synthetic], dtype=float)

    @property
    def observed(self) -> np.ndarray:
        return self.n_real > 0

    @property
    def real_mean(self) -> np.ndarray:
        """Sample means; NaN where ``n_e = 0``."""
        return np.array([s.mean() if s.size else np.nan for s in self.real])

    @property
    def real_var(self) -> np.ndarray:
        """Unbiased sample variances; NaN where ``n_e < 2``."""
        return np.array([s.var(ddof=1) if s.size >= 2 else np.nan for s in self.real])

    @property
    def synthetic_mean(self) -> np.ndarray:
        if self.synthetic_means is not None:
            return self.synthetic_means.copy()
        return np.array([s.mean() for s in self.synthetic])

    @property
    def synthetic_var(self) -> np.ndarray:
        if self.synthetic_means is not None:
            return np.zeros(self.edge_count)
        return np.array([s.var(ddof=1) if s.size >= 2 else np.nan for s in self.synthetic])

    def discrepancy(self) -> np.ndarray:
        """``y_e = cbar_e - cbar'_e`` with 0 stored on unobserved edges."""
        y = self.real_mean - self.synthetic_mean
        return np.where(self.observed, y, 0.0)


@dataclass(frozen=True)
class WeightSpec:
    """Fidelity weights and the settings that produced them.

    ``kappa_minus`` / ``kappa_plus`` are the calibration constants relating
    weights to inverse noise proxies; they are only consumed by confidence
    radii.
    """

    weights: np.ndarray
    w_max: float = 1e6
    var_floor: float = 1e-8
    kappa_minus: float = 1.0
    kappa_plus: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_array(cls, weights, **kw) -> "WeightSpec":
        return cls(np.asarray(weights, dtype=float), **kw)


@dataclass(frozen=True)
class CalibrationResult:
    bias: np.ndarray
    mean: np.ndarray
    synthetic_mean: np.ndarray
    weights: np.ndarray
    lam: float
    residual: float
    dof: float
    diagnostics: dict = field(default_factory=dict, repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("edge_id,synthetic_mean,bias,mean,weight\n")
            for k in range(self.bias.size):
                fh.write(f"{k},{float(self.synthetic_mean[k])!r},{float(self.bias[k])!r},{float(self.mean[k])!r},{float(self.weights[k])!r}\n")


@dataclass(frozen=True)
class TunerTrace:
    lam: float
    grid: tuple[float, ...]
    scores: tuple[float, ...]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("lambda,score\n")
            for g, s in zip(self.grid, self.scores):
                fh.write(f"{float(g)!r},{float(s)!r}\n")


def fidelity_weights(d: EdgeData, w_max: float = 1e6, var_floor: float = 1e-8,
                     sigma2=None, sigma2_synthetic=None,
                     kappa_minus: float = 1.0, kappa_plus: float = 1.0) -> WeightSpec:
    """Inverse-variance weights ``min(1 / Var(y_e), w_max)``.

    ``Var(y_e) = s_e^2/n_e + s'_e^2/n'_e``. With fewer than two samples the
    sample variance is replaced by the proxy ``sigma2`` (``sigma2_synthetic``
    for the simulator side). A real side with one sample and no proxy is
    treated as unobserved.
    """
    n = d.n_real
    n_syn = d.n_synthetic
    s2 = d.real_var
    s2_syn = d.synthetic_var
    proxy = None if sigma2 is None else np.broadcast_to(np.asarray(sigma2, dtype=float), n.shape)
    proxy_syn = None if sigma2_synthetic is None else np.broadcast_to(
        np.asarray(sigma2_synthetic, dtype=float), n.shape)

    w = np.zeros(n.size)
    missing_proxy = []
    for e in range(n.size):
        if n[e] == 0:
            continue
        if n[e] >= 2:
            var_real = s2[e] / n[e]
        elif proxy is not None:
            var_real = proxy[e] / n[e]
        else:
            missing_proxy.append(e)
            continue
        if np.isinf(n_syn[e]):
            var_syn = 0.0
        elif n_syn[e] >= 2:
            var_syn = s2_syn[e] / n_syn[e]
        elif proxy_syn is not None:
            var_syn = proxy_syn[e] / n_syn[e]
        else:
            var_syn = 0.0
        w[e] = min(1.0 / max(var_real + var_syn, var_floor), w_max)
    if missing_proxy:
        warnings.warn(f"{len(missing_proxy)} edges have a single real sample and no variance proxy; "
                      "they get zero weight", RuntimeWarning, stacklevel=2)
    return WeightSpec(w, w_max=w_max, var_floor=var_floor, kappa_minus=kappa_minus, kappa_plus=kappa_plus)


def _weights(w) -> np.ndarray:
    return w.weights if isinstance(w, WeightSpec) else np.asarray(w, dtype=float)


def _factor(A):
    """Cholesky factor of an SPD block, or ``None`` if it is numerically singular."""
    try:
        cf = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    diag = np.abs(np.diag(cf[0]))
    if diag.min() <= 1e-10 * diag.max():
        return None
    return cf


def _solve_component(A, rhs):
    cf = _factor(A)
    if cf is not None:
        return linalg.cho_solve(cf, rhs, check_finite=False), False
    sol = lsqr(A, rhs, atol=1e-14, btol=1e-14, iter_lim=50 * A.shape[0])[0]
    return sol, True


def _solve(y, w, m: SimilarityModel, lam: float):
    y = np.where(w > 0, np.asarray(y, dtype=float), 0.0)
    b = np.zeros_like(y)
    fallbacks = []
    if lam == 0:
        return np.where(w > 0, y, 0.0), fallbacks
    for comp in m.components:
        wc = w[comp]
        if not np.any(wc > 0):
            continue
        A = np.diag(wc) + lam * m.L[np.ix_(comp, comp)]
        b[comp], used = _solve_component(A, wc * y[comp])
        if used:
            fallbacks.append(int(comp[0]))
    return b, fallbacks


def solve_bias(y, w, m: SimilarityModel, lam: float) -> np.ndarray:
    """Closed-form minimizer ``(M + lam L)^{-1} M y``, component by component.

    Components without any positive weight get zero bias. ``lam = 0`` returns
    ``y`` on positively weighted edges and zero elsewhere. A numerically
    singular block is solved by LSQR instead of Cholesky.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    w = _weights(w)
    y = np.asarray(y, dtype=float)
    if y.shape != w.shape or w.shape[0] != m.size:
        raise ValueError("y, weights and similarity sizes disagree")
    if not np.all(np.isfinite(y[w > 0])):
        raise ValueError("y must be finite where weights are positive")
    b, fallbacks = _solve(y, w, m, lam)
    if fallbacks:
        log.warning("iterative fallback used on components starting at edges %s", fallbacks)
    return b


def degrees_of_freedom(w, m: SimilarityModel, lam: float) -> float:
    """``tr((M + lam L)^{-1} M)`` summed over informed components."""
    w = _weights(w)
    if lam == 0:
        return float(np.count_nonzero(w > 0))
    total = 0.0
    for comp in m.components:
        wc = w[comp]
        if not np.any(wc > 0):
            continue
        A = np.diag(wc) + lam * m.L[np.ix_(comp, comp)]
        cf = _factor(A)
        X = linalg.cho_solve(cf, np.diag(wc)) if cf is not None else np.linalg.pinv(A) @ np.diag(wc)
        total += float(np.trace(X))
    return total


def _weighted_residual(b, y, w) -> float:
    mask = w > 0
    r = b[mask] - y[mask]
    return float(np.sum(w[mask] * r * r))


def calibrate(d: EdgeData, m: SimilarityModel, lam=0.1, weights: WeightSpec | None = None,
              grid=DEFAULT_LAMBDA_GRID, **weight_kw) -> CalibrationResult:
    """Calibrated means ``cbar' + b_hat``.

    ``lam`` is a number or one of ``"sure"``, ``"cv"``, ``"discrepancy"``, in
    which case it is tuned over ``grid``.
    """
    ws = weights if weights is not None else fidelity_weights(d, **weight_kw)
    if isinstance(lam, str):
        lam = select_lambda(lam, d, m, grid=grid, weights=ws).lam
    w = ws.weights
    y = d.discrepancy()
    b, fallbacks = _solve(y, w, m, float(lam))
    syn = d.synthetic_mean
    return CalibrationResult(
        bias=b,
        mean=syn + b,
        synthetic_mean=syn,
        weights=w,
        lam=float(lam),
        residual=_weighted_residual(b, y, w),
        dof=degrees_of_freedom(w, m, float(lam)),
        diagnostics={"iterative_fallback_components": fallbacks},
    )


# -- baselines ----------------------------------------------------------------

def baseline_sim(d: EdgeData, w=None) -> np.ndarray:
    return d.synthetic_mean


def baseline_real(d: EdgeData, w=None) -> np.ndarray:
    return np.where(d.observed, d.real_mean, d.synthetic_mean)


def baseline_const(d: EdgeData, w=None) -> np.ndarray:
    """Simulator means shifted by the weighted mean discrepancy."""
    w = _weights(w if w is not None else fidelity_weights(d))
    if not w.sum() > 0:
        raise ValueError("CONST baseline needs at least one positive weight")
    gamma = float(np.sum(w * d.discrepancy()) / w.sum())
    return d.synthetic_mean + gamma


# -- lambda tuning --------------------------------------------------------------

def _argmin_first(scores, rtol: float = 1e-10) -> int:
    """First index within round-off of the minimum, so ties go to the smaller lambda."""
    scores = np.asarray(scores, dtype=float)
    best = np.nanmin(scores)
    return int(np.flatnonzero(scores <= best + rtol * max(1.0, abs(best)))[0])


def sure_score(y, w, m: SimilarityModel, lam: float) -> float:
    w = _weights(w)
    y = np.where(w > 0, np.asarray(y, dtype=float), 0.0)
    b, _ = _solve(y, w, m, lam)
    return _weighted_residual(b, y, w) + 2.0 * degrees_of_freedom(w, m, lam)


def _grid(grid) -> tuple[float, ...]:
    grid = tuple(sorted(float(g) for g in grid))
    if not grid:
        raise ValueError("lambda grid is empty")
    if grid[0] < 0:
        raise ValueError("lambda grid must be nonnegative")
    return grid


def tune_lambda_sure(d: EdgeData, m: SimilarityModel, grid=DEFAULT_LAMBDA_GRID,
                     weights: WeightSpec | None = None) -> TunerTrace:
    """Minimize ``SURE(lam) = weighted residual + 2 tr((M + lam L)^{-1} M)``; ties go to smaller lam."""
    grid = _grid(grid)
    ws = weights if weights is not None else fidelity_weights(d)
    y = d.discrepancy()
    scores = tuple(sure_score(y, ws, m, lam) for lam in grid)
    return TunerTrace(grid[_argmin_first(scores)], grid, scores)


def tune_lambda_cv(d: EdgeData, m: SimilarityModel, grid=DEFAULT_LAMBDA_GRID, K: int = 5,
                   seed: int = 0, weights: WeightSpec | None = None) -> TunerTrace:
    """K-fold cross-validation over observed edges.

    Each fold is held out by zeroing its weights, then scored by the weighted
    squared error of the fitted bias on the fold.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    grid = _grid(grid)
    ws = weights if weights is not None else fidelity_weights(d)
    w = ws.weights
    observed = np.flatnonzero(w > 0)
    if observed.size < K:
        raise ValueError(f"need at least K={K} observed edges, have {observed.size}")
    y = d.discrepancy()
    perm = np.random.default_rng(seed).permutation(observed)
    folds = np.array_split(perm, K)
    scores = []
    for lam in grid:
        per_fold = []
        for fold in folds:
            w_train = w.copy()
            w_train[fold] = 0.0
            b, _ = _solve(y, w_train, m, lam)
            r = b[fold] - y[fold]
            per_fold.append(float(np.sum(w[fold] * r * r)))
        scores.append(float(np.mean(per_fold)))
    scores = tuple(scores)
    return TunerTrace(grid[_argmin_first(scores)], grid, scores)


def tune_lambda_discrepancy(d: EdgeData, m: SimilarityModel, grid=DEFAULT_LAMBDA_GRID,
                            multiplier: float = 1.0, weights: WeightSpec | None = None) -> TunerTrace:
    """Smallest lam whose in-sample weighted discrepancy reaches ``multiplier * #observed``.

    Scores in the trace are the discrepancies. Falls back to the largest grid
    value, with a warning, when the target is never reached.
    """
    grid = _grid(grid)
    ws = weights if weights is not None else fidelity_weights(d)
    w = ws.weights
    y = d.discrepancy()
    target = multiplier * np.count_nonzero(w > 0)
    scores = tuple(_weighted_residual(_solve(y, w, m, lam)[0], y, w) for lam in grid)
    for lam, s in zip(grid, scores):
        if s >= target:
            return TunerTrace(lam, grid, scores)
    warnings.warn("discrepancy target not reached on the grid; using the largest lambda",
                  RuntimeWarning, stacklevel=2)
    return TunerTrace(grid[-1], grid, scores)


def select_lambda(rule: str, d: EdgeData, m: SimilarityModel, grid=DEFAULT_LAMBDA_GRID,
                  weights: WeightSpec | None = None, **kw) -> TunerTrace:
    if rule == "sure":
        return tune_lambda_sure(d, m, grid, weights=weights)
    if rule == "cv":
        return tune_lambda_cv(d, m, grid, weights=weights, **kw)
    if rule == "discrepancy":
        return tune_lambda_discrepancy(d, m, grid, weights=weights, **kw)
    raise ValueError(f"unknown lambda rule {rule!r}")
