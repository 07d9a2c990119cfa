"""Confidence radii and path certificates for calibrated edge costs.

The smoother ``S = (I + lam H)^{-1}`` with ``H = M^{-1/2} L M^{-1/2}`` is
evaluated through the identity ``S M^{-1/2} = M^{1/2} (M + lam L)^{-1}``,
which keeps tiny jittered weights from blowing up ``H``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import WeightSpec
from .graph import Path
from .similarity import SimilarityModel

__all__ = [
    "BoundConfig",
    "RadiusTable",
    "Certificate",
    "smoother",
    "leverage",
    "effective_dimension",
    "static_radii",
    "anytime_radii",
    "worst_case_radius",
    "path_bounds",
    "suboptimality_certificate",
]

WEIGHT_JITTER = 1e-12
FALLBACK_INFLATION = 10.0


@dataclass(frozen=True)
class BoundConfig:
    """Problem constants behind the radii.

    ``bias_coefficient`` selects the constant on the smoothing-bias term:
    ``"printed"`` uses ``sqrt(lam)/2`` for static radii and ``sqrt(lam/2)``
    for anytime radii; ``"half"`` and ``"sqrt_half"`` force one of them in
    both places.
    """

    B: float = 0.0
    kappa_plus: float = 1.0
    kappa_minus: float = 1.0
    delta: float = 0.1
    lam: float = 1.0
    bias_coefficient: str = "printed"

    def __post_init__(self):
        if self.B < 0:
            raise ValueError("B must be nonnegative")
        if not 0 < self.kappa_minus <= self.kappa_plus:
            raise ValueError("need 0 < kappa_minus <= kappa_plus")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.bias_coefficient not in ("printed", "half", "sqrt_half"):
            raise ValueError(f"unknown bias_coefficient {self.bias_coefficient!r}")

    def bias_coef(self, anytime: bool) -> float:
        mode = self.bias_coefficient
        if mode == "printed":
            mode = "sqrt_half" if anytime else "half"
        return math.sqrt(self.lam / 2.0) if mode == "sqrt_half" else math.sqrt(self.lam) / 2.0


@dataclass(frozen=True)
class RadiusTable:
    weights: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    infinite: np.ndarray
    t: int | None = None
    fallback: float | None = None

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("edge_id,w,alpha,beta,flag\n")
            for k in range(self.beta.size):
                flag = "fallback" if self.infinite[k] and math.isfinite(self.beta[k]) else (
                    "infinite" if self.infinite[k] else "")
                fh.write(f"{k},{float(self.weights[k])!r},{float(self.alpha[k])!r},{float(self.beta[k])!r},{flag}\n")


@dataclass(frozen=True)
class Certificate:
    bound: float
    uniform_bound: float | None = None
    beta_bar: float | None = None
    l_max: int | None = None
    details: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        doc = {"bound": self.bound, "uniform_bound": self.uniform_bound,
               "beta_bar": self.beta_bar, "l_max": self.l_max, **self.details}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


def _w(w) -> np.ndarray:
    return w.weights if isinstance(w, WeightSpec) else np.asarray(w, dtype=float)


def _half_smoother(m: SimilarityModel, w, lam: float) -> np.ndarray:
    """``M^{1/2} (M + lam L)^{-1}`` with zero weights jittered; equals ``S M^{-1/2}``."""
    w = np.where(_w(w) > 0, _w(w), WEIGHT_JITTER)
    n = w.size
    if lam == 0:
        return np.diag(1.0 / np.sqrt(w))
    out = np.zeros((n, n))
    for comp in m.components:
        idx = np.ix_(comp, comp)
        A = np.diag(w[comp]) + lam * m.L[idx]
        out[idx] = np.sqrt(w[comp])[:, None] * np.linalg.solve(A, np.eye(comp.size))
    return out


def smoother(m: SimilarityModel, w, lam: float) -> np.ndarray:
    """``S_lam = (I + lam M^{-1/2} L M^{-1/2})^{-1}``; symmetric with spectrum in (0, 1]."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    w = np.where(_w(w) > 0, _w(w), WEIGHT_JITTER)
    S = _half_smoother(m, w, lam) * np.sqrt(w)[None, :]
    return 0.5 * (S + S.T)


def leverage(m: SimilarityModel, w, lam: float) -> tuple[np.ndarray, float]:
    """Per-edge leverage ``||S M^{-1/2} e_e||`` and its max over positive-weight edges."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    alpha = np.linalg.norm(_half_smoother(m, w, lam), axis=0)
    pos = _w(w) > 0
    return alpha, float(alpha[pos].max()) if pos.any() else math.inf


def effective_dimension(m: SimilarityModel, w, lam: float) -> float:
    """``tr(S_lam^2)``, i.e. ``sum_k (1 + lam eta_k)^{-2}``."""
    if lam == 0:
        return float(m.size)
    S = smoother(m, w, lam)
    return float(np.sum(S * S))


def _log_term(n_edges: int, delta: float, t: int | None) -> float:
    if t is None:
        return math.sqrt(2.0 * math.log(2.0 * n_edges / delta))
    return math.sqrt(2.0 * math.log(2.0 * n_edges * math.pi ** 2 * t * t / (3.0 * delta)))


def static_radii(m: SimilarityModel, w, cfg: BoundConfig) -> RadiusTable:
    """Edgewise radii valid simultaneously for all edges with probability ``1 - delta``.

    ``beta_e = c_bias B / sqrt(w_e) + sqrt(kappa_plus) alpha_e sqrt(2 log(2|E|/delta))``.
    Zero-weight edges get ``+inf``.
    """
    w = _w(w)
    alpha, _ = leverage(m, w, cfg.lam)
    pos = w > 0
    beta = np.full(w.size, math.inf)
    coef = cfg.bias_coef(anytime=False)
    beta[pos] = (coef * cfg.B / np.sqrt(w[pos])
                 + math.sqrt(cfg.kappa_plus) * alpha[pos] * _log_term(w.size, cfg.delta, None))
    return RadiusTable(w, alpha, beta, ~pos)


def anytime_radii(m: SimilarityModel, w, cfg: BoundConfig, t: int, fallback: bool = True) -> RadiusTable:
    """Time-uniform radii at round ``t`` (log term ``log(2|E| pi^2 t^2 / (3 delta))``).

    Unobserved edges get a finite stand-in: the radius built from the smallest
    observed weight and largest observed leverage, inflated tenfold. With
    ``fallback=False`` they stay ``+inf``.
    """
    if t < 1:
        raise ValueError("round t must be at least 1")
    w = _w(w)
    alpha, alpha_max = leverage(m, w, cfg.lam)
    pos = w > 0
    coef = cfg.bias_coef(anytime=True)
    log_t = _log_term(w.size, cfg.delta, t)
    beta = np.full(w.size, math.inf)
    beta[pos] = coef * cfg.B / np.sqrt(w[pos]) + math.sqrt(cfg.kappa_plus) * alpha[pos] * log_t
    fb = None
    if fallback and pos.any() and (~pos).any():
        fb = FALLBACK_INFLATION * (coef * cfg.B / math.sqrt(w[pos].min())
                                   + math.sqrt(cfg.kappa_plus) * alpha_max * log_t)
        beta[~pos] = fb
    return RadiusTable(w, alpha, beta, ~pos, t=t, fallback=fb)


def worst_case_radius(m: SimilarityModel, w, cfg: BoundConfig) -> float:
    """Uniform radius built from ``w_min`` and the worst-case leverage."""
    w = _w(w)
    _, alpha_max = leverage(m, w, cfg.lam)
    w_min = w[w > 0].min()
    return (cfg.bias_coef(anytime=False) * cfg.B / math.sqrt(w_min)
            + math.sqrt(cfg.kappa_plus) * alpha_max * _log_term(w.size, cfg.delta, None))


def path_bounds(p: Path, mu_hat, r: RadiusTable) -> tuple[float, float]:
    """``(LCB, UCB) = mu_hat(P) -/+ sum of radii over E(P)``."""
    idx = list(p.edges)
    centre = float(np.sum(np.asarray(mu_hat, dtype=float)[idx]))
    width = float(np.sum(r.beta[idx]))
    return centre - width, centre + width


def suboptimality_certificate(p_hat: Path, p_star: Path, r: RadiusTable, l_max: int | None = None) -> Certificate:
    """Bound on ``mu(p_hat) - mu(p_star)``: radii summed over both edge sets.

    Shared edges are counted twice. With ``l_max`` also returns the uniform
    form ``2 * beta_bar * l_max`` where ``beta_bar`` is the largest finite radius.
    """
    bound = float(np.sum(r.beta[list(p_star.edges)]) + np.sum(r.beta[list(p_hat.edges)]))
    finite = r.beta[np.isfinite(r.beta)]
    beta_bar = float(finite.max()) if finite.size else math.inf
    uniform = None if l_max is None else 2.0 * beta_bar * l_max
    return Certificate(bound, uniform, beta_bar, l_max,
                       {"p_hat": list(p_hat.nodes), "p_star": list(p_star.nodes)})
