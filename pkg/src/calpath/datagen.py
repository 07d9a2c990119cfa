"""Synthetic calibration instances with a smooth simulator bias.

Real means are Gaussian, the bias is white noise passed through the low-pass
filter ``(I + rho L)^{-1}`` and rescaled to a prescribed Laplacian seminorm,
and simulator means are ``mu - b``.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .estimator import EdgeData
from .graph import Graph
from .similarity import SimilarityModel

__all__ = [
    "SyntheticSpec",
    "GroundTruth",
    "GaussianOracle",
    "stream",
    "smooth_bias_field",
    "sample_edge_data",
    "make_instance",
    "grid_graph",
]

_MAX_BIAS_RETRIES = 20


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named purpose under a root seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode()), *map(int, extra)])


@dataclass(frozen=True)
class SyntheticSpec:
    mu_mean: float = 50.0
    mu_sd: float = 10.0
    noise_sd: float = 30.0
    n_real: int = 20
    unobservable_fraction: float = 0.25
    rho: float = 1.0
    B: float = 10.0
    n_synthetic: int | None = None  # None: simulator means known exactly
    synthetic_noise_sd: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.unobservable_fraction <= 1.0:
            raise ValueError("unobservable_fraction must lie in [0, 1]")
        if min(self.mu_sd, self.noise_sd, self.synthetic_noise_sd) < 0:
            raise ValueError("standard deviations must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.B < 0:
            raise ValueError("B must be nonnegative")
        if self.n_real < 0:
            raise ValueError("n_real must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    mu: np.ndarray
    bias: np.ndarray
    mu_sim: np.ndarray
    sigma2: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("edge_id,mu,bias,mu_sim,sigma2\n")
            for k in range(self.mu.size):
                fh.write(f"{k},{float(self.mu[k])!r},{float(self.bias[k])!r},{float(self.mu_sim[k])!r},{float(self.sigma2[k])!r}\n")

    @classmethod
    def from_csv(cls, path) -> "GroundTruth":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(arr[:, 0])
        arr = arr[order]
        return cls(arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])


class GaussianOracle:
    """Real-cost sampler ``N(mu_e, sigma_e^2)`` with its own random stream."""

    def __init__(self, mu, sigma, seed=None):
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), self.mu.shape)
        self.rng = np.random.default_rng(seed)

    def sample(self, edge: int) -> float:
        return float(self.rng.normal(self.mu[edge], self.sigma[edge]))


def smooth_bias_field(m: SimilarityModel, rho: float, B: float, seed=None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``b`` with ``(I + rho L) b_raw = xi`` and rescale so ``b' L b = B^2``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if B < 0:
        raise ValueError("B must be nonnegative")
    rng = rng if rng is not None else np.random.default_rng(seed)
    n = m.size
    if B == 0:
        return np.zeros(n)
    A = np.eye(n) + rho * m.L
    for _ in range(_MAX_BIAS_RETRIES):
        raw = np.linalg.solve(A, rng.standard_normal(n))
        q = float(raw @ m.L @ raw)
        if q > 1e-12 * float(raw @ raw):
            return B * raw / np.sqrt(q)
    raise RuntimeError("bias draws keep landing in the Laplacian null space; is W empty?")


def sample_edge_data(truth: GroundTruth, spec: SyntheticSpec, rng_mask, rng_samples) -> EdgeData:
    """Real samples on a random observable subset; simulator side per ``spec``."""
    n = truth.mu.size
    n_hidden = int(round(spec.unobservable_fraction * n))
    hidden = np.zeros(n, dtype=bool)
    hidden[rng_mask.choice(n, size=n_hidden, replace=False)] = True
    sd = np.sqrt(truth.sigma2)
    real = tuple(np.empty(0) if hidden[e] else rng_samples.normal(truth.mu[e], sd[e], spec.n_real)
                 for e in range(n))
    if spec.n_synthetic is None:
        return EdgeData.with_exact_synthetic(real, truth.mu_sim)
    syn = tuple(rng_samples.normal(truth.mu_sim[e], spec.synthetic_noise_sd, spec.n_synthetic)
                for e in range(n))
    return EdgeData(real, syn)


def make_instance(g: Graph, m: SimilarityModel, spec: SyntheticSpec) -> tuple[GroundTruth, EdgeData]:
    """Ground truth plus observed data; separate streams for mu, bias, mask, samples."""
    if m.size != g.edge_count:
        raise ValueError("similarity size does not match edge count")
    n = g.edge_count
    mu = stream(spec.seed, "mu").normal(spec.mu_mean, spec.mu_sd, n)
    bias = smooth_bias_field(m, spec.rho, spec.B, rng=stream(spec.seed, "bias"))
    truth = GroundTruth(mu, bias, mu - bias, np.full(n, spec.noise_sd ** 2))
    data = sample_edge_data(truth, spec, stream(spec.seed, "mask"), stream(spec.seed, "samples"))
    return truth, data


def grid_graph(rows: int, cols: int, drop: int = 0) -> Graph:
    """``rows x cols`` lattice; ``drop`` removes that many interior horizontal edges from the end."""
    def node(r, c):
        return r * cols + c

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((node(r, c), node(r, c + 1)))
            if r + 1 < rows:
                edges.append((node(r, c), node(r + 1, c)))
    if drop:
        horizontal = [e for e in edges if e[1] == e[0] + 1 and 0 < e[0] // cols < rows - 1]
        for e in horizontal[-drop:]:
            edges.remove(e)
    coords = np.array([(c, r) for r in range(rows) for c in range(cols)], dtype=float)
    return Graph(rows * cols, tuple(edges), coords)
