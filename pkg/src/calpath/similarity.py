"""Edge-similarity matrices and their graph Laplacians.

All constructors return a :class:`SimilarityModel` holding a dense symmetric
nonnegative ``W`` with zero diagonal and ``L = diag(W 1) - W``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc

from .graph import Graph, line_graph_adjacency

__all__ = [
    "SimilarityModel",
    "laplacian",
    "one_hop",
    "two_hop",
    "heat_kernel",
    "from_matrix",
    "build_similarity",
    "connected_components",
]


def laplacian(W: np.ndarray) -> np.ndarray:
    return np.diag(W.sum(axis=1)) - W


@dataclass(frozen=True)
class SimilarityModel:
    W: np.ndarray
    L: np.ndarray = field(repr=False)
    components: tuple[np.ndarray, ...] = field(repr=False)
    kind: str = "custom"

    @property
    def size(self) -> int:
        return self.W.shape[0]

    def seminorm(self, x) -> float:
        """Laplacian seminorm ``sqrt(x' L x)``."""
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(max(x @ self.L @ x, 0.0)))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.W, delimiter=",", fmt="%.17g")


def from_matrix(W, kind: str = "custom") -> SimilarityModel:
    """Wrap a user matrix; it must already be symmetric, nonnegative, zero-diagonal."""
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    if not np.allclose(W, W.T, atol=1e-12):
        raise ValueError("W must be symmetric")
    if np.any(W < 0):
        raise ValueError("W must be nonnegative")
    if np.any(np.diag(W) != 0):
        raise ValueError("W must have a zero diagonal")
    W = 0.5 * (W + W.T)
    n, labels = _cc(sparse.csr_matrix(W > 0), directed=False)
    comps = tuple(np.flatnonzero(labels == k) for k in range(n))
    # order components by their smallest edge id
    comps = tuple(sorted(comps, key=lambda c: int(c[0])))
    return SimilarityModel(W, laplacian(W), comps, kind)


def read_csv(path, kind: str = "custom") -> SimilarityModel:
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    return from_matrix(W, kind)


def one_hop(g: Graph) -> SimilarityModel:
    """``W[e, f] = 1`` when edges ``e`` and ``f`` share an endpoint."""
    return from_matrix(line_graph_adjacency(g).astype(float), "one_hop")


def two_hop(g: Graph, alpha: float = 0.5) -> SimilarityModel:
    """1-hop neighbours get weight 1, edges two line-graph steps apart get ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    A = line_graph_adjacency(g).astype(float)
    A2 = A @ A
    W = np.where(A > 0, 1.0, np.where(A2 > 0, alpha, 0.0))
    np.fill_diagonal(W, 0.0)
    return from_matrix(W, "two_hop")


def heat_kernel(g: Graph, t: float = 0.5, cutoff: float = 1e-6) -> SimilarityModel:
    """Diffusion similarity ``exp(-t L_line)`` on the line graph.

    Symmetrized, then diagonal zeroed, then entries below ``cutoff`` dropped.
    """
    if not t > 0:
        raise ValueError("diffusion time t must be positive")
    A = line_graph_adjacency(g).astype(float)
    evals, evecs = np.linalg.eigh(laplacian(A))
    K = (evecs * np.exp(-t * evals)) @ evecs.T
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 0.0)
    K[K < cutoff] = 0.0
    return from_matrix(K, "heat")


def build_similarity(g: Graph, kind: str = "heat", **params) -> SimilarityModel:
    """Select a kernel by name: ``one_hop``, ``two_hop`` or ``heat``."""
    if kind == "one_hop":
        return one_hop(g)
    if kind == "two_hop":
        return two_hop(g, **params)
    if kind in ("heat", "heat_kernel"):
        return heat_kernel(g, **params)
    raise ValueError(f"unknown similarity kernel {kind!r}")


def connected_components(m: SimilarityModel) -> tuple[np.ndarray, ...]:
    """Partition of edge ids into components of the support of ``W``."""
    return m.components
