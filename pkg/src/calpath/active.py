"""Active shortest-path learning from a biased simulator (A-ESP).

Each round calibrates the simulator against the real samples gathered so far,
builds time-uniform pathwise confidence intervals, and stops once the
empirical best path's upper bound undercuts the lower bound of the most
optimistic alternative. Otherwise one more real sample is drawn from the edge
with the largest ``sigma_e^2 / n_e``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .bounds import BoundConfig, RadiusTable, anytime_radii, path_bounds
from .estimator import solve_bias
from .graph import Graph, Path, Route, second_shortest_simple_path, shortest_path
from .similarity import SimilarityModel

__all__ = [
    "QueryOracle",
    "ActiveState",
    "RoundRecord",
    "Stopped",
    "Continued",
    "ActiveReport",
    "greedy_pick",
    "greedy_allocation",
    "challenger",
    "initialize",
    "step",
    "run_aesp",
    "run_random_baseline",
    "default_max_rounds",
]


class QueryOracle(Protocol):
    def sample(self, edge: int) -> float:
        """One fresh real cost sample on ``edge``."""


def greedy_pick(sigma2: np.ndarray, counts: np.ndarray) -> int:
    """``argmax sigma2 / n`` with ``sigma2 / 0 = inf``; ties go to the lowest edge id."""
    counts = np.asarray(counts)
    unseen = np.flatnonzero(counts == 0)
    if unseen.size:
        return int(unseen[0])
    return int(np.argmax(np.asarray(sigma2, dtype=float) / counts))


def greedy_allocation(sigma2, initial_counts, total: int) -> np.ndarray:
    """Run the greedy rule in isolation until ``total`` samples are allocated."""
    counts = np.array(initial_counts, dtype=int)
    while counts.sum() < total:
        counts[greedy_pick(sigma2, counts)] += 1
    return counts


def challenger(g: Graph, mu_hat, r: RadiusTable, best: Path) -> Route:
    """Minimum-LCB path other than ``best``.

    Runs the LCB shortest path; if that is ``best`` itself, takes the
    second-shortest simple path (Yen, K=2). With no alternative route the
    result is ``best``.
    """
    lcb = np.asarray(mu_hat, dtype=float) - r.beta
    src, sink = best.nodes[0], best.nodes[-1]
    first = shortest_path(g, lcb, src, sink)
    if first.path is not None and first.path != best:
        return first
    return second_shortest_simple_path(g, lcb, src, sink, best)


@dataclass
class ActiveState:
    graph: Graph
    src: int
    sink: int
    synthetic_mean: np.ndarray
    sigma2: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    t: int = 1
    sim_path: Path | None = None
    queries: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def real_mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def weights(self, kappa_minus: float = 1.0) -> np.ndarray:
        """``w_e(t) = kappa_minus * n_e(t) / sigma_e^2``."""
        return kappa_minus * self.counts / self.sigma2

    def record(self, edge: int, value: float) -> None:
        self.counts[edge] += 1
        self.sums[edge] += value
        self.queries.append((self.t, int(edge), float(value)))


@dataclass(frozen=True)
class RoundRecord:
    t: int
    gap: float
    best: tuple[int, ...]
    challenger: tuple[int, ...] | None
    best_estimate: float
    ucb_best: float
    lcb_challenger: float


@dataclass(frozen=True)
class Stopped:
    path: Path
    record: RoundRecord


@dataclass(frozen=True)
class Continued:
    edge: int
    record: RoundRecord


@dataclass(frozen=True)
class ActiveReport:
    certified: bool
    path: Path
    rounds: int
    counts: np.ndarray
    trace: tuple[RoundRecord, ...]
    queries: tuple[tuple[int, int, float], ...]
    rule: str = "greedy"

    @property
    def total_queries(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "rule": self.rule,
            "path": list(self.path.nodes),
            "rounds": self.rounds,
            "queries": self.total_queries,
            "counts": self.counts.tolist(),
            "gap_trace": [r.gap for r in self.trace],
            "best_estimate_trace": [r.best_estimate for r in self.trace],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def query_log_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("round,edge_id,value\n")
            for t, e, v in self.queries:
                fh.write(f"{t},{e},{v!r}\n")


def default_max_rounds(g: Graph, sigma2) -> int:
    return int(10 * g.edge_count * math.ceil(float(np.max(sigma2))))


def initialize(g: Graph, synthetic_mean, oracle: QueryOracle, src: int, sink: int, sigma2) -> ActiveState:
    """Query one real sample on every edge of the simulator-best path; ``t = 1``."""
    syn = np.asarray(synthetic_mean, dtype=float)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), syn.shape).copy()
    if np.any(sigma2 <= 0):
        raise ValueError("noise proxies must be positive")
    sim = shortest_path(g, syn, src, sink).path
    state = ActiveState(g, src, sink, syn, sigma2,
                        counts=np.zeros(syn.size, dtype=int), sums=np.zeros(syn.size),
                        t=1, sim_path=sim)
    for e in sim.edges:
        state.record(e, oracle.sample(e))
    state.t = 1
    return state


def _round(state: ActiveState, m: SimilarityModel, cfg: BoundConfig):
    w = state.weights(cfg.kappa_minus)
    y = np.where(state.counts > 0, state.real_mean - state.synthetic_mean, 0.0)
    mu_hat = state.synthetic_mean + solve_bias(y, w, m, cfg.lam)
    radii = anytime_radii(m, w, cfg, state.t)
    g = state.graph
    best = shortest_path(g, mu_hat, state.src, state.sink).path
    ucb_best = path_bounds(best, mu_hat, radii)[1]
    chal = challenger(g, mu_hat, radii, best)
    if chal.path is None:
        # unresolved challenger: never certify on it
        lcb_chal, chal_nodes = -math.inf, None
    elif chal.path == best:
        lcb_chal, chal_nodes = math.inf, best.nodes
    else:
        lcb_chal, chal_nodes = path_bounds(chal.path, mu_hat, radii)[0], chal.path.nodes
    rec = RoundRecord(state.t, ucb_best - lcb_chal, best.nodes, chal_nodes,
                      best.cost(mu_hat), ucb_best, lcb_chal)
    return best, rec


def step(state: ActiveState, m: SimilarityModel, cfg: BoundConfig, oracle: QueryOracle,
         epsilon: float = 0.0, rule: str = "greedy", rng: np.random.Generator | None = None):
    """One A-ESP round: certify and return :class:`Stopped`, or query and return :class:`Continued`.

    A graph with a single route certifies immediately.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    best, rec = _round(state, m, cfg)
    state.trace.append(rec)
    if rec.ucb_best <= rec.lcb_challenger + epsilon:
        return Stopped(best, rec)
    if rule == "greedy":
        edge = greedy_pick(state.sigma2, state.counts)
    elif rule == "random":
        if rng is None:
            raise ValueError("random rule needs an rng")
        edge = int(rng.integers(state.counts.size))
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    state.record(edge, oracle.sample(edge))
    state.t += 1
    return Continued(edge, rec)


def _run(g, m, cfg, oracle, src, sink, synthetic_mean, sigma2, epsilon, max_rounds, rule, rng) -> ActiveReport:
    state = initialize(g, synthetic_mean, oracle, src, sink, sigma2)
    if max_rounds is None:
        max_rounds = default_max_rounds(g, state.sigma2)
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    certified = False
    path = state.sim_path
    for _ in range(max_rounds):
        out = step(state, m, cfg, oracle, epsilon, rule, rng)
        if isinstance(out, Stopped):
            certified, path = True, out.path
            break
        path = Path.from_nodes(g, out.record.best)
    return ActiveReport(certified, path, len(state.trace), state.counts.copy(), tuple(state.trace),
                        tuple(state.queries), rule)


def run_aesp(g: Graph, m: SimilarityModel, cfg: BoundConfig, oracle: QueryOracle, src: int, sink: int,
             synthetic_mean, sigma2, epsilon: float = 0.0, max_rounds: int | None = None) -> ActiveReport:
    """Loop A-ESP rounds until certification or ``max_rounds`` rounds.

    An exhausted budget returns the current empirical best with
    ``certified=False``.
    """
    return _run(g, m, cfg, oracle, src, sink, synthetic_mean, sigma2, epsilon, max_rounds, "greedy", None)


def run_random_baseline(g: Graph, m: SimilarityModel, cfg: BoundConfig, oracle: QueryOracle, src: int,
                        sink: int, synthetic_mean, sigma2, epsilon: float = 0.0,
                        max_rounds: int | None = None, seed=None) -> ActiveReport:
    """Same loop and initialization, but queries an edge uniformly at random."""
    rng = np.random.default_rng(seed)
    return _run(g, m, cfg, oracle, src, sink, synthetic_mean, sigma2, epsilon, max_rounds, "random", rng)
