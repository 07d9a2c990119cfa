"""Traffic sensor datasets (METR-LA / PEMS-BAY layout) as calibration instances.

A measurement matrix (timesteps x sensors) is split into a morning and an
afternoon window over one week. Afternoon statistics play the real costs,
morning statistics the simulator. The sensor adjacency is turned into an
intersection graph with exactly one edge per sensor.
"""
from __future__ import annotations

import itertools
import logging
import pickle
import warnings
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np
import pandas as pd

from .datagen import GroundTruth, stream
from .estimator import EdgeData
from .graph import Graph

__all__ = [
    "TrafficDataset",
    "WindowStats",
    "MORNING",
    "AFTERNOON",
    "KNOWN_SENSOR_COUNTS",
    "load_measurements",
    "load_adjacency",
    "load_traffic",
    "traffic_windows",
    "traffic_instance",
    "reconstruct_topology",
]

log = logging.getLogger(__name__)

MORNING = (6, 9)
AFTERNOON = (15, 18)
KNOWN_SENSOR_COUNTS = {207: "METR-LA", 325: "PEMS-BAY"}


@dataclass(frozen=True)
class TrafficDataset:
    values: np.ndarray
    timestamps: pd.DatetimeIndex
    adjacency: np.ndarray | None = None
    graph: Graph | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("measurement matrix must be 2-D (timesteps x sensors)")
        if len(self.timestamps) != values.shape[0]:
            raise ValueError("need one timestamp per row")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", pd.DatetimeIndex(self.timestamps))
        n = values.shape[1]
        if n not in KNOWN_SENSOR_COUNTS:
            warnings.warn(f"{n} sensors does not match METR-LA (207) or PEMS-BAY (325)", UserWarning)
        if self.adjacency is not None and np.shape(self.adjacency) != (n, n):
            raise ValueError("adjacency must be sensors x sensors")

    @property
    def sensor_count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WindowStats:
    sensors: np.ndarray
    mu_real: np.ndarray
    var_real: np.ndarray
    mu_sim: np.ndarray
    var_sim: np.ndarray
    n_real_window: int
    n_sim_window: int
    week_start: pd.Timestamp


def load_measurements(path) -> tuple[np.ndarray, pd.DatetimeIndex]:
    """CSV with a leading timestamp column, ``.npz`` with ``values``/``timestamps``, or pandas HDF5."""
    path = FsPath(path)
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as z:
            return z["values"].astype(float), pd.DatetimeIndex(z["timestamps"].astype("datetime64[ns]"))
    if path.suffix in (".h5", ".hdf5"):
        frame = pd.read_hdf(path)
    elif path.suffix == ".parquet":
        frame = pd.read_parquet(path)
        frame = frame.set_index(frame.columns[0]) if not isinstance(frame.index, pd.DatetimeIndex) else frame
    else:
        frame = pd.read_csv(path, index_col=0, parse_dates=[0])
    return frame.to_numpy(dtype=float), pd.DatetimeIndex(frame.index)


def load_adjacency(path) -> np.ndarray:
    """Dense CSV/``.npy`` matrix, or the ``(ids, id_to_index, matrix)`` pickle shipped with the datasets."""
    path = FsPath(path)
    if path.suffix == ".npy":
        return np.load(path)
    if path.suffix in (".pkl", ".pickle"):
        with open(path, "rb") as fh:
            obj = pickle.load(fh, encoding="latin1")
        return np.asarray(obj[-1] if isinstance(obj, (list, tuple)) else obj, dtype=float)
    return np.loadtxt(path, delimiter=",", ndmin=2)


def load_traffic(values_path, adjacency_path=None, threshold: float = 0.01) -> TrafficDataset:
    values, ts = load_measurements(values_path)
    adj = load_adjacency(adjacency_path) if adjacency_path is not None else None
    graph = reconstruct_topology(adj, threshold) if adj is not None else None
    return TrafficDataset(values, ts, adj, graph)


def _window_mask(ts: pd.DatetimeIndex, start: pd.Timestamp, hours: tuple[int, int]) -> np.ndarray:
    end = start + pd.Timedelta(days=7)
    return np.asarray((ts >= start) & (ts < end) & (ts.hour >= hours[0]) & (ts.hour < hours[1]))


def traffic_windows(ds: TrafficDataset, week_start=None, seed: int = 0, zero_is_missing: bool = True,
                    real_hours=AFTERNOON, sim_hours=MORNING) -> WindowStats:
    """Per-sensor mean and variance in the real (afternoon) and simulator (morning) windows.

    ``week_start`` is a date; ``None`` draws a whole-day start at random from
    the seed such that a full week fits. Zeros mark missing readings in the
    published files; sensors with no valid reading in either window are
    dropped with a warning.
    """
    ts = ds.timestamps
    if week_start is None:
        first = ts[0].normalize()
        if ts[0] != first:
            first += pd.Timedelta(days=1)
        last_start = ts[-1].normalize() - pd.Timedelta(days=7)
        n_days = (last_start - first).days
        if n_days < 0:
            raise ValueError("series shorter than one week")
        week_start = first + pd.Timedelta(days=int(stream(seed, "week").integers(n_days + 1)))
    week_start = pd.Timestamp(week_start)
    if week_start + pd.Timedelta(days=7) > ts[-1] + (ts[1] - ts[0] if len(ts) > 1 else pd.Timedelta(0)):
        raise ValueError("week window does not fit in the series")
    vals = ds.values.copy()
    if zero_is_missing:
        vals[vals == 0] = np.nan
    real = vals[_window_mask(ts, week_start, real_hours)]
    sim = vals[_window_mask(ts, week_start, sim_hours)]
    valid = (np.sum(np.isfinite(real), axis=0) >= 2) & (np.sum(np.isfinite(sim), axis=0) >= 2)
    if not valid.all():
        warnings.warn(f"excluding {int((~valid).sum())} sensors with missing data in the window", UserWarning)
    keep = np.flatnonzero(valid)
    real, sim = real[:, keep], sim[:, keep]
    return WindowStats(
        sensors=keep,
        mu_real=np.nanmean(real, axis=0),
        var_real=np.nanvar(real, axis=0, ddof=1),
        mu_sim=np.nanmean(sim, axis=0),
        var_sim=np.nanvar(sim, axis=0, ddof=1),
        n_real_window=real.shape[0],
        n_sim_window=sim.shape[0],
        week_start=week_start,
    )


def traffic_instance(ds: TrafficDataset, week_start=None, seed: int = 0, max_real: int = 20,
                     unobservable_fraction: float = 0.5) -> tuple[Graph, GroundTruth, EdgeData, WindowStats]:
    """Ground truth from window statistics, plus up to ``max_real`` Gaussian real draws per edge.

    The graph is restricted to sensors kept by :func:`traffic_windows`; edge
    ``k`` of the returned graph is sensor ``stats.sensors[k]``.
    """
    if ds.graph is None:
        raise ValueError("dataset has no reconstructed graph; pass an adjacency matrix")
    stats = traffic_windows(ds, week_start, seed)
    sensors = stats.sensors
    sub = [ds.graph.edges[s] for s in sensors]
    used = sorted({v for e in sub for v in e})
    relabel = {v: i for i, v in enumerate(used)}
    g = Graph(len(used), tuple((relabel[u], relabel[v]) for u, v in sub))
    truth = GroundTruth(stats.mu_real, stats.mu_real - stats.mu_sim, stats.mu_sim, stats.var_real)
    n = sensors.size
    hidden = np.zeros(n, dtype=bool)
    hidden[stream(seed, "mask").choice(n, int(round(unobservable_fraction * n)), replace=False)] = True
    rng = stream(seed, "samples")
    count = min(max_real, stats.n_real_window)
    real = tuple(np.empty(0) if hidden[e] else rng.normal(truth.mu[e], np.sqrt(truth.sigma2[e]), count)
                 for e in range(n))
    return g, truth, EdgeData.with_exact_synthetic(real, truth.mu_sim), stats


# -- topology reconstruction ------------------------------------------------------

class _Slots:
    """Union-find over sensor endpoint slots ``2*s`` and ``2*s + 1``."""

    def __init__(self, n):
        self.parent = list(range(2 * n))
        self.n = n
        self.used = [False] * (2 * n)

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def endpoints(self, s):
        return self.find(2 * s), self.find(2 * s + 1)

    def valid_after(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True
        seen = set()
        for s in range(self.n):
            x, y = (rb if r == ra else r for r in self.endpoints(s))
            if x == y:
                return False
            key = (min(x, y), max(x, y))
            if key in seen:
                return False
            seen.add(key)
        return True

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)
        self.used[a] = self.used[b] = True


def reconstruct_topology(adj, threshold: float = 0.01) -> Graph:
    """Intersection graph with one undirected edge per sensor.

    1. symmetrize and drop weights below ``threshold``;
    2. every 3-clique of sensors becomes a triangle (cliques in sorted order,
       skipped when a member is already fully wired);
    3. other adjacent pairs share exactly one endpoint where that creates no
       self-loop or parallel edge;
    4. remaining free endpoints become fresh nodes.

    Edge ``k`` of the result is sensor ``k``.
    """
    A = np.asarray(adj, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(A < 0):
        raise ValueError("adjacency must be nonnegative")
    n = A.shape[0]
    S = np.maximum(A, A.T)
    np.fill_diagonal(S, 0.0)
    S[S < threshold] = 0.0
    nbrs = [set(np.flatnonzero(S[i] > 0).tolist()) for i in range(n)]

    slots = _Slots(n)
    triangle_pairs = set()
    for a in range(n):
        for b in sorted(x for x in nbrs[a] if x > a):
            for c in sorted(x for x in nbrs[a] & nbrs[b] if x > b):
                ends = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1, 2 * c, 2 * c + 1]
                if any(slots.used[x] for x in ends):
                    continue
                slots.union(2 * a + 1, 2 * b)
                slots.union(2 * b + 1, 2 * c)
                slots.union(2 * c + 1, 2 * a)
                triangle_pairs.update({(a, b), (b, c), (a, c)})

    for a in range(n):
        for b in sorted(x for x in nbrs[a] if x > a):
            if (a, b) in triangle_pairs:
                continue
            if set(slots.endpoints(a)) & set(slots.endpoints(b)):
                continue
            options = sorted(itertools.product((2 * a, 2 * a + 1), (2 * b, 2 * b + 1)),
                             key=lambda p: (slots.used[p[0]] + slots.used[p[1]], p))
            for x, y in options:
                if slots.valid_after(x, y):
                    slots.union(x, y)
                    break
            else:
                log.debug("sensors %d and %d cannot share an endpoint", a, b)

    roots = sorted({slots.find(x) for x in range(2 * n)})
    node_of = {r: i for i, r in enumerate(roots)}
    edges = tuple((node_of[slots.find(2 * s)], node_of[slots.find(2 * s + 1)]) for s in range(n))
    return Graph(len(roots), edges)
