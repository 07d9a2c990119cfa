"""Sweep runner for estimation, path and active-learning studies.

A run is a grid of sweep points times seeds. Every job owns its random
streams, keyed by the root seed, the sweep-point index and the seed index, so
jobs can execute in any order or in parallel and the tables come out the same.
"""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path as FsPath

import numpy as np
import pandas as pd

from .active import run_aesp, run_random_baseline
from .bounds import BoundConfig
from .datagen import GaussianOracle, GroundTruth, SyntheticSpec, grid_graph, make_instance, sample_edge_data, stream
from .estimator import EdgeData, baseline_const, baseline_real, baseline_sim, calibrate, fidelity_weights
from .graph import CapacityError, Graph, count_simple_paths, enumerate_simple_paths, read_edge_list, \
    read_graph_json, shortest_path
from .io import read_instance
from .similarity import SimilarityModel, build_similarity

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricRow",
    "SweepResult",
    "SCENARIOS",
    "ESTIMATORS",
    "SWEEP_AXES",
    "config_hash",
    "plan",
    "load_problem",
    "run_estimation_sweep",
    "run_path_sweep",
    "run_active_sweep",
    "run_experiment",
    "aggregate",
    "write_outputs",
]

log = logging.getLogger(__name__)

SCENARIOS = ("estimation", "paths", "active")
ESTIMATORS = ("ours", "SIM", "REAL", "CONST")
LAMBDA_RULES = ("sure", "cv", "discrepancy")
_SPEC_AXES = tuple(f.name for f in dataclasses.fields(SyntheticSpec) if f.name != "seed")
SWEEP_AXES = _SPEC_AXES + ("observable_fraction", "lam", "delta", "epsilon", "kappa_plus", "kappa_minus")
GRAPH_TYPES = ("grid", "edge_list", "json", "bundle")


class ConfigError(ValueError):
    """Invalid experiment configuration; raised before any job runs."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    ``graph`` is a dict with ``type`` in ``grid`` (``rows``, ``cols``,
    ``drop``), ``edge_list`` / ``json`` (``path``), or ``bundle`` (``path`` to an
    instance directory whose ground truth is resampled per seed).
    ``paired_seeds`` drops the sweep-point index from the seed key so every
    point sees the same instances.
    """

    scenario: str = "estimation"
    graph: dict = field(default_factory=lambda: {"type": "grid", "rows": 10, "cols": 6, "drop": 4})
    similarity: dict = field(default_factory=lambda: {"kind": "heat", "t": 0.5})
    synthetic: dict = field(default_factory=dict)
    estimators: tuple = ESTIMATORS
    lam: float | str = "sure"
    sweep: dict = field(default_factory=dict)
    seeds: int = 5
    root_seed: int = 0
    paired_seeds: bool = False
    out: str = "results"
    delta: float = 0.1
    epsilon: float = 0.0
    kappa_plus: float = 1.0
    kappa_minus: float = 1.0
    bias_coefficient: str = "printed"
    bias_bound: float | None = None
    max_rounds: int | None = 2000
    min_routes: int | None = None
    pair_retries: int = 200
    enumerate_max_edges: int = 24

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "estimators" in doc:
            doc["estimators"] = tuple(doc["estimators"])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["estimators"] = list(self.estimators)
        return doc

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not isinstance(self.seeds, int) or self.seeds < 1:
            raise ConfigError("seeds must be a positive integer")
        if self.graph.get("type") not in GRAPH_TYPES:
            raise ConfigError(f"graph.type must be one of {GRAPH_TYPES}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigError(f"estimators must be a nonempty subset of {ESTIMATORS}, got {bad}")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {axis!r}; known: {SWEEP_AXES}")
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"sweep axis {axis!r} needs a nonempty list of values")
        if "observable_fraction" in self.sweep and "unobservable_fraction" in self.sweep:
            raise ConfigError("sweep either observable_fraction or unobservable_fraction, not both")
        unknown_spec = set(self.synthetic) - set(_SPEC_AXES)
        if unknown_spec:
            raise ConfigError(f"unknown synthetic keys: {sorted(unknown_spec)}")
        if self.scenario == "active" and (isinstance(self.lam, str) or "lam" in self.sweep
                                          and any(isinstance(v, str) for v in self.sweep["lam"])):
            raise ConfigError("the active scenario needs a numeric lam")
        if isinstance(self.lam, str) and self.lam not in LAMBDA_RULES:
            raise ConfigError(f"lam must be a number or one of {LAMBDA_RULES}")
        # build every point's objects once so bad values fail before any run
        for coords in sweep_points(self):
            try:
                _spec(self, coords, 0)
                _bound_config(self, coords, 0.0)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid sweep point {coords}: {exc}") from exc
            eps = coords.get("epsilon", self.epsilon)
            if eps < 0:
                raise ConfigError("epsilon must be nonnegative")
        try:
            load_problem(self)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load graph or similarity: {exc}") from exc


@dataclass(frozen=True)
class MetricRow:
    point: int
    seed: int
    coords: dict
    estimator: str
    rmse: float = math.nan
    gap: float = math.nan
    rounds: float = math.nan
    certified: float = math.nan
    queries: float = math.nan
    lam: float = math.nan
    source: int = -1
    target: int = -1

    def flat(self, axes) -> dict:
        row = {"point": self.point, "seed": self.seed}
        row.update({a: self.coords[a] for a in axes})
        row.update({k: getattr(self, k) for k in
                    ("estimator", "rmse", "gap", "rounds", "certified", "queries", "lam", "source", "target")})
        return row


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list
    traces: list = field(default_factory=list)

    @property
    def axes(self) -> list[str]:
        return list(self.config.sweep)

    def raw_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.flat(self.axes) for r in self.rows])
        frame.insert(0, "config_hash", config_hash(self.config))
        return frame

    def aggregated_frame(self) -> pd.DataFrame:
        return aggregate(self.raw_frame(), self.axes)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def sweep_points(cfg: ExperimentConfig) -> list[dict]:
    axes = list(cfg.sweep)
    return [dict(zip(axes, combo)) for combo in itertools.product(*(cfg.sweep[a] for a in axes))]


def plan(cfg: ExperimentConfig) -> dict:
    """Resolved job plan, as printed by ``--dry-run``."""
    points = sweep_points(cfg)
    return {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "points": [{"point": i, **p} for i, p in enumerate(points)],
        "seeds": cfg.seeds,
        "jobs": len(points) * cfg.seeds,
    }


def _job_seed(cfg: ExperimentConfig, point: int, seed_index: int) -> int:
    key = (seed_index,) if cfg.paired_seeds else (point, seed_index)
    return int(stream(cfg.root_seed, "job", *key).integers(2 ** 31))


def _spec(cfg: ExperimentConfig, coords: dict, seed: int) -> SyntheticSpec:
    doc = dict(cfg.synthetic)
    for k, v in coords.items():
        if k in _SPEC_AXES:
            doc[k] = v
        elif k == "observable_fraction":
            doc["unobservable_fraction"] = 1.0 - float(v)
    doc["seed"] = seed
    return SyntheticSpec(**doc)


def _bound_config(cfg: ExperimentConfig, coords: dict, B: float) -> BoundConfig:
    lam = coords.get("lam", cfg.lam)
    return BoundConfig(
        B=B,
        kappa_plus=coords.get("kappa_plus", cfg.kappa_plus),
        kappa_minus=coords.get("kappa_minus", cfg.kappa_minus),
        delta=coords.get("delta", cfg.delta),
        lam=float(lam) if not isinstance(lam, str) else 1.0,
        bias_coefficient=cfg.bias_coefficient,
    )


@lru_cache(maxsize=8)
def _load_graph(graph_json: str) -> tuple[Graph, object]:
    doc = json.loads(graph_json)
    kind = doc["type"]
    if kind == "grid":
        return grid_graph(int(doc.get("rows", 10)), int(doc.get("cols", 6)), int(doc.get("drop", 0))), None
    if kind == "edge_list":
        return read_edge_list(doc["path"]), None
    if kind == "json":
        return read_graph_json(doc["path"]), None
    inst = read_instance(doc["path"])
    if inst.truth is None:
        raise ConfigError("bundle graph source needs truth.csv")
    return inst.graph, inst


@lru_cache(maxsize=8)
def _load_similarity(graph_json: str, sim_json: str) -> SimilarityModel:
    g, inst = _load_graph(graph_json)
    params = json.loads(sim_json)
    if inst is not None and not params:
        return inst.similarity
    params = dict(params) or {"kind": "heat"}
    return build_similarity(g, params.pop("kind", "heat"), **params)


def load_problem(cfg: ExperimentConfig):
    graph_json = json.dumps(cfg.graph, sort_keys=True)
    sim = {} if cfg.graph.get("type") == "bundle" and cfg.similarity == {} else cfg.similarity
    g, inst = _load_graph(graph_json)
    return g, _load_similarity(graph_json, json.dumps(sim, sort_keys=True)), inst


def _instance(cfg, coords, seed) -> tuple[Graph, SimilarityModel, GroundTruth, EdgeData]:
    g, m, inst = load_problem(cfg)
    spec = _spec(cfg, coords, seed)
    if inst is None:
        truth, data = make_instance(g, m, spec)
    else:
        truth = inst.truth
        data = sample_edge_data(truth, spec, stream(seed, "mask"), stream(seed, "samples"))
    return g, m, truth, data


def _estimate(name: str, data: EdgeData, m: SimilarityModel, lam, spec_noise: float):
    """Estimated means for one estimator, plus the lambda used (NaN for baselines)."""
    if name == "SIM":
        return baseline_sim(data), math.nan
    if name == "REAL":
        return baseline_real(data), math.nan
    ws = fidelity_weights(data, sigma2=spec_noise)
    if name == "CONST":
        if not ws.weights.sum() > 0:
            # nothing observed: the shift is zero and CONST coincides with SIM
            return baseline_sim(data), math.nan
        return baseline_const(data, ws), math.nan
    res = calibrate(data, m, lam=lam, weights=ws)
    return res.mean, res.lam


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _estimation_job(cfg: ExperimentConfig, point: int, coords: dict, seed_index: int):
    seed = _job_seed(cfg, point, seed_index)
    g, m, truth, data = _instance(cfg, coords, seed)
    lam = coords.get("lam", cfg.lam)
    noise = float(np.mean(truth.sigma2))
    rows = []
    for name in cfg.estimators:
        mu_hat, used = _estimate(name, data, m, lam, noise)
        rows.append(MetricRow(point, seed_index, coords, name, rmse=_rmse(mu_hat, truth.mu), lam=used))
    return rows, []


def _pick_pair(g: Graph, seed: int, min_routes: int, retries: int) -> tuple[int, int]:
    rng = stream(seed, "pair")
    for _ in range(retries):
        s, t = (int(x) for x in rng.choice(g.node_count, size=2, replace=False))
        try:
            if count_simple_paths(g, s, t, limit=max(min_routes, 1)) >= min_routes:
                return s, t
        except CapacityError:
            return s, t
    raise RuntimeError(f"no source-target pair with at least {min_routes} routes after {retries} tries")


def _optimum(g: Graph, mu, s: int, t: int, enumerate_max_edges: int):
    best = shortest_path(g, mu, s, t).path
    if g.edge_count <= enumerate_max_edges:
        costs = [p.cost(mu) for p in enumerate_simple_paths(g, s, t)]
        if best.cost(mu) > min(costs) + 1e-9:
            raise RuntimeError("shortest path disagrees with enumeration")
    return best


def _path_job(cfg: ExperimentConfig, point: int, coords: dict, seed_index: int):
    seed = _job_seed(cfg, point, seed_index)
    g, m, truth, data = _instance(cfg, coords, seed)
    s, t = _pick_pair(g, seed, cfg.min_routes or 2, cfg.pair_retries)
    star = _optimum(g, truth.mu, s, t, cfg.enumerate_max_edges)
    mu_star = star.cost(truth.mu)
    lam = coords.get("lam", cfg.lam)
    noise = float(np.mean(truth.sigma2))
    rows = []
    for name in cfg.estimators:
        mu_hat, used = _estimate(name, data, m, lam, noise)
        p_hat = shortest_path(g, mu_hat, s, t).path
        gap = max(p_hat.cost(truth.mu) - mu_star, 0.0) if p_hat != star else 0.0
        rows.append(MetricRow(point, seed_index, coords, name, rmse=_rmse(mu_hat, truth.mu), gap=gap,
                              lam=used, source=s, target=t))
    return rows, []


def _active_job(cfg: ExperimentConfig, point: int, coords: dict, seed_index: int):
    seed = _job_seed(cfg, point, seed_index)
    g, m, truth, _ = _instance(cfg, coords, seed)
    s, t = _pick_pair(g, seed, cfg.min_routes or 10, cfg.pair_retries)
    star = _optimum(g, truth.mu, s, t, cfg.enumerate_max_edges)
    mu_star = star.cost(truth.mu)
    B = cfg.bias_bound if cfg.bias_bound is not None else m.seminorm(truth.bias)
    bcfg = _bound_config(cfg, coords, B)
    eps = coords.get("epsilon", cfg.epsilon)
    oracle_seed = int(stream(seed, "oracle").integers(2 ** 31))
    rows, traces = [], []
    for method in ("aesp", "random"):
        oracle = GaussianOracle(truth.mu, np.sqrt(truth.sigma2), oracle_seed)
        if method == "aesp":
            rep = run_aesp(g, m, bcfg, oracle, s, t, truth.mu_sim, truth.sigma2, eps, cfg.max_rounds)
        else:
            rep = run_random_baseline(g, m, bcfg, oracle, s, t, truth.mu_sim, truth.sigma2, eps,
                                      cfg.max_rounds, seed=stream(seed, "random-rule"))
        gap = max(rep.path.cost(truth.mu) - mu_star, 0.0) if rep.path != star else 0.0
        rows.append(MetricRow(point, seed_index, coords, method, gap=gap, rounds=rep.rounds,
                              certified=float(rep.certified), queries=rep.total_queries,
                              lam=bcfg.lam, source=s, target=t))
        traces.extend({"point": point, "seed": seed_index, "method": method, "t": r.t, "gap": r.gap,
                       "best_estimate": r.best_estimate} for r in rep.trace)
    return rows, traces


_JOBS = {"estimation": _estimation_job, "paths": _path_job, "active": _active_job}


def _call(args):
    fn, cfg, point, coords, seed_index = args
    return fn(cfg, point, coords, seed_index)


def _run(cfg: ExperimentConfig, fn, jobs: int = 1) -> SweepResult:
    cfg.validate()
    tasks = [(fn, cfg, i, coords, k) for i, coords in enumerate(sweep_points(cfg)) for k in range(cfg.seeds)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_call, tasks))
    else:
        results = [_call(task) for task in tasks]
    rows = [r for rs, _ in results for r in rs]
    traces = [tr for _, ts in results for tr in ts]
    return SweepResult(cfg, rows, traces)


def run_estimation_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """RMSE of every configured estimator at every sweep point and seed."""
    return _run(cfg, _estimation_job, jobs)


def run_path_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """True cost gap of each estimator's shortest path on a random source-target pair per seed."""
    return _run(cfg, _path_job, jobs)


def run_active_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Paired A-ESP and random-query runs sharing instance, pair and initialization."""
    return _run(cfg, _active_job, jobs)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    return {"estimation": run_estimation_sweep, "paths": run_path_sweep,
            "active": run_active_sweep}[cfg.scenario](cfg, jobs)


def aggregate(raw: pd.DataFrame, axes) -> pd.DataFrame:
    """Per sweep point and estimator: mean and sample sd (``ddof=1``) of each metric."""
    keys = ["config_hash", "point", *axes, "estimator"]
    metrics = ["rmse", "gap", "rounds", "certified", "queries"]
    grouped = raw.groupby(keys, sort=True, dropna=False)[metrics]
    mean = grouped.mean().add_suffix("_mean")
    sd = grouped.std(ddof=1).add_suffix("_sd")
    out = pd.concat([mean, sd], axis=1)
    out.insert(0, "runs", grouped.size())
    return out.reset_index()


def write_outputs(result: SweepResult, out_dir) -> dict:
    """Raw CSV, aggregated CSV, optional trace CSV and a JSON manifest."""
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash(result.config)
    files = {"raw": "raw.csv", "aggregated": "aggregated.csv"}
    result.raw_frame().to_csv(out_dir / files["raw"], index=False, float_format="%.10g")
    result.aggregated_frame().to_csv(out_dir / files["aggregated"], index=False, float_format="%.10g")
    if result.traces:
        files["traces"] = "traces.csv"
        traces = pd.DataFrame(result.traces)
        traces.insert(0, "config_hash", h)
        traces.to_csv(out_dir / files["traces"], index=False, float_format="%.10g")
    manifest = {"config_hash": h, "config": result.config.to_dict(), "files": files,
                "rows": len(result.rows)}
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
    return manifest
