import json

import numpy as np
import pandas as pd
import pytest

from calpath.datagen import SyntheticSpec, grid_graph, make_instance
from calpath.experiments import (ConfigError, ExperimentConfig, aggregate, config_hash, plan, run_active_sweep,
                                 run_estimation_sweep, run_experiment, run_path_sweep, write_outputs)
from calpath.io import write_instance
from calpath.similarity import heat_kernel

SMALL = {"type": "grid", "rows": 4, "cols": 4}


def cfg(**kw):
    doc = {"graph": SMALL, "seeds": 3}
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def test_fraction_sweep_cardinality():
    c = cfg(sweep={"observable_fraction": [0.25, 0.5, 0.75, 1.0]}, seeds=5)
    raw = run_estimation_sweep(c).raw_frame()
    assert len(raw) == 80
    assert (raw["rmse"] >= 0).all()
    assert plan(c)["jobs"] == 20


def test_noise_sweep_shapes():
    c = cfg(sweep={"noise_sd": [5.0, 20.0, 60.0]}, seeds=5, paired_seeds=True, estimators=["SIM", "REAL"])
    agg = run_estimation_sweep(c).aggregated_frame()
    real = agg[agg.estimator == "REAL"].sort_values("noise_sd")["rmse_mean"].to_numpy()
    sim = agg[agg.estimator == "SIM"].sort_values("noise_sd")["rmse_mean"].to_numpy()
    assert np.all(np.diff(real) > 0)
    assert np.allclose(sim, sim[0])


def test_bias_grid_sim_grows_with_B():
    c = cfg(sweep={"rho": [0.1, 10.0], "B": [0.0, 10.0, 50.0]}, seeds=3, paired_seeds=True, estimators=["SIM"])
    agg = run_estimation_sweep(c).aggregated_frame()
    for rho, part in agg.groupby("rho"):
        vals = part.sort_values("B")["rmse_mean"].to_numpy()
        assert vals[0] == 0.0 and np.all(np.diff(vals) > 0)


def test_path_sweep_gaps():
    c = cfg(scenario="paths", graph={"type": "grid", "rows": 4, "cols": 5}, seeds=6,
            synthetic={"rho": 10.0, "B": 100.0, "noise_sd": 10.0})
    raw = run_path_sweep(c).raw_frame()
    assert (raw["gap"] >= 0).all()
    assert (raw["source"] != raw["target"]).all()
    mean = raw.groupby("estimator")["gap"].mean()
    assert mean["ours"] <= mean["SIM"]


def test_perfect_estimator_zero_gap():
    # no noise, everything observed, no bias: every estimator sees the truth
    c = cfg(scenario="paths", seeds=4, synthetic={"noise_sd": 0.0, "B": 0.0, "unobservable_fraction": 0.0})
    raw = run_path_sweep(c).raw_frame()
    assert (raw["gap"] == 0).all()


ACTIVE = dict(scenario="active", graph={"type": "grid", "rows": 3, "cols": 4},
              synthetic={"noise_sd": 5.0, "B": 5.0, "rho": 5.0}, lam=1.0, max_rounds=400, paired_seeds=True)


def test_active_sweep_paired_and_monotone_in_delta():
    c = cfg(**ACTIVE, seeds=6, sweep={"delta": [0.2, 0.1, 0.05]})
    res = run_active_sweep(c)
    raw = res.raw_frame()
    for method in ("aesp", "random"):
        part = raw[raw.estimator == method].pivot(index="seed", columns="delta", values="rounds")
        assert (part[0.1] >= part[0.2]).all() and (part[0.05] >= part[0.1]).all()
    a = raw[(raw.estimator == "aesp") & (raw.delta == 0.1)]["rounds"]
    r = raw[(raw.estimator == "random") & (raw.delta == 0.1)]["rounds"]
    assert a.median() <= r.median()
    traces = pd.DataFrame(res.traces)
    first = traces[traces.t == 1].set_index(["point", "seed", "method"])["gap"].unstack()
    assert np.allclose(first["aesp"], first["random"])
    certified = raw[raw.certified == 1.0]
    assert (certified["gap"] == 0).all()


def test_outputs_deterministic(tmp_path):
    c = cfg(sweep={"B": [1.0, 20.0]}, seeds=2)
    m1 = write_outputs(run_experiment(c), tmp_path / "a")
    m2 = write_outputs(run_experiment(c, jobs=2), tmp_path / "b")
    assert m1 == m2
    for name in ("raw.csv", "aggregated.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    h = config_hash(c)
    for name in ("raw.csv", "aggregated.csv"):
        assert set(pd.read_csv(tmp_path / "a" / name)["config_hash"].astype(str)) == {h}
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"] == h


def test_active_outputs_carry_hash(tmp_path):
    c = cfg(**ACTIVE, seeds=1)
    write_outputs(run_active_sweep(c), tmp_path)
    traces = pd.read_csv(tmp_path / "traces.csv")
    assert set(traces["config_hash"].astype(str)) == {config_hash(c)}


def test_adding_points_keeps_existing_seeds():
    a = run_estimation_sweep(cfg(sweep={"B": [5.0]}, seeds=2)).raw_frame()
    b = run_estimation_sweep(cfg(sweep={"B": [5.0, 9.0]}, seeds=2)).raw_frame()
    assert np.array_equal(a["rmse"].to_numpy(), b[b.B == 5.0]["rmse"].to_numpy())


def test_aggregation_matches_recomputation():
    c = cfg(sweep={"B": [1.0, 30.0]}, seeds=4)
    res = run_estimation_sweep(c)
    raw, agg = res.raw_frame(), res.aggregated_frame()
    for _, row in agg.iterrows():
        vals = raw[(raw.B == row.B) & (raw.estimator == row.estimator)]["rmse"].to_numpy()
        assert row.runs == 4
        assert row.rmse_mean == pytest.approx(vals.mean(), rel=1e-12)
        assert row.rmse_sd == pytest.approx(vals.std(ddof=1), rel=1e-12)
    assert aggregate(raw, ["B"]).equals(agg)


def test_bundle_source(tmp_path):
    g = grid_graph(3, 3)
    m = heat_kernel(g, 0.5)
    truth, data = make_instance(g, m, SyntheticSpec(seed=0))
    write_instance(tmp_path, g, m, data, truth)
    c = cfg(graph={"type": "bundle", "path": str(tmp_path)}, similarity={}, seeds=2)
    raw = run_estimation_sweep(c).raw_frame()
    assert len(raw) == 8


@pytest.mark.parametrize("doc", [
    {"seeds": 0},
    {"scenario": "fly"},
    {"graph": {"type": "hexagon"}},
    {"estimators": ["ours", "magic"]},
    {"sweep": {"colour": [1, 2]}},
    {"sweep": {"B": []}},
    {"sweep": {"B": [-1.0]}},
    {"sweep": {"unobservable_fraction": [1.5]}},
    {"sweep": {"epsilon": [-0.1]}},
    {"lam": "guess"},
    {"scenario": "active", "lam": "sure"},
    {"synthetic": {"nosie_sd": 1.0}},
    {"graph": {"type": "edge_list", "path": "/nonexistent/edges.txt"}},
    {"unknown_key": 1},
])
def test_config_errors_before_running(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)
