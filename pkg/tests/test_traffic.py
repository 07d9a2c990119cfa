import itertools
import pickle

import numpy as np
import pandas as pd
import pytest

from calpath.traffic import (AFTERNOON, MORNING, TrafficDataset, load_adjacency, load_measurements, load_traffic,
                             reconstruct_topology, traffic_instance, traffic_windows)

pytestmark = pytest.mark.filterwarnings("ignore:.*does not match METR-LA")


def series(n_sensors=4, days=8, seed=0):
    ts = pd.date_range("2012-03-01", periods=days * 288, freq="5min")
    rng = np.random.default_rng(seed)
    base = 60 + rng.normal(0, 3, (len(ts), n_sensors))
    afternoon = (ts.hour >= 15) & (ts.hour < 18)
    base[afternoon] -= 10  # afternoon congestion
    return base, ts


def test_window_sample_count():
    values, ts = series()
    stats = traffic_windows(TrafficDataset(values, ts), week_start="2012-03-01")
    assert stats.n_real_window == 252 and stats.n_sim_window == 252
    assert np.all(stats.mu_real < stats.mu_sim)


def test_constant_sensor():
    values, ts = series()
    values[:, 2] = 55.0
    stats = traffic_windows(TrafficDataset(values, ts), week_start="2012-03-01")
    assert stats.mu_real[2] == 55.0 and stats.mu_sim[2] == 55.0
    assert stats.var_real[2] == 0.0 and stats.var_sim[2] == 0.0


def test_swapped_windows_flip_bias():
    values, ts = series()
    ds = TrafficDataset(values, ts)
    a = traffic_windows(ds, "2012-03-01")
    b = traffic_windows(ds, "2012-03-01", real_hours=MORNING, sim_hours=AFTERNOON)
    assert np.allclose(a.mu_real - a.mu_sim, -(b.mu_real - b.mu_sim))


def test_missing_sensor_excluded():
    values, ts = series()
    values[:, 1] = 0.0
    with pytest.warns(UserWarning, match="excluding 1"):
        stats = traffic_windows(TrafficDataset(values, ts), "2012-03-01")
    assert stats.sensors.tolist() == [0, 2, 3]


def test_random_week_and_fit():
    values, ts = series(days=10)
    ds = TrafficDataset(values, ts)
    s1 = traffic_windows(ds, seed=3)
    assert s1.week_start == traffic_windows(ds, seed=3).week_start
    assert s1.week_start.normalize() == s1.week_start
    with pytest.raises(ValueError):
        traffic_windows(ds, "2012-03-08")


def test_sensor_count_warning():
    values, ts = series(n_sensors=3)
    with pytest.warns(UserWarning, match="207"):
        TrafficDataset(values, ts)
    with pytest.raises(ValueError):
        TrafficDataset(values[:, 0], ts)


def test_traffic_instance():
    values, ts = series(n_sensors=4)
    adj = np.zeros((4, 4))
    adj[0, 1] = adj[1, 2] = adj[0, 2] = 1.0
    ds = TrafficDataset(values, ts, adj, reconstruct_topology(adj))
    g, truth, data, stats = traffic_instance(ds, "2012-03-01", seed=1)
    assert g.edge_count == 4
    assert np.sum(data.n_real == 0) == 2
    assert set(data.n_real[data.observed].tolist()) == {20}
    assert np.allclose(truth.bias, stats.mu_real - stats.mu_sim)
    assert np.allclose(truth.mu - truth.bias, truth.mu_sim)


def test_topology_examples():
    tri = reconstruct_topology(np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], float))
    assert tri.node_count == 3 and tri.edge_count == 3
    path = reconstruct_topology(np.array([[0, 1], [0, 0]], float))
    assert path.node_count == 3
    assert set(path.edges[0]) & set(path.edges[1])
    lone = reconstruct_topology(np.zeros((1, 1)))
    assert lone.node_count == 2
    # below threshold counts as no connection
    assert reconstruct_topology(np.array([[0, 0.005], [0.005, 0]])).node_count == 4


def _check_graph(A, g, threshold=0.01):
    n = A.shape[0]
    assert g.edge_count == n
    assert all(u != v for u, v in g.edges)
    assert len({frozenset(e) for e in g.edges}) == n


def test_topology_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(2, 14))
        A = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
        _check_graph(A, reconstruct_topology(A))


def test_disjoint_cliques_become_triangles():
    rng = np.random.default_rng(1)
    for _ in range(10):
        k = int(rng.integers(1, 4))
        n = 3 * k + 2
        perm = rng.permutation(n)
        A = np.zeros((n, n))
        triples = [perm[3 * i: 3 * i + 3] for i in range(k)]
        for t in triples:
            for a, b in itertools.combinations(t, 2):
                A[a, b] = 1.0
        A[perm[-1], perm[-2]] = 1.0
        g = reconstruct_topology(A)
        _check_graph(A, g)
        for t in triples:
            nodes = set().union(*(g.edges[s] for s in t))
            assert len(nodes) == 3
        assert set(g.edges[perm[-1]]) & set(g.edges[perm[-2]])


def test_loaders(tmp_path):
    values, ts = series(n_sensors=2, days=8)
    frame = pd.DataFrame(values, index=ts)
    frame.to_csv(tmp_path / "v.csv")
    v, t = load_measurements(tmp_path / "v.csv")
    assert np.allclose(v, values) and (t == ts).all()
    np.savez(tmp_path / "v.npz", values=values, timestamps=ts.values)
    v, t = load_measurements(tmp_path / "v.npz")
    assert np.allclose(v, values) and (t == ts).all()
    adj = np.array([[1.0, 0.5], [0.0, 1.0]])
    np.save(tmp_path / "a.npy", adj)
    with open(tmp_path / "a.pkl", "wb") as fh:
        pickle.dump((["a", "b"], {"a": 0, "b": 1}, adj), fh)
    np.savetxt(tmp_path / "a.csv", adj, delimiter=",")
    for name in ("a.npy", "a.pkl", "a.csv"):
        assert np.array_equal(load_adjacency(tmp_path / name), adj)
    ds = load_traffic(tmp_path / "v.csv", tmp_path / "a.csv")
    assert ds.graph.edge_count == 2 and ds.graph.node_count == 3
