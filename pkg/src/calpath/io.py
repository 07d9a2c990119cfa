"""Instance bundles: a directory holding graph, similarity, truth and samples.

``samples.csv`` has columns ``edge_id,kind,value`` with ``kind`` one of
``real``, ``synthetic`` or ``synthetic_mean`` (exactly known simulator mean).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .datagen import GroundTruth
from .estimator import EdgeData
from .graph import Graph, read_graph_json, write_graph_json
from .similarity import SimilarityModel, read_csv

__all__ = ["Instance", "write_instance", "read_instance", "write_samples", "read_samples"]

GRAPH_FILE = "graph.json"
SIMILARITY_FILE = "similarity.csv"
TRUTH_FILE = "truth.csv"
SAMPLES_FILE = "samples.csv"


@dataclass(frozen=True)
class Instance:
    graph: Graph
    similarity: SimilarityModel
    data: EdgeData
    truth: GroundTruth | None = None


def write_samples(d: EdgeData, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["edge_id", "kind", "value"])
        for e, s in enumerate(d.real):
            for v in s:
                out.writerow([e, "real", repr(float(v))])
        if d.synthetic_means is not None:
            for e, v in enumerate(d.synthetic_means):
                out.writerow([e, "synthetic_mean", repr(float(v))])
        else:
            for e, s in enumerate(d.synthetic):
                for v in s:
                    out.writerow([e, "synthetic", repr(float(v))])


def read_samples(path, edge_count: int) -> EdgeData:
    real = [[] for _ in range(edge_count)]
    syn = [[] for _ in range(edge_count)]
    means = np.full(edge_count, np.nan)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            e = int(row["edge_id"])
            if not 0 <= e < edge_count:
                raise ValueError(f"edge id {e} out of range in {path}")
            kind, value = row["kind"], float(row["value"])
            if kind == "real":
                real[e].append(value)
            elif kind == "synthetic":
                syn[e].append(value)
            elif kind == "synthetic_mean":
                means[e] = value
            else:
                raise ValueError(f"unknown sample kind {kind!r}")
    if np.all(np.isfinite(means)):
        return EdgeData.with_exact_synthetic(real, means)
    if np.any(np.isfinite(means)):
        raise ValueError("synthetic_mean rows must cover every edge or none")
    return EdgeData(tuple(real), tuple(syn))


def write_instance(directory, g: Graph, m: SimilarityModel, d: EdgeData, truth: GroundTruth | None = None) -> FsPath:
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_graph_json(g, directory / GRAPH_FILE)
    m.to_csv(directory / SIMILARITY_FILE)
    write_samples(d, directory / SAMPLES_FILE)
    if truth is not None:
        truth.to_csv(directory / TRUTH_FILE)
    return directory


def read_instance(directory) -> Instance:
    directory = FsPath(directory)
    g = read_graph_json(directory / GRAPH_FILE)
    m = read_csv(directory / SIMILARITY_FILE)
    if m.size != g.edge_count:
        raise ValueError("similarity matrix size does not match the graph")
    d = read_samples(directory / SAMPLES_FILE, g.edge_count)
    truth = GroundTruth.from_csv(directory / TRUTH_FILE) if (directory / TRUTH_FILE).exists() else None
    return Instance(g, m, d, truth)
