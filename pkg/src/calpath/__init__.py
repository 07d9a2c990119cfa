"""Calibrate biased simulator edge costs and route with certified confidence bounds."""
from .active import ActiveReport, run_aesp, run_random_baseline
from .bounds import BoundConfig, anytime_radii, leverage, static_radii, suboptimality_certificate
from .datagen import GaussianOracle, GroundTruth, SyntheticSpec, grid_graph, make_instance, smooth_bias_field
from .estimator import (EdgeData, baseline_const, baseline_real, baseline_sim, calibrate, fidelity_weights,
                        solve_bias, tune_lambda_cv, tune_lambda_discrepancy, tune_lambda_sure)
from .graph import Graph, Path, Route, enumerate_simple_paths, second_shortest_simple_path, shortest_path
from .similarity import SimilarityModel, build_similarity, from_matrix, heat_kernel, one_hop, two_hop

__version__ = "0.1.0"

__all__ = [
    "ActiveReport", "run_aesp", "run_random_baseline",
    "BoundConfig", "anytime_radii", "leverage", "static_radii", "suboptimality_certificate",
    "GaussianOracle", "GroundTruth", "SyntheticSpec", "grid_graph", "make_instance", "smooth_bias_field",
    "EdgeData", "baseline_const", "baseline_real", "baseline_sim", "calibrate", "fidelity_weights",
    "solve_bias", "tune_lambda_cv", "tune_lambda_discrepancy", "tune_lambda_sure",
    "Graph", "Path", "Route", "enumerate_simple_paths", "second_shortest_simple_path", "shortest_path",
    "SimilarityModel", "build_similarity", "from_matrix", "heat_kernel", "one_hop", "two_hop",
]
