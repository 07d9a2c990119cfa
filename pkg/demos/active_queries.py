"""Cold start: query real costs one at a time until the best route is certified.

Compares greedy variance balancing with uniformly random queries on the same
instances and the same initial samples.

Run: python demos/active_queries.py
"""
import numpy as np

from calpath import (BoundConfig, GaussianOracle, SyntheticSpec, grid_graph, heat_kernel, make_instance,
                     run_aesp, run_random_baseline)


def main():
    g = grid_graph(3, 4)
    m = heat_kernel(g, t=0.5)
    greedy, random = [], []
    for seed in range(10):
        truth, _ = make_instance(g, m, SyntheticSpec(mu_sd=20.0, noise_sd=0.5, rho=5.0, B=5.0, seed=seed))
        cfg = BoundConfig(B=m.seminorm(truth.bias), lam=1.0, delta=0.1)
        args = (g, m, cfg)
        tail = (0, g.node_count - 1, truth.mu_sim, truth.sigma2)
        a = run_aesp(*args, GaussianOracle(truth.mu, np.sqrt(truth.sigma2), seed), *tail, max_rounds=3000)
        r = run_random_baseline(*args, GaussianOracle(truth.mu, np.sqrt(truth.sigma2), seed), *tail,
                                max_rounds=3000, seed=seed)
        greedy.append(a.rounds)
        random.append(r.rounds)
        status = "certified" if a.certified else "budget exhausted"
        print(f"seed {seed}: greedy {a.rounds:5d} rounds ({status}), random {r.rounds:5d} rounds")
    print(f"median rounds: greedy {np.median(greedy):g}, random {np.median(random):g}")


if __name__ == "__main__":
    main()
