"""Pick a route from calibrated costs and bound how far from optimal it can be.

Run: python demos/certified_route.py
"""
import numpy as np

from calpath import (BoundConfig, SyntheticSpec, calibrate, fidelity_weights, grid_graph, heat_kernel,
                     make_instance, shortest_path, static_radii, suboptimality_certificate)


def main():
    g = grid_graph(4, 5)
    m = heat_kernel(g, t=0.5)
    spec = SyntheticSpec(rho=5.0, B=20.0, noise_sd=10.0, n_real=40, unobservable_fraction=0.0, seed=4)
    truth, data = make_instance(g, m, spec)
    ws = fidelity_weights(data)
    fit = calibrate(data, m, lam=1.0, weights=ws)

    src, dst = 0, g.node_count - 1
    route = shortest_path(g, fit.mean, src, dst)
    best = shortest_path(g, truth.mu, src, dst)
    print(f"chosen route {route.path.nodes}, estimated cost {route.cost:.1f}")
    print(f"optimal route {best.path.nodes}, true cost {best.cost:.1f}")

    # Per-edge confidence radii at 90% simultaneous confidence, using the true bias seminorm.
    cfg = BoundConfig(B=m.seminorm(truth.bias), delta=0.1, lam=fit.lam)
    radii = static_radii(m, ws, cfg)
    print(f"radii range {radii.beta.min():.2f} .. {radii.beta.max():.2f}")
    cert = suboptimality_certificate(route.path, best.path, radii)
    true_gap = route.path.cost(truth.mu) - best.cost
    print(f"true gap {true_gap:.2f} <= certified bound {cert.bound:.2f}")
    covered = bool(np.all(np.abs(fit.bias - truth.bias) <= radii.beta))
    print(f"every edge's bias inside its radius: {covered}")


if __name__ == "__main__":
    main()
