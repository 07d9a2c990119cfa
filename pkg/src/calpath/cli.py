"""Command-line entry point: ``calpath <verb> [options]``.

Verbs ``estimate``, ``paths`` and ``active`` run a configured sweep, or act on
a single instance bundle with ``--instance``. ``gen-instance`` writes a
synthetic bundle and ``ingest-traffic`` turns a sensor dataset into one.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path as FsPath

import numpy as np
import yaml

from . import __version__
from .active import run_aesp
from .bounds import BoundConfig, static_radii, suboptimality_certificate
from .datagen import GaussianOracle, SyntheticSpec, make_instance
from .estimator import calibrate, fidelity_weights
from .experiments import ConfigError, ExperimentConfig, load_problem, plan, run_experiment, write_outputs
from .graph import shortest_path
from .io import read_instance, write_instance
from .similarity import build_similarity
from .traffic import load_traffic, traffic_instance

log = logging.getLogger("calpath")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
_VERB_SCENARIO = {"estimate": "estimation", "paths": "paths", "active": "active"}


def _parse_value(text: str):
    return yaml.safe_load(text)


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars or lists."""
    doc = json.loads(json.dumps(doc))
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key!r}: {p!r} is not a mapping")
        node[parts[-1]] = _parse_value(value)
    return doc


def load_config(path) -> dict:
    """JSON or YAML file holding one mapping."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config file must contain a mapping")
    return doc


def resolve_config(args, scenario: str | None = None) -> ExperimentConfig:
    # file keys replace the defaults wholesale; --set edits inside them
    doc = {**ExperimentConfig().to_dict(), **load_config(args.config)}
    doc = apply_overrides(doc, args.set)
    if scenario is not None:
        if args.config is None or "scenario" not in load_config(args.config):
            doc["scenario"] = scenario
        if doc["scenario"] != scenario:
            raise ConfigError(f"config scenario {doc['scenario']!r} does not match verb")
    if args.seed is not None:
        doc["root_seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    try:
        return ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=str)


# -- verbs ----------------------------------------------------------------------

def _sweep(args, scenario: str) -> int:
    cfg = resolve_config(args, scenario)
    if args.dry_run:
        print(_dump(plan(cfg)))
        return EXIT_OK
    result = run_experiment(cfg, jobs=args.jobs)
    manifest = write_outputs(result, cfg.out)
    print(f"wrote {manifest['rows']} rows to {cfg.out} (config {manifest['config_hash']})")
    return EXIT_OK


def _instance_estimate(args) -> int:
    inst = read_instance(args.instance)
    lam = args.lam if args.lam in ("sure", "cv", "discrepancy") else float(args.lam)
    out = FsPath(args.out or "calibration")
    if args.dry_run:
        print(_dump({"instance": args.instance, "lam": lam, "out": str(out)}))
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    ws = fidelity_weights(inst.data, sigma2=args.sigma2)
    res = calibrate(inst.data, inst.similarity, lam=lam, weights=ws)
    res.to_csv(out / "calibrated.csv")
    summary = {"lam": res.lam, "residual": res.residual, "dof": res.dof}
    if inst.truth is not None:
        summary["rmse"] = float(np.sqrt(np.mean((res.mean - inst.truth.mu) ** 2)))
    with open(out / "summary.json", "w") as fh:
        fh.write(_dump(summary))
    print(_dump(summary))
    return EXIT_OK


def _instance_paths(args) -> int:
    inst = read_instance(args.instance)
    if args.source is None or args.target is None:
        raise ConfigError("--instance with paths needs --source and --target")
    lam = args.lam if args.lam in ("sure", "cv", "discrepancy") else float(args.lam)
    out = FsPath(args.out or "paths")
    if args.dry_run:
        print(_dump({"instance": args.instance, "source": args.source, "target": args.target, "lam": lam}))
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    ws = fidelity_weights(inst.data, sigma2=args.sigma2)
    res = calibrate(inst.data, inst.similarity, lam=lam, weights=ws)
    g = inst.graph
    route = shortest_path(g, res.mean, args.source, args.target)
    B = args.bias_bound if args.bias_bound is not None else (
        inst.similarity.seminorm(inst.truth.bias) if inst.truth is not None else 0.0)
    bcfg = BoundConfig(B=B, delta=args.delta, lam=res.lam)
    radii = static_radii(inst.similarity, ws, bcfg)
    radii.to_csv(out / "radii.csv")
    doc = {"path": list(route.path.nodes), "estimated_cost": route.cost, "lam": res.lam}
    if inst.truth is not None:
        star = shortest_path(g, inst.truth.mu, args.source, args.target).path
        cert = suboptimality_certificate(route.path, star, radii)
        doc.update(true_gap=route.path.cost(inst.truth.mu) - star.cost(inst.truth.mu),
                   certificate=cert.bound if math.isfinite(cert.bound) else None)
    with open(out / "route.json", "w") as fh:
        fh.write(_dump(doc))
    print(_dump(doc))
    return EXIT_OK


def _instance_active(args) -> int:
    inst = read_instance(args.instance)
    if inst.truth is None:
        raise ConfigError("active on an instance needs truth.csv to simulate queries")
    if args.source is None or args.target is None:
        raise ConfigError("--instance with active needs --source and --target")
    out = FsPath(args.out or "active")
    truth = inst.truth
    B = args.bias_bound if args.bias_bound is not None else inst.similarity.seminorm(truth.bias)
    bcfg = BoundConfig(B=B, delta=args.delta, lam=float(args.lam) if args.lam not in ("sure", "cv",
                                                                                       "discrepancy") else 1.0)
    if args.dry_run:
        print(_dump({"instance": args.instance, "bounds": vars(bcfg), "epsilon": args.epsilon}))
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    oracle = GaussianOracle(truth.mu, np.sqrt(truth.sigma2), args.seed or 0)
    rep = run_aesp(inst.graph, inst.similarity, bcfg, oracle, args.source, args.target,
                   truth.mu_sim, truth.sigma2, args.epsilon, args.max_rounds)
    rep.to_json(out / "report.json")
    rep.query_log_csv(out / "queries.csv")
    print(f"certified={rep.certified} rounds={rep.rounds} queries={rep.total_queries} "
          f"path={list(rep.path.nodes)}")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.instance is not None:
        return {"estimate": _instance_estimate, "paths": _instance_paths,
                "active": _instance_active}[args.verb](args)
    return _sweep(args, _VERB_SCENARIO[args.verb])


def cmd_gen_instance(args) -> int:
    cfg = resolve_config(args)
    if cfg.graph.get("type") == "bundle":
        raise ConfigError("gen-instance needs a grid, edge_list or json graph source")
    spec_doc = dict(cfg.synthetic, seed=cfg.root_seed)
    spec = SyntheticSpec(**spec_doc)
    out = FsPath(cfg.out)
    if args.dry_run:
        print(_dump({"graph": cfg.graph, "similarity": cfg.similarity, "synthetic": spec.to_dict(),
                     "out": str(out)}))
        return EXIT_OK
    g, m, _ = load_problem(cfg)
    truth, data = make_instance(g, m, spec)
    write_instance(out, g, m, data, truth)
    print(f"wrote instance with {g.node_count} nodes and {g.edge_count} edges to {out}")
    return EXIT_OK


def cmd_ingest_traffic(args) -> int:
    out = FsPath(args.out or "traffic")
    if args.dry_run:
        print(_dump({"values": args.values, "adjacency": args.adjacency, "week_start": args.week_start,
                     "threshold": args.threshold, "out": str(out)}))
        return EXIT_OK
    ds = load_traffic(args.values, args.adjacency, args.threshold)
    g, truth, data, stats = traffic_instance(ds, args.week_start, args.seed or 0, max_real=args.max_real,
                                             unobservable_fraction=args.unobservable_fraction)
    m = build_similarity(g, args.kernel)
    write_instance(out, g, m, data, truth)
    np.savetxt(out / "sensors.csv", stats.sensors, fmt="%d", header="sensor_index", comments="")
    print(f"week starting {stats.week_start.date()}: {g.edge_count} sensors kept, "
          f"{stats.n_real_window} afternoon and {stats.n_sim_window} morning readings per sensor")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or YAML experiment config")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calpath", description="Simulator calibration and certified routing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb, help_text in (("estimate", "RMSE sweep, or calibrate one instance"),
                            ("paths", "path-gap sweep, or certified route on one instance"),
                            ("active", "A-ESP vs random sweep, or one A-ESP run")):
        p = sub.add_parser(verb, help=help_text)
        _common(p)
        p.add_argument("--instance", help="instance bundle directory; skips the sweep")
        p.add_argument("--lam", default="sure", help="lambda value or rule (sure, cv, discrepancy)")
        p.add_argument("--sigma2", type=float, help="noise variance proxy for single-sample edges")
        p.add_argument("--source", type=int)
        p.add_argument("--target", type=int)
        p.add_argument("--delta", type=float, default=0.1)
        p.add_argument("--epsilon", type=float, default=0.0)
        p.add_argument("--bias-bound", type=float, help="B; defaults to the truth's seminorm")
        p.add_argument("--max-rounds", type=int)
        p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-instance", help="write a synthetic instance bundle")
    _common(p)
    p.set_defaults(func=cmd_gen_instance)

    p = sub.add_parser("ingest-traffic", help="build an instance bundle from a sensor dataset")
    _common(p)
    p.add_argument("--values", required=True, help="measurements: CSV with timestamp column, .npz or .h5")
    p.add_argument("--adjacency", required=True, help="sensor adjacency: CSV, .npy or .pkl")
    p.add_argument("--week-start", help="first day of the week window (default: drawn from the seed)")
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--max-real", type=int, default=20)
    p.add_argument("--unobservable-fraction", type=float, default=0.5)
    p.add_argument("--kernel", default="heat", choices=("one_hop", "two_hop", "heat"))
    p.set_defaults(func=cmd_ingest_traffic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - map everything else to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
