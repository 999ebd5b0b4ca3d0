"""Command line: ``lgm simulate | fit | predict | compare``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import io
from .criteria import compute_scores
from .domain import validate_dataset
from .errors import BadConfig, DatasetError, LGMError
from .graph import RegionGraph
from .laplace import fit as fit_model
from .predict import PredictiveComponents, predict
from .simulate import simulate

log = logging.getLogger("lgm")


def _setup_logging() -> None:
    level = os.environ.get("LGM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BadConfig(f"{out}: cannot create output directory ({exc.strerror})") from None
    if not os.access(out, os.W_OK):
        raise BadConfig(f"{out}: output directory is not writable")
    return out


def cmd_simulate(args) -> None:
    cfg = io.read_config(args.config)
    if cfg.simulation is None:
        raise BadConfig(f"{args.config}: missing [simulate] section")
    seed = cfg.spec.seed if args.seed is None else args.seed
    graph: RegionGraph | None = io.read_graph(args.graph) if args.graph else None
    sim_cfg = cfg.simulation
    if graph is not None and graph.J != sim_cfg.regions:
        sim_cfg = dataclasses.replace(sim_cfg, regions=graph.J)
    sim = simulate(sim_cfg, seed, graph)
    out = _out_dir(args.out)
    io.write_data(out / "data.csv", sim.columns, sim_cfg.family, sim_cfg.covariate_names)
    io.write_graph(out / "graph.adj", sim.graph)
    io.write_truth(out / "truth.csv", sim.truth, sim.gamma, sim.graph)
    io._write_json(out / "manifest.json", {
        "version": __version__,
        "seed": seed,
        "config": cfg.echo(),
        "horizon": io.fmt(sim.horizon),
        "files": ["data.csv", "graph.adj", "truth.csv", "manifest.json"],
    })
    print(f"wrote {sim_cfg.n} rows over {sim.graph.J} regions to {out}")


def cmd_fit(args) -> None:
    cfg = io.read_config(args.config)
    seed = cfg.spec.seed if args.seed is None else args.seed
    spec = dataclasses.replace(cfg.spec, seed=seed)
    draws = cfg.draws if args.draws is None else args.draws
    graph = io.read_graph(args.graph)
    rows = io.read_data_rows(args.data)
    try:
        data = validate_dataset(rows, spec, graph)
    except DatasetError as exc:
        raise io.with_line_context(exc, args.data)
    out = _out_dir(args.out)
    res = fit_model(spec, data, graph, threads=args.threads)
    res.dic, res.waic = compute_scores(res, spec, data, graph, draws, seed)
    comp = PredictiveComponents.from_fit(res)
    io.write_fit(out, res, dataclasses.replace(cfg, spec=spec, draws=draws), seed, comp)
    print(f"fit {spec.family}+{spec.effect} on {data.n} rows: DIC {res.dic.score:.2f}, WAIC {res.waic.score:.2f}")


def cmd_predict(args) -> None:
    comp = io.read_fit_components(args.fit)
    profiles = io.read_profiles(args.profiles)
    rows = predict(comp, profiles, draws=args.draws or 2000, seed=args.seed or 0, plugin=args.plugin)
    out = _out_dir(args.out)
    io.write_predictions(out / "predictions.csv", rows)
    print(f"wrote {len(rows)} predictions to {out / 'predictions.csv'}")


def cmd_compare(args) -> None:
    header = ("fit", "family", "effect", "DIC", "p_D", "WAIC", "p_waic")
    rows = []
    for d in args.fits:
        man = io.read_manifest(d)
        sc = io.read_scores(d)
        model = man["config"]["model"]
        effect = model["effect"]
        if effect == "leroux" and model["fixed"].get("phi") == 1.0:
            effect = "icar"
        rows.append([str(d), man["family"], effect, sc["DIC"], sc["p_D"], sc["WAIC"], sc["p_waic"]])
    if args.out:
        out = _out_dir(args.out)
        io._write_csv(out / "comparison.csv", header, rows)
    width = max(len(r[0]) for r in rows)
    print(f"{'fit':<{width}}  {'family':<7} {'effect':<7} {'DIC':>12} {'p_D':>9} {'WAIC':>12} {'p_waic':>9}")
    for r in rows:
        print(f"{r[0]:<{width}}  {r[1]:<7} {r[2]:<7} {float(r[3]):12.2f} {float(r[4]):9.2f} "
              f"{float(r[5]):12.2f} {float(r[6]):9.2f}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lgm", description=__doc__)
    ap.add_argument("--version", action="version", version=f"lgm {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a synthetic dataset, graph and truth file")
    s.add_argument("--config", required=True)
    s.add_argument("--graph", help="adjacency file to use instead of drawing a graph")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a model and write summaries, marginals and scores")
    f.add_argument("--config", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--graph", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=int, default=1)
    f.add_argument("--draws", type=int)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior predictions for covariate profiles")
    p.add_argument("--fit", required=True, help="output directory of a previous fit")
    p.add_argument("--profiles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--plugin", action="store_true", help="hold regional effects at their posterior mean")
    p.set_defaults(func=cmd_predict)

    c = sub.add_parser("compare", help="tabulate DIC and WAIC across fits")
    c.add_argument("fits", nargs="+")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except LGMError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
