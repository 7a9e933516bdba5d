# cli.py
"""
Command-line front end.

    python cli.py stats     --nodes N --edges E [--communities K] --out DIR
    python cli.py intensity --nodes N --edges E --events EV --out DIR
    python cli.py summarize --covariates C [--edge-covariates EC --nodes N --edges E] --out DIR
    python cli.py fit       --nodes N --edges E --events EV --covariates C --model M --out DIR
    python cli.py compare   ... --model M1 --model M2 [...] --out DIR
    python cli.py simulate  --graph N E --intensity <const|expr> --seed S --out events.csv

--graph N E is shorthand for --nodes N --edges E on every subcommand.

Exit status 0 on success, 1 on input / model errors, 2 on usage errors
(unknown options, missing required options).
"""
import argparse
import os
import sys
import time
from enum import Enum
from typing import List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from build_tables import events_frame, model_info_rows, write_csv, write_fit_outputs, write_rows
from calc_summaries import graph_stats_frame, summarize
from config import SNR_THREADS
from geograph import GeoGraph, LengthMode, graph_summary
from intensity import intensity_frames, intensity_table
from merge_data import build_merged_covariates
from mmfit import FitControl
from model_config import LatticeSpec, SNRSpec, load_model_config
from network_loader import load_covariates, load_events, load_geojson, load_graph, load_lattice, load_region_map
from pointpattern import AssignMode, assign_events
from simulate import Aggregation, intensity_spec, simulate_replicates
from snr import build_design, compare_models, fit_models


class Command(str, Enum):
    STATS = "stats"
    INTENSITY = "intensity"
    SUMMARIZE = "summarize"
    FIT = "fit"
    COMPARE = "compare"
    SIMULATE = "simulate"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: Command
    nodes: Optional[str] = None
    edges: Optional[str] = None
    geojson: Optional[str] = None
    events: Optional[str] = None
    covariates: Optional[str] = None
    edge_covariates: Optional[str] = None
    lattice: Optional[str] = None
    regions: Optional[str] = None
    length: LengthMode = LengthMode.EUCLIDEAN
    tolerance: Optional[float] = Field(None, ge=0)
    assign: AssignMode = AssignMode.SNAP
    models: List[str] = []
    out: str = "out"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    intensity: Optional[str] = None
    aggregation: Aggregation = Aggregation.MEAN
    replicates: int = Field(1, ge=1)
    communities: Optional[int] = Field(None, ge=1)
    threads: int = Field(SNR_THREADS, ge=1)


class UsageError(ValueError):
    pass


# -----------------------------
# Input helpers
# -----------------------------
def _require(cfg: RunConfig, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"'{cfg.command.value}' needs {', '.join(missing)}")


def load_network(cfg: RunConfig) -> GeoGraph:
    if cfg.geojson is not None:
        return load_geojson(cfg.geojson, cfg.length)
    _require(cfg, "nodes", "edges")
    return load_graph(cfg.nodes, cfg.edges, cfg.length)


def load_covariate_table(cfg: RunConfig, graph: Optional[GeoGraph]) -> Optional[pd.DataFrame]:
    node_cov = load_covariates(cfg.covariates) if cfg.covariates else None
    edge_cov = load_covariates(cfg.edge_covariates, key="edge_id") if cfg.edge_covariates else None
    if graph is None:
        return node_cov
    if node_cov is None and edge_cov is None:
        return None
    return build_merged_covariates(graph, node_cov, edge_cov)


def _with_lattice_override(spec: SNRSpec, cfg: RunConfig) -> SNRSpec:
    if cfg.lattice is None:
        return spec
    pairs = load_lattice(cfg.lattice)
    region_map = load_region_map(cfg.regions) if cfg.regions else (spec.lattice.region_map if spec.lattice else None)
    column = spec.lattice.column if spec.lattice else "region"
    return spec.model_copy(update={"lattice": LatticeSpec(pairs=pairs, region_map=region_map, column=column)})


# -----------------------------
# Subcommands
# -----------------------------
def cmd_stats(cfg: RunConfig) -> List[str]:
    graph = load_network(cfg)
    summary = graph_summary(graph, cfg.communities)
    for key, value in summary.as_rows():
        print(f"[INFO] {key}: {value}")
    return [
        write_rows(summary.as_rows(), os.path.join(cfg.out, "graph_summary.csv")),
        write_csv(graph_stats_frame(graph, cfg.communities), os.path.join(cfg.out, "graph_stats.csv")),
    ]


def cmd_intensity(cfg: RunConfig) -> List[str]:
    graph = load_network(cfg)
    _require(cfg, "events")
    assignment = assign_events(graph, load_events(cfg.events), cfg.tolerance, cfg.assign)
    nodes, edges = intensity_frames(intensity_table(assignment, graph))
    assigned = pd.DataFrame({
        "event": range(assignment.n_events),
        "edge_id": [";".join(map(str, e)) if e else None for e in assignment.event_edges],
        "distance": list(assignment.distances),
    })
    print(f"[INFO] {assignment.n_assigned} of {assignment.n_events} events attributed to edges")
    return [
        write_csv(nodes, os.path.join(cfg.out, "node_intensity.csv")),
        write_csv(edges, os.path.join(cfg.out, "edge_intensity.csv")),
        write_csv(assigned, os.path.join(cfg.out, "assignment.csv")),
    ]


def cmd_summarize(cfg: RunConfig) -> List[str]:
    if cfg.covariates is None and cfg.edge_covariates is None:
        raise UsageError("'summarize' needs --covariates and/or --edge-covariates")
    graph = load_network(cfg) if cfg.edge_covariates is not None else None
    table = load_covariate_table(cfg, graph)
    return [write_csv(summarize(table).reset_index(), os.path.join(cfg.out, "covariate_summary.csv"))]


def _fit_all(cfg: RunConfig):
    if not cfg.models:
        raise UsageError(f"'{cfg.command.value}' needs at least one --model")
    _require(cfg, "events")
    graph = load_network(cfg)
    specs = [_with_lattice_override(load_model_config(m), cfg) for m in cfg.models]
    covariates = load_covariate_table(cfg, graph)
    assignment = assign_events(graph, load_events(cfg.events), cfg.tolerance, cfg.assign)
    table = intensity_table(assignment, graph, modes=sorted({s.mode for s in specs}, key=lambda m: m.value))
    designs = [build_design(graph, table, covariates, s) for s in specs]
    return fit_models(designs, FitControl(), threads=cfg.threads)


def cmd_fit(cfg: RunConfig) -> List[str]:
    if len(cfg.models) != 1:
        raise UsageError("'fit' takes exactly one --model (use 'compare' for several)")
    (fit,) = _fit_all(cfg)
    criteria_table = compare_models([fit]).drop(columns=["best"])
    for key, value in model_info_rows(fit)[:6]:
        print(f"[INFO] {key}: {value}")
    return write_fit_outputs(fit, cfg.out, criteria_table)


def cmd_compare(cfg: RunConfig) -> List[str]:
    fits = _fit_all(cfg)
    names = [f.spec.name for f in fits]
    if len(set(names)) != len(names):
        # fall back to file stems so per-model folders stay distinct
        names = [os.path.splitext(os.path.basename(m))[0] for m in cfg.models]
    table = compare_models(fits, names)
    written = [write_csv(table, os.path.join(cfg.out, "criteria.csv"))]
    for name, fit in zip(names, fits):
        written += write_fit_outputs(fit, os.path.join(cfg.out, name))
    print(table.to_string(index=False))
    return written


def cmd_simulate(cfg: RunConfig) -> List[str]:
    if cfg.intensity is None:
        raise UsageError("'simulate' needs --intensity <number|expression>")
    graph = load_network(cfg)
    covariates = load_covariate_table(cfg, graph)
    spec = intensity_spec(graph, cfg.intensity, cfg.seed, covariates, cfg.aggregation)

    if cfg.out.endswith(".csv"):
        base, folder = cfg.out, os.path.dirname(cfg.out) or "."
    else:
        base, folder = os.path.join(cfg.out, "events.csv"), cfg.out
    written = []
    for k, pattern in enumerate(simulate_replicates(spec, cfg.replicates, threads=cfg.threads)):
        if cfg.replicates == 1:
            path = base
        else:
            stem = os.path.splitext(os.path.basename(base))[0]
            path = os.path.join(folder, f"{stem}_{k}.csv")
        written.append(write_csv(events_frame(pattern), path))
        print(f"[INFO] replicate {k}: {len(pattern)} events -> {path}")
    return written


COMMANDS = {
    Command.STATS: cmd_stats,
    Command.INTENSITY: cmd_intensity,
    Command.SUMMARIZE: cmd_summarize,
    Command.FIT: cmd_fit,
    Command.COMPARE: cmd_compare,
    Command.SIMULATE: cmd_simulate,
}


# -----------------------------
# Entry point
# -----------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snr", description="Structured network regression on geo-referenced networks")
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--nodes")
    parser.add_argument("--edges")
    parser.add_argument("--graph", nargs=2, metavar=("NODES", "EDGES"), help="shorthand for --nodes NODES --edges EDGES")
    parser.add_argument("--geojson")
    parser.add_argument("--events")
    parser.add_argument("--covariates")
    parser.add_argument("--edge-covariates", dest="edge_covariates")
    parser.add_argument("--lattice")
    parser.add_argument("--regions")
    parser.add_argument("--length", choices=[m.value for m in LengthMode], default=LengthMode.EUCLIDEAN.value)
    parser.add_argument("--tolerance", type=float)
    parser.add_argument("--assign", choices=["snap", "paper-box"], default="snap")
    parser.add_argument("--model", dest="models", action="append", default=[])
    parser.add_argument("--out", default="out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--intensity")
    parser.add_argument("--aggregation", choices=[a.value for a in Aggregation], default=Aggregation.MEAN.value)
    parser.add_argument("--replicates", type=int, default=1)
    parser.add_argument("--communities", type=int)
    parser.add_argument("--threads", type=int, default=SNR_THREADS)
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    graph = args.pop("graph")
    if graph is not None:
        if args["nodes"] is not None or args["edges"] is not None:
            raise UsageError("--graph cannot be combined with --nodes / --edges")
        args["nodes"], args["edges"] = graph
    args["assign"] = args["assign"].replace("-", "_")
    return RunConfig(**args)


def run(cfg: RunConfig) -> int:
    start = time.perf_counter()
    try:
        written = COMMANDS[cfg.command](cfg)
    except UsageError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1
    for path in written:
        print(f"[OK] wrote {path}")
    print(f"[OK] {cfg.command.value} finished in {time.perf_counter() - start:.1f}s")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except ValueError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
