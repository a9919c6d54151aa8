"""Command-line interface: run experiments, generate graphs, replay
observation logs, render report figures, and serve the co-pilot API."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("pace")


def _setup_logging() -> None:
    level = os.environ.get("PACE_LOG_LEVEL", "warn").lower()
    mapping = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=mapping.get(level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def cmd_run(args: argparse.Namespace) -> int:
    from .harness import ExperimentConfig, export_results, run_training

    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.policy:
        config.policy = args.policy
    if args.granularity:
        config.granularity = args.granularity
    if args.jobs:
        config.n_jobs = args.jobs
    config.validate()
    log.info("running %s / %s / seed=%d", config.policy, config.granularity,
             config.seed)
    result = run_training(config)
    out = Path(args.out)
    paths = export_results(result, out)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1),
                                     encoding="utf-8")
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    by_arch = result.by_archetype()
    for arch in by_arch:
        c50 = result.archetype_mean(arch, "c50")
        re_score = result.archetype_mean(arch, "re")
        c50_txt = f"{100 * c50:6.2f}%" if c50 == c50 else "   n/a"
        print(f"  {arch:16s} C@50 {c50_txt}  exam {re_score:6.2f}")
    if args.figures:
        from .report import render_report
        for fig in render_report(out):
            print(f"wrote figure: {fig}")
    return 0


def cmd_generate_graph(args: argparse.Namespace) -> int:
    from .graph import GraphGenParams, generate_synthetic_graph

    params_doc = json.loads(Path(args.params).read_text(encoding="utf-8"))
    params = GraphGenParams(**params_doc)
    graph = generate_synthetic_graph(params)
    graph.save(args.out)
    print(f"wrote {args.out}: {len(graph)} nodes, {graph.n_edges} edges, "
          f"{len(graph.incident_types)} incident types")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    from .belief import read_observation_log, replay_log
    from .graph import load_graph
    from .similarity import HashingEmbedder, IndexArrays, build_index

    graph = load_graph(args.graph)
    observations = read_observation_log(args.log)
    arrays = None
    if not args.no_propagation:
        embeddings = HashingEmbedder().vectors_for(graph)
        arrays = IndexArrays(build_index(graph, embeddings), graph)
    state = replay_log(graph.assessable_ids, observations, arrays=arrays,
                       target_max_count=(2.0 + 1e-9 if arrays else None))
    summary = state.summary()
    print(f"replayed {len(observations)} observations over "
          f"{len(state.node_ids)} skills")
    print(f"  coverage {100 * summary.coverage:.2f}%   "
          f"mean variance {summary.mean_variance:.4f}   "
          f"weak-skill mean {summary.weak_mean:.4f}")
    if args.out:
        state.export_csv(args.out)
        print(f"wrote belief snapshot: {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .report import render_report

    for fig in render_report(args.results, args.out):
        print(f"wrote figure: {fig}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .graph import (build_scenario_catalog, generate_synthetic_graph,
                        load_catalog, load_graph)
    from .harness import DEFAULT_GRAPH_PARAMS
    from .service import ServiceSettings, create_app

    if args.graph:
        graph = load_graph(args.graph)
    else:
        log.info("no graph supplied; generating the default fixture")
        graph = generate_synthetic_graph(DEFAULT_GRAPH_PARAMS)
    if args.catalog:
        catalog = load_catalog(args.catalog)
    else:
        catalog = build_scenario_catalog(graph)
    data_dir = Path(args.data_dir or os.environ.get("PACE_DATA_DIR", "./pace-data"))
    bind = args.bind or os.environ.get("PACE_BIND_ADDR", "127.0.0.1:8000")
    host, _, port = bind.partition(":")
    app = create_app(graph, catalog, ServiceSettings(data_dir=data_dir))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pace",
        description="Adaptive curriculum engine: experiments, graph tooling, "
                    "and the trainer co-pilot service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a training experiment")
    p_run.add_argument("--config", help="experiment config JSON")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--policy", choices=(
        "pace_full", "pace_no_prop", "pace_no_dyn", "round_robin",
        "deficit_driven"))
    p_run.add_argument("--granularity", choices=("fine", "medium", "coarse"))
    p_run.add_argument("--jobs", type=int, help="parallel trainee workers")
    p_run.add_argument("--figures", action="store_true",
                       help="also render report figures")
    p_run.set_defaults(func=cmd_run)

    p_gen = sub.add_parser("generate-graph", help="generate a synthetic skill graph")
    p_gen.add_argument("--params", required=True, help="generator params JSON")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_generate_graph)

    p_replay = sub.add_parser("replay",
                              help="rebuild beliefs from an observation log")
    p_replay.add_argument("--log", required=True, help="JSON-lines observations")
    p_replay.add_argument("--graph", required=True)
    p_replay.add_argument("--out", help="optional belief snapshot CSV")
    p_replay.add_argument("--no-propagation", action="store_true")
    p_replay.set_defaults(func=cmd_replay)

    p_report = sub.add_parser("report", help="render figures from exported CSVs")
    p_report.add_argument("--results", required=True)
    p_report.add_argument("--out")
    p_report.set_defaults(func=cmd_report)

    p_serve = sub.add_parser("serve", help="serve the co-pilot HTTP API")
    p_serve.add_argument("--graph")
    p_serve.add_argument("--catalog")
    p_serve.add_argument("--data-dir")
    p_serve.add_argument("--bind", help="host:port (default 127.0.0.1:8000)")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
