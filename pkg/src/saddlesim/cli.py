"""Command line entry point.

Subcommands:
    run <config>            run the experiment grid and write artifacts
    derive-params <config>  print stability constants and the delta interval
    validate <config>       check a config, listing every violation
    dump-graph <config>     print the communication graph as an edge list

``<config>`` is an INI experiment file, or a previously written
``manifest.json`` to rerun an experiment exactly (the manifest embeds the
resolved config).

Exit codes: 0 success, 2 config error, 3 infeasible horizon,
4 benchmark-solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig, load_manifest_config, parse_config
from .graph import dump_edge_list
from .runner import (
    PILOT_ROUNDS,
    BenchmarkError,
    build_graph,
    build_problem,
    resolve_constants,
    run_experiment,
    scenario_probabilities,
    seed_children,
)
from .solver import TWO_POINT, HorizonTooShort, derive_params

__all__ = ["main", "build_parser", "OUTPUT_DIR_ENV"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HORIZON = 3
EXIT_BENCHMARK = 4

OUTPUT_DIR_ENV = "SADDLESIM_OUTPUT_DIR"


def _load_config(path: str) -> RunConfig:
    if path.endswith(".json"):
        return load_manifest_config(path)
    return parse_config(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saddlesim",
        description="Decentralized online saddle-point runs under link failures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run all scenario x seed combinations")
    run_p.add_argument("config", help="experiment INI file or manifest.json")
    run_p.add_argument(
        "--output-dir",
        default=None,
        help=f"override the output directory (also via ${OUTPUT_DIR_ENV})",
    )
    run_p.add_argument(
        "--workers",
        type=int,
        default=None,
        help="concurrent seed workers (default: one per seed, capped by CPUs)",
    )

    derive_p = sub.add_parser(
        "derive-params", help="print stability constants and the delta interval"
    )
    derive_p.add_argument("config", help="experiment INI file or manifest.json")

    val_p = sub.add_parser("validate", help="check a config and list all violations")
    val_p.add_argument("config", help="experiment INI file or manifest.json")

    dump_p = sub.add_parser("dump-graph", help="print the graph as an edge list")
    dump_p.add_argument("config", help="experiment INI file or manifest.json")
    return parser


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    output_dir = args.output_dir
    if output_dir is None:
        output_dir = os.environ.get(OUTPUT_DIR_ENV) or None
    manifest = run_experiment(config, output_dir=output_dir, workers=args.workers)
    out = output_dir if output_dir is not None else config.output_dir
    print(
        f"wrote {len(manifest['series_files'])} series files, "
        f"{manifest['summary_file']} and manifest.json to {out} "
        f"in {manifest['wall_clock_s']:.1f}s"
    )
    return EXIT_OK


def _cmd_derive_params(args) -> int:
    config = _load_config(args.config)
    graph = build_graph(config)
    print(
        f"graph: n={graph.n}, edges={len(graph.edges)}, "
        f"directed pairs={2 * len(graph.edges)}"
    )
    interior = config.resolved_interior_radius()
    feasible_everywhere = True
    max_min_horizon = 0
    for seed in config.seeds:
        pilot = build_problem(config, graph, seed_children(seed)["problem"])
        sample_rounds = [pilot.stream.next_round() for _ in range(PILOT_ROUNDS)]
        constants = resolve_constants(config, pilot, sample_rounds, seed)
        print(
            f"seed {seed}: constants cost_grad={constants.cost_grad_bound:.6g} "
            f"constraint_grad={constants.constraint_grad_bound:.6g} "
            f"curvature={constants.constraint_curvature:.6g} "
            f"bound={constants.constraint_bound:.6g} radius={constants.radius:.6g}"
        )
        probs_by_label = scenario_probabilities(config, graph, seed_children(seed)["probs"])
        for scenario in config.scenarios:
            probs = probs_by_label[scenario.label]
            derived = derive_params(
                constants,
                graph,
                probs,
                config.horizon,
                config.step_scale,
                beta=config.beta,
                feedback=config.feedback,
                interior_radius=interior if config.feedback == TWO_POINT else None,
            )
            head = (
                f"seed {seed} scenario {scenario.label}: "
                f"omega={derived.omega:.6g} gamma={derived.gamma:.6g} "
                f"beta={derived.beta:.6g} eta={derived.eta:.6g}"
            )
            max_min_horizon = max(max_min_horizon, derived.min_horizon)
            if derived.feasible:
                print(
                    f"{head} delta in [{derived.delta_min!r}, {derived.delta_max!r}] "
                    f"min_horizon={derived.min_horizon}"
                )
            else:
                feasible_everywhere = False
                print(
                    f"{head} delta interval empty at horizon={config.horizon}; "
                    f"need at least {derived.min_horizon}"
                )
    if not feasible_everywhere:
        print(
            f"horizon {config.horizon} is infeasible; "
            f"minimal admissible horizon is {max_min_horizon}",
            file=sys.stderr,
        )
        return EXIT_HORIZON
    return EXIT_OK


def _cmd_validate(args) -> int:
    _load_config(args.config)
    print("ok")
    return EXIT_OK


def _cmd_dump_graph(args) -> int:
    config = _load_config(args.config)
    sys.stdout.write(dump_edge_list(build_graph(config)))
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "derive-params": _cmd_derive_params,
    "validate": _cmd_validate,
    "dump-graph": _cmd_dump_graph,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except HorizonTooShort as exc:
        print(
            f"infeasible horizon: {exc.horizon} is too short, "
            f"need at least {exc.min_horizon}",
            file=sys.stderr,
        )
        return EXIT_HORIZON
    except BenchmarkError as exc:
        print(f"benchmark failure: {exc}", file=sys.stderr)
        return EXIT_BENCHMARK
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
