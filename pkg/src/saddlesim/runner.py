"""Experiment driver: seeded runs across failure scenarios.

One experiment is a grid of (scenario x seed) runs sharing common random
numbers.  Per seed, a root seed sequence is split into five named
children (init, problem, probs, channel, bandit), and every scenario
rebuilds its generators from pristine copies of those children.  The
cost stream, initial decisions, failure-probability draws, channel
uniforms, and bandit probes are therefore identical across scenarios;
only the failure probabilities themselves change, so scenario curves are
directly comparable and failure events nest as the level rises.

The hindsight benchmark is solved once per seed (the revealed costs do
not depend on the decisions, so every scenario of a seed shares it).

Seed workers run concurrently; each worker writes its own series files
and the summary is assembled once after the join.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .channel import channel_init, uniform_failure_probs
from .config import (
    DELTA_DERIVED,
    FAILURE_FILE,
    QCQP_KIND,
    RunConfig,
    config_digest,
)
from .graph import NetworkGraph, directed_pairs, generate_erdos_renyi, load_edge_list
from .metrics import regret_series, solve_hindsight, violation_series
from .problems import (
    ProblemConstants,
    estimate_problem_constants,
    logistic_problem,
    qcqp_problem,
)
from .solver import (
    FULL_INFO,
    TWO_POINT,
    HorizonTooShort,
    SolverParams,
    bandit_defaults,
    derive_params,
    run,
)

__all__ = [
    "BenchmarkError",
    "SERIES_HEADER",
    "SEED_CHILDREN",
    "MANIFEST_NAME",
    "SUMMARY_NAME",
    "build_graph",
    "build_problem",
    "seed_children",
    "load_failure_probs",
    "scenario_probabilities",
    "resolve_constants",
    "solver_params_for",
    "series_filename",
    "run_experiment",
]

SERIES_HEADER = (
    "t,cum_regret,rel_avg_regret,mean_rel_avg_violation,"
    "max_cum_violation,delivered_frac"
)
SERIES_COLUMNS = (
    "cum_regret",
    "rel_avg_regret",
    "mean_rel_avg_violation",
    "max_cum_violation",
    "delivered_frac",
)

# names of the per-seed RNG children, in spawn order
SEED_CHILDREN = ("init", "problem", "probs", "channel", "bandit")

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.csv"

# how many stream rounds feed the constants estimator when no overrides
# are given (only used for derived-delta runs and parameter reports)
PILOT_ROUNDS = 8

_CONSTANT_KEYS = {
    "cost_grad": "cost_grad_bound",
    "constraint_grad": "constraint_grad_bound",
    "constraint_curvature": "constraint_curvature",
    "constraint_bound": "constraint_bound",
}


class BenchmarkError(RuntimeError):
    """The hindsight solve failed to certify a feasible comparator."""


def build_graph(config: RunConfig) -> NetworkGraph:
    """The communication graph a config describes."""
    if config.edge_list is not None:
        graph = load_edge_list(Path(config.edge_list).read_text())
        if graph.n != config.n:
            raise ValueError(
                f"edge list declares {graph.n} nodes but the config says {config.n}"
            )
        return graph
    return generate_erdos_renyi(config.n, config.graph_p_edge, config.graph_seed)


def build_problem(config: RunConfig, graph: NetworkGraph, seed):
    """A fresh problem instance (stream included) for one run."""
    factory = qcqp_problem if config.kind == QCQP_KIND else logistic_problem
    return factory(graph, config.dim, config.radius, seed)


def seed_children(seed: int) -> dict[str, np.random.SeedSequence]:
    """Pristine named RNG children for one run seed.

    Must be called once per consumer: spawning from a child mutates it,
    so a reused child object would silently decouple streams that are
    meant to share randomness.
    """
    spawned = np.random.SeedSequence(seed).spawn(len(SEED_CHILDREN))
    return dict(zip(SEED_CHILDREN, spawned))


def load_failure_probs(text: str, graph: NetworkGraph) -> np.ndarray:
    """Parse per-pair failure probabilities from ``receiver sender prob`` lines.

    Every directed pair of the graph must appear exactly once; ``#``
    starts a comment.  Returns probabilities aligned with
    ``directed_pairs(graph)``.
    """
    pairs = directed_pairs(graph)
    index = {p: k for k, p in enumerate(pairs)}
    probs = np.full(len(pairs), np.nan)
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 3:
            raise ValueError(
                f"line {lineno}: expected 'receiver sender prob', got {line!r}"
            )
        i, j = int(parts[0]), int(parts[1])
        p = float(parts[2])
        if (i, j) not in index:
            raise ValueError(f"line {lineno}: ({i}, {j}) is not a directed pair")
        if not 0.0 <= p < 1.0:
            raise ValueError(f"line {lineno}: probability must lie in [0, 1), got {p}")
        k = index[(i, j)]
        if not np.isnan(probs[k]):
            raise ValueError(f"line {lineno}: duplicate entry for pair ({i}, {j})")
        probs[k] = p
    missing = [pairs[k] for k in range(len(pairs)) if np.isnan(probs[k])]
    if missing:
        raise ValueError(f"missing probabilities for directed pairs {missing}")
    return probs


def scenario_probabilities(
    config: RunConfig, graph: NetworkGraph, probs_seed
) -> dict[str, np.ndarray]:
    """Failure probabilities per scenario label, aligned with directed pairs.

    Uniform scenarios share the base draw (one uniform per pair mapped
    affinely into each range), so a pair that is unreliable at one level
    is at least as unreliable at every higher level.
    """
    num_pairs = len(directed_pairs(graph))
    out: dict[str, np.ndarray] = {}
    if config.failure_mode == FAILURE_FILE:
        text = Path(config.failure_file).read_text()
        out[config.scenarios[0].label] = load_failure_probs(text, graph)
        return out
    for scenario in config.scenarios:
        if scenario.is_perfect:
            out[scenario.label] = np.zeros(num_pairs)
        else:
            out[scenario.label] = uniform_failure_probs(
                graph, scenario.low, scenario.high, probs_seed
            )
    return out


def resolve_constants(config: RunConfig, problem, sample_rounds, seed) -> ProblemConstants:
    """Problem constants from config overrides, estimates filling the gaps."""
    fields: dict[str, float] = {}
    if any(key not in config.constants for key in _CONSTANT_KEYS):
        est = estimate_problem_constants(
            sample_rounds, problem.constraints, problem.feasible, seed
        )
        fields = {
            "cost_grad_bound": est.cost_grad_bound,
            "constraint_grad_bound": est.constraint_grad_bound,
            "constraint_curvature": est.constraint_curvature,
            "constraint_bound": est.constraint_bound,
        }
    for key, attr in _CONSTANT_KEYS.items():
        if key in config.constants:
            fields[attr] = config.constants[key]
    return ProblemConstants(radius=config.radius, **fields)


def solver_params_for(
    config: RunConfig,
    graph: NetworkGraph,
    probs: np.ndarray,
    constants: ProblemConstants | None,
):
    """Step sizes for one run: (SolverParams, DerivedConstants | None).

    Fixed mode takes eta = a / sqrt(T) and the configured delta.  Derived
    mode evaluates the stability interval and takes its lower endpoint,
    raising HorizonTooShort with the minimal admissible horizon when the
    interval is empty.
    """
    horizon = config.horizon
    interior = config.resolved_interior_radius()
    if config.feedback == TWO_POINT and not horizon * interior > 1.0:
        # the default probe radius 1/T must stay inside the interior ball
        raise HorizonTooShort(horizon, math.floor(1.0 / interior) + 1)
    derived = None
    if config.delta_mode == DELTA_DERIVED:
        if constants is None:
            raise ValueError("derived delta mode needs problem constants")
        derived = derive_params(
            constants,
            graph,
            probs,
            horizon,
            config.step_scale,
            beta=config.beta,
            feedback=config.feedback,
            interior_radius=interior if config.feedback == TWO_POINT else None,
        )
        if not derived.feasible:
            raise HorizonTooShort(horizon, derived.min_horizon)
        eta = derived.eta
        delta = derived.delta_min
    else:
        eta = config.step_scale / math.sqrt(horizon)
        delta = config.delta
    if config.feedback == TWO_POINT:
        zeta, alpha = bandit_defaults(horizon, interior)
        params = SolverParams(
            eta=eta,
            delta=delta,
            feedback=TWO_POINT,
            zeta=zeta,
            alpha=alpha,
            interior_radius=interior,
        )
    else:
        params = SolverParams(eta=eta, delta=delta, feedback=FULL_INFO)
    return params, derived


def series_filename(label: str, seed: int) -> str:
    return f"series_{label}_{seed}.csv"


def _derived_dict(derived) -> dict | None:
    if derived is None:
        return None
    return {
        "omega": derived.omega,
        "gamma": derived.gamma,
        "beta": derived.beta,
        "eta": derived.eta,
        "delta_min": derived.delta_min,
        "delta_max": derived.delta_max,
        "min_horizon": derived.min_horizon,
    }


def _series_text(reg, vio, record) -> str:
    cols = (
        reg.cumulative,
        reg.rel_avg,
        vio.mean_rel_avg,
        vio.max_cumulative,
        record.delivered_frac,
    )
    lines = [SERIES_HEADER]
    for t in range(record.horizon):
        values = ",".join(repr(float(c[t])) for c in cols)
        lines.append(f"{t + 1},{values}")
    return "\n".join(lines) + "\n"


def _seed_worker(config: RunConfig, graph: NetworkGraph, seed: int, out_dir: Path):
    """All scenarios for one seed: run, benchmark, write series files.

    Returns per-scenario column arrays for the summary plus manifest
    entries.  Failure signals travel as tagged tuples so the parent can
    re-raise them uniformly.
    """
    constants = None
    if config.delta_mode == DELTA_DERIVED:
        pilot = build_problem(config, graph, seed_children(seed)["problem"])
        sample_rounds = [pilot.stream.next_round() for _ in range(PILOT_ROUNDS)]
        constants = resolve_constants(config, pilot, sample_rounds, seed)

    probs_by_label = scenario_probabilities(
        config, graph, seed_children(seed)["probs"]
    )
    benchmark = None
    results = []
    for scenario in config.scenarios:
        label = scenario.label
        probs = probs_by_label[label]
        try:
            params, derived = solver_params_for(config, graph, probs, constants)
        except HorizonTooShort as exc:
            return ("horizon", exc.horizon, exc.min_horizon)
        children = seed_children(seed)
        problem = build_problem(config, graph, children["problem"])
        channel = channel_init(graph, probs, children["channel"])
        bandit_rng = None
        if config.feedback == TWO_POINT:
            bandit_rng = np.random.default_rng(children["bandit"])
        record = run(
            problem,
            graph,
            channel,
            params,
            config.horizon,
            init_rng=np.random.default_rng(children["init"]),
            bandit_rng=bandit_rng,
        )
        if benchmark is None:
            # the streams are oblivious, so every scenario of this seed
            # reveals the same costs and shares one comparator
            benchmark = solve_hindsight(
                record.cost_rounds, problem.constraints, problem.feasible
            )
            if not benchmark.feasible:
                return (
                    "benchmark",
                    f"seed {seed}: no feasible comparator found "
                    f"(max violation {benchmark.max_violation:.3e})",
                )
        reg = regret_series(record, benchmark)
        vio = violation_series(record)
        text = _series_text(reg, vio, record)
        filename = series_filename(label, seed)
        (out_dir / filename).write_text(text)
        columns = {
            "cum_regret": reg.cumulative,
            "rel_avg_regret": reg.rel_avg,
            "mean_rel_avg_violation": vio.mean_rel_avg,
            "max_cum_violation": vio.max_cumulative,
            "delivered_frac": record.delivered_frac,
        }
        results.append(
            {
                "scenario": label,
                "seed": seed,
                "series": filename,
                "series_sha256": hashlib.sha256(text.encode()).hexdigest(),
                "eta": params.eta,
                "delta": params.delta,
                "zeta": params.zeta,
                "alpha": params.alpha,
                "derived": _derived_dict(derived),
                "regret_normalizer_degenerate": bool(reg.degenerate_normalizer),
                "degenerate_violation_edges": int(vio.degenerate_normalizer.sum()),
                "mean_failure_prob": float(probs.mean()) if len(probs) else 0.0,
                "columns": columns,
            }
        )
    bench_info = {
        "average_cost": benchmark.average_cost,
        "feasible": benchmark.feasible,
        "max_violation": benchmark.max_violation,
        "stationarity": benchmark.stationarity,
        "complementarity": benchmark.complementarity,
        "iterations": benchmark.iterations,
    }
    return ("ok", results, bench_info)


def run_experiment(
    config: RunConfig, output_dir=None, workers: int | None = None
) -> dict:
    """Run the full scenario x seed grid and write all artifacts.

    Writes one ``series_<scenario>_<seed>.csv`` per run, a
    scenario-averaged ``summary.csv``, and ``manifest.json``; returns the
    manifest.  ``output_dir`` overrides the configured one.  Raises
    HorizonTooShort (infeasible horizon) or BenchmarkError (no certified
    comparator); both map onto dedicated CLI exit codes.
    """
    started = time.perf_counter()
    out_dir = Path(output_dir if output_dir is not None else config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph = build_graph(config)

    if workers is None:
        workers = min(len(config.seeds), os.cpu_count() or 1)
    workers = max(1, workers)
    if workers == 1:
        outcomes = [
            _seed_worker(config, graph, seed, out_dir) for seed in config.seeds
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_seed_worker, config, graph, seed, out_dir)
                for seed in config.seeds
            ]
            outcomes = [f.result() for f in futures]

    runs = []
    benchmarks = {}
    by_label: dict[str, list[dict]] = {s.label: [] for s in config.scenarios}
    for seed, outcome in zip(config.seeds, outcomes):
        tag = outcome[0]
        if tag == "horizon":
            raise HorizonTooShort(outcome[1], outcome[2])
        if tag == "benchmark":
            raise BenchmarkError(outcome[1])
        _, results, bench_info = outcome
        benchmarks[str(seed)] = bench_info
        for entry in results:
            by_label[entry["scenario"]].append(entry.pop("columns"))
            runs.append(entry)

    summary_lines = ["scenario," + SERIES_HEADER]
    for scenario in config.scenarios:
        label = scenario.label
        stacks = {
            col: np.stack([cols[col] for cols in by_label[label]])
            for col in SERIES_COLUMNS
        }
        means = {col: stacks[col].mean(axis=0) for col in SERIES_COLUMNS}
        for t in range(config.horizon):
            values = ",".join(repr(float(means[col][t])) for col in SERIES_COLUMNS)
            summary_lines.append(f"{label},{t + 1},{values}")
    (out_dir / SUMMARY_NAME).write_text("\n".join(summary_lines) + "\n")

    manifest = {
        "format": "saddlesim-run-manifest/1",
        "config": config.as_dict(),
        "config_sha256": config_digest(config),
        "seed_children": list(SEED_CHILDREN),
        "graph": {
            "n": graph.n,
            "num_edges": len(graph.edges),
            "num_directed_pairs": 2 * len(graph.edges),
        },
        "scenarios": [s.label for s in config.scenarios],
        "seeds": list(config.seeds),
        "runs": runs,
        "benchmarks": benchmarks,
        "series_files": {r["series"]: r["series_sha256"] for r in runs},
        "summary_file": SUMMARY_NAME,
        "wall_clock_s": time.perf_counter() - started,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
