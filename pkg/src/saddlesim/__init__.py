"""Decentralized online saddle-point optimization over unreliable links.

A deterministic, desk-scale simulator: agents on a fixed graph minimize
time-varying convex costs coupled by pairwise constraints, exchanging
decisions over channels that drop messages at random.  The package
provides the graph and problem generators, the lossy-channel model, the
robust full-information and two-point bandit solvers, regret and
violation metrics against a hindsight benchmark, and a CLI that runs
whole experiment sweeps reproducibly.
"""

from .channel import (
    LinkFailureModel,
    NeighborCache,
    channel_init,
    exchange_round,
    uniform_failure_probs,
)
from .config import (
    ConfigError,
    FailureScenario,
    RunConfig,
    config_digest,
    load_manifest_config,
    parse_config,
)
from .eigen import (
    clamp_eigenvalues,
    clamp_eigenvalues_stack,
    jacobi_eigh,
    jacobi_eigh_stack,
    off_diagonal_norm,
)
from .graph import (
    NetworkGraph,
    directed_pairs,
    dump_edge_list,
    generate_erdos_renyi,
    load_edge_list,
    neighbors,
)
from .metrics import (
    HindsightBenchmark,
    RegretSeries,
    RunRecord,
    ViolationSeries,
    regret_series,
    solve_hindsight,
    truncate_record,
    violation_series,
)
from .problems import (
    ConstraintSet,
    FeasibleSet,
    LogisticStream,
    Problem,
    ProblemConstants,
    ProximityEdgeConstraint,
    QcqpStream,
    QuadraticEdgeConstraint,
    ShrunkSet,
    estimate_problem_constants,
    logistic_problem,
    project_ball,
    qcqp_problem,
)
from .runner import (
    BenchmarkError,
    build_graph,
    build_problem,
    run_experiment,
    scenario_probabilities,
    seed_children,
)
from .solver import (
    FULL_INFO,
    TWO_POINT,
    AgentStates,
    DerivedConstants,
    HorizonTooShort,
    QueryOutsideFeasible,
    SolverParams,
    bandit_defaults,
    bandit_step,
    derive_params,
    full_info_step,
    initial_decisions,
    run,
)

__version__ = "0.1.0"
