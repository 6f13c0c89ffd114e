"""Online primal-dual solvers robust to link failures.

Every agent keeps its own decision plus one dual variable per incident
directed pair.  Each round it climbs the regularized saddle function:
the primal step descends the cost gradient plus twice the dual-weighted
constraint gradients evaluated at the *cached* neighbor decisions (the
true ones may not have arrived), the dual step ascends the cached
constraint value minus the regularization pullback.  Both steps use the
same pre-update snapshot.

Two feedback modes share the machinery: the full-information step uses
the revealed cost gradient, the two-point bandit step replaces it with a
sphere-smoothed finite-difference estimate and projects onto a shrunk
ball so both probe points stay feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LinkFailureModel, NeighborCache, exchange_round
from .graph import NetworkGraph, directed_pairs, neighbors
from .metrics import RunRecord
from .problems import Problem, ProblemConstants, project_ball

__all__ = [
    "FULL_INFO",
    "TWO_POINT",
    "SolverParams",
    "DerivedConstants",
    "AgentStates",
    "PairIndex",
    "HorizonTooShort",
    "QueryOutsideFeasible",
    "default_beta",
    "derive_params",
    "bandit_defaults",
    "build_pair_index",
    "initial_decisions",
    "full_info_step",
    "bandit_step",
    "run",
]

FULL_INFO = "full-info"
TWO_POINT = "two-point-bandit"


class HorizonTooShort(ValueError):
    """The horizon is too short for any admissible regularization weight."""

    def __init__(self, horizon: int, min_horizon: int) -> None:
        super().__init__(
            f"horizon {horizon} is too short for a stable regularization "
            f"weight; need at least {min_horizon}"
        )
        self.horizon = horizon
        self.min_horizon = min_horizon


class QueryOutsideFeasible(RuntimeError):
    """A bandit probe point left the feasible set (bad zeta/alpha pairing)."""


@dataclass(frozen=True)
class SolverParams:
    """Step sizes and feedback mode for one run.

    eta: primal and dual step size.
    delta: dual regularization weight (scaled by eta in the pullback).
    zeta, alpha, interior_radius: bandit-only probe radius, ball
        shrinkage, and the interior-ball radius that links them.
    """

    eta: float
    delta: float
    feedback: str = FULL_INFO
    zeta: float | None = None
    alpha: float | None = None
    interior_radius: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.feedback not in (FULL_INFO, TWO_POINT):
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.feedback == TWO_POINT:
            if self.zeta is None or self.alpha is None or self.interior_radius is None:
                raise ValueError("bandit mode needs zeta, alpha and interior_radius")
            if not self.interior_radius > 0:
                raise ValueError(f"interior_radius must be positive, got {self.interior_radius}")
            if not 0 < self.zeta < self.interior_radius:
                raise ValueError(
                    f"zeta must lie in (0, interior_radius), got {self.zeta}"
                )
            lo = self.zeta / self.interior_radius
            if not lo <= self.alpha < 1.0:
                raise ValueError(
                    f"alpha must lie in [zeta/interior_radius, 1) = [{lo}, 1), "
                    f"got {self.alpha}"
                )


def bandit_defaults(horizon: int, interior_radius: float) -> tuple[float, float]:
    """Probe radius and shrinkage that vanish with the horizon: 1/T, 1/(rT).

    alpha is computed as zeta / r rather than 1 / (r T) so it sits exactly
    on the admissible boundary in floating point; the algebraically equal
    product form can land one ulp below it and fail validation.
    """
    zeta = 1.0 / horizon
    return zeta, zeta / interior_radius


@dataclass(frozen=True)
class DerivedConstants:
    """Constants derived from the problem for the stability interval.

    omega aggregates constraint curvature and staleness amplification;
    gamma is the part contributed by the failure probabilities.  When
    ``feasible`` the regularization weight may be chosen anywhere in
    [delta_min, delta_max]; otherwise the horizon must be raised to at
    least ``min_horizon``.
    """

    omega: float
    gamma: float
    beta: float
    eta: float
    feedback: str
    feasible: bool
    min_horizon: int
    delta_min: float | None
    delta_max: float | None


def default_beta(max_prob: float) -> float:
    """Midpoint-ish margin parameter: half of the admissible upper bound."""
    if max_prob == 0.0:
        return 1.0  # any positive value works; gamma vanishes anyway
    return 0.5 * (1.0 / max_prob - 1.0)


def derive_params(
    constants: ProblemConstants,
    graph: NetworkGraph,
    probs: np.ndarray,
    horizon: int,
    step_scale: float,
    beta: float | None = None,
    feedback: str = FULL_INFO,
    interior_radius: float | None = None,
) -> DerivedConstants:
    """Evaluate the stability constants and the admissible delta interval.

    ``probs`` holds one failure probability per directed pair, aligned
    with ``directed_pairs(graph)``; entry (i, j) is the probability that
    agent i misses agent j's message.  ``step_scale`` is the constant a in
    eta = a / sqrt(horizon).
    """
    if feedback not in (FULL_INFO, TWO_POINT):
        raise ValueError(f"unknown feedback mode {feedback!r}")
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if not step_scale > 0:
        raise ValueError(f"step_scale must be positive, got {step_scale}")
    pairs = directed_pairs(graph)
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (len(pairs),):
        raise ValueError(
            f"need one probability per directed pair ({len(pairs)}), "
            f"got shape {probs.shape}"
        )
    max_prob = float(probs.max()) if len(pairs) else 0.0
    if not 0.0 <= max_prob < 1.0:
        raise ValueError(f"failure probabilities must lie in [0, 1), max is {max_prob}")
    if beta is None:
        beta = default_beta(max_prob)
    if max_prob > 0.0:
        upper = 1.0 / max_prob - 1.0
        if not 0.0 < beta < upper:
            raise ValueError(
                f"beta must lie in (0, {upper}) for max failure prob "
                f"{max_prob}, got {beta}"
            )
    elif not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")

    index = {p: k for k, p in enumerate(pairs)}
    gamma = 0.0
    for i in range(graph.n):
        nbrs = neighbors(graph, i)
        acc = 0.0
        for j in nbrs:
            # probability that j misses i's message
            p = probs[index[(j, i)]]
            term = 20.0 * (1.0 + 1.0 / beta) * p / (1.0 - (1.0 + beta) * p)
            if feedback == FULL_INFO:
                term *= len(nbrs)
            acc += term
        gamma = max(gamma, acc)

    num_pairs = len(pairs)
    gbar = constants.constraint_grad_bound
    omega = (2.0 + 4.0 * num_pairs + gamma) * gbar * gbar + 8.0 * (
        constants.radius * constants.radius
    ) * (constants.constraint_curvature * constants.constraint_curvature)

    eta = step_scale / math.sqrt(horizon)
    min_horizon = max(1, math.ceil(8.0 * step_scale * step_scale * omega))
    if feedback == TWO_POINT and interior_radius is not None:
        min_horizon = max(min_horizon, math.floor(1.0 / interior_radius) + 1)
    disc = 1.0 - 8.0 * eta * eta * omega
    if disc < 0.0:
        return DerivedConstants(
            omega=omega,
            gamma=gamma,
            beta=beta,
            eta=eta,
            feedback=feedback,
            feasible=False,
            min_horizon=min_horizon,
            delta_min=None,
            delta_max=None,
        )
    root = math.sqrt(disc)
    denom = 4.0 * eta * eta
    return DerivedConstants(
        omega=omega,
        gamma=gamma,
        beta=beta,
        eta=eta,
        feedback=feedback,
        feasible=True,
        min_horizon=min_horizon,
        delta_min=(1.0 - root) / denom,
        delta_max=(1.0 + root) / denom,
    )


# ---------------------------------------------------------------------------
# state and per-round steps
# ---------------------------------------------------------------------------


@dataclass
class AgentStates:
    """Decision matrix (n, d) and dual vector, one dual per directed pair."""

    decisions: np.ndarray
    duals: np.ndarray


class PairIndex:
    """Precomputed per-directed-pair lookup used by the inner loop."""

    def __init__(self, graph: NetworkGraph, constraints) -> None:
        self.pairs = directed_pairs(graph)
        self.constraint = [constraints.directed(i, j) for i, j in self.pairs]

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)


def build_pair_index(graph: NetworkGraph, constraints) -> PairIndex:
    return PairIndex(graph, constraints)


def initial_decisions(
    n: int, dim: int, radius: float, rng: np.random.Generator
) -> np.ndarray:
    """Standard normal draws projected into the ball, one row per agent."""
    out = np.empty((n, dim))
    for i in range(n):
        out[i] = project_ball(rng.standard_normal(dim), radius)
    return out


def full_info_step(
    states: AgentStates,
    cache_values: np.ndarray,
    index: PairIndex,
    costs,
    params: SolverParams,
    radius: float,
) -> AgentStates:
    """One full-information primal-dual update from a common snapshot.

    costs[i] must expose grad(x); cache_values[k] is the cached neighbor
    decision for directed pair k.
    """
    x = states.decisions
    lam = states.duals
    n = x.shape[0]
    eta = params.eta
    pull = params.delta * eta

    primal_grad = np.empty_like(x)
    for i in range(n):
        primal_grad[i] = costs[i].grad(x[i])
    dual_grad = np.empty(index.num_pairs)
    for k, (i, _) in enumerate(index.pairs):
        val, grad = index.constraint[k].value_and_grad_i(x[i], cache_values[k])
        dual_grad[k] = val - pull * lam[k]
        primal_grad[i] += (2.0 * lam[k]) * grad

    new_x = np.empty_like(x)
    for i in range(n):
        new_x[i] = project_ball(x[i] - eta * primal_grad[i], radius)
    new_lam = np.maximum(lam + eta * dual_grad, 0.0)
    return AgentStates(new_x, new_lam)


def _unit_sphere(rng: np.random.Generator, dim: int) -> np.ndarray:
    # normalized Gaussian; resample the (measure-zero) near-degenerate draws
    while True:
        z = rng.standard_normal(dim)
        nrm = float(np.linalg.norm(z))
        if nrm >= 1e-12:
            return z / nrm


def bandit_step(
    states: AgentStates,
    cache_values: np.ndarray,
    index: PairIndex,
    costs,
    params: SolverParams,
    full_radius: float,
    rng: np.random.Generator,
) -> tuple[AgentStates, np.ndarray]:
    """One two-point bandit update; costs[i] must expose value(x).

    Each agent probes its cost at x +- zeta*u with u uniform on the unit
    sphere and uses the scaled difference as its gradient estimate.  The
    decision is projected back onto the shrunk ball of radius
    (1 - alpha) * full_radius, which keeps both probes inside the full
    ball.  Returns the updated states and the (n, 2, d) probe points.
    """
    x = states.decisions
    lam = states.duals
    n, dim = x.shape
    eta = params.eta
    zeta = params.zeta
    pull = params.delta * eta
    shrunk_radius = (1.0 - params.alpha) * full_radius

    primal_grad = np.empty_like(x)
    queries = np.empty((n, 2, dim))
    for i in range(n):
        u = _unit_sphere(rng, dim)
        plus = x[i] + zeta * u
        minus = x[i] - zeta * u
        for point in (plus, minus):
            if float(np.linalg.norm(point)) > full_radius:
                raise QueryOutsideFeasible(
                    f"probe for agent {i} has norm "
                    f"{float(np.linalg.norm(point))} > {full_radius}; "
                    f"check zeta/alpha against the interior radius"
                )
        diff = costs[i].value(plus) - costs[i].value(minus)
        primal_grad[i] = (dim / (2.0 * zeta)) * diff * u
        queries[i, 0] = plus
        queries[i, 1] = minus

    dual_grad = np.empty(index.num_pairs)
    for k, (i, _) in enumerate(index.pairs):
        val, grad = index.constraint[k].value_and_grad_i(x[i], cache_values[k])
        dual_grad[k] = val - pull * lam[k]
        primal_grad[i] += (2.0 * lam[k]) * grad

    new_x = np.empty_like(x)
    for i in range(n):
        new_x[i] = project_ball(x[i] - eta * primal_grad[i], shrunk_radius)
    new_lam = np.maximum(lam + eta * dual_grad, 0.0)
    return AgentStates(new_x, new_lam), queries


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------


def run(
    problem: Problem,
    graph: NetworkGraph,
    channel: LinkFailureModel,
    params: SolverParams,
    horizon: int,
    init_rng: np.random.Generator,
    bandit_rng: np.random.Generator | None = None,
    record_cache: bool = False,
    record_duals: bool = False,
) -> RunRecord:
    """Simulate ``horizon`` rounds and record the trajectory.

    Per-round order: the standing decisions are recorded, the round's
    costs are revealed and scored at those decisions, the decisions are
    exchanged over the lossy channel, and finally (except after the last
    round) the primal-dual update fires.  The stream and the channel are
    consumed; pass fresh ones per run.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if channel.rounds_done != 0:
        raise ValueError("channel has already been used; build a fresh one per run")
    if channel.graph.edges != graph.edges or channel.graph.n != graph.n:
        raise ValueError("channel was built for a different graph")
    if params.feedback == TWO_POINT and bandit_rng is None:
        raise ValueError("bandit mode needs a probe RNG")

    index = build_pair_index(graph, problem.constraints)
    n, dim = problem.n, problem.dim
    num_pairs = index.num_pairs
    num_edges = len(problem.constraints)
    full_radius = problem.feasible.radius
    if params.feedback == TWO_POINT:
        start_radius = (1.0 - params.alpha) * full_radius
    else:
        start_radius = full_radius

    states = AgentStates(
        decisions=initial_decisions(n, dim, start_radius, init_rng),
        duals=np.zeros(num_pairs),
    )
    cache = NeighborCache(num_pairs, dim)

    decisions = np.empty((horizon, n, dim))
    inst_cost = np.empty(horizon)
    edge_values = np.empty((horizon, num_edges))
    delivered_frac = np.empty(horizon)
    flags = np.empty((horizon, num_pairs), dtype=bool)
    duals = np.empty((horizon, num_pairs)) if record_duals else None
    cache_trace = np.empty((horizon, num_pairs, dim)) if record_cache else None
    cost_rounds = []

    for t in range(1, horizon + 1):
        costs = problem.stream.next_round()
        cost_rounds.append(costs)
        row = t - 1
        decisions[row] = states.decisions
        inst_cost[row] = sum(costs[i].value(states.decisions[i]) for i in range(n))
        edge_values[row] = problem.constraints.values(states.decisions)
        if record_duals:
            duals[row] = states.duals
        round_flags = exchange_round(channel, cache, states.decisions)
        flags[row] = round_flags
        delivered_frac[row] = float(round_flags.mean()) if num_pairs else 1.0
        if record_cache:
            cache_trace[row] = cache.values
        if t == horizon:
            break
        if params.feedback == FULL_INFO:
            states = full_info_step(
                states, cache.values, index, costs, params, full_radius
            )
        else:
            states, _ = bandit_step(
                states, cache.values, index, costs, params, full_radius, bandit_rng
            )

    return RunRecord(
        decisions=decisions,
        inst_cost=inst_cost,
        edge_values=edge_values,
        delivered_frac=delivered_frac,
        flags=flags,
        cost_rounds=cost_rounds,
        edges=problem.constraints.edges,
        pairs=tuple(index.pairs),
        duals=duals,
        cache_trace=cache_trace,
    )
