"""Problem families: feasible sets, pairwise constraints, cost streams.

Two experiment families are provided.  The quadratic family has per-round
quadratic costs whose parameters drift inside hard clamps, coupled by
fixed quadratic constraints on each edge.  The logistic family has
per-round log-loss costs on fresh Gaussian samples, coupled by proximity
constraints that keep neighboring decisions close.

Every pairwise constraint is stored once per undirected edge in canonical
(lo, hi) node order and both directed views evaluate through that single
representation, so g(i, j) and g(j, i) run the exact same floating-point
operations and agree bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import clamp_eigenvalues, clamp_eigenvalues_stack, jacobi_eigh
from .graph import NetworkGraph

__all__ = [
    "FeasibleSet",
    "ShrunkSet",
    "project_ball",
    "sample_ball",
    "QuadraticEdgeConstraint",
    "ProximityEdgeConstraint",
    "DirectedConstraint",
    "ConstraintSet",
    "QcqpCostRound",
    "QcqpStreamConfig",
    "QcqpStream",
    "LogisticCostRound",
    "LogisticStreamConfig",
    "LogisticStream",
    "Problem",
    "ProblemConstants",
    "estimate_problem_constants",
    "qcqp_problem",
    "logistic_problem",
    "dump_qcqp_params",
]

MEMBERSHIP_TOL = 1e-12


# ---------------------------------------------------------------------------
# feasible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibleSet:
    """Euclidean ball of given radius centered at the origin."""

    radius: float
    dim: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")
        if self.dim < 1:
            raise ValueError(f"dim must be at least 1, got {self.dim}")

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return float(np.linalg.norm(x)) <= self.radius + tol


@dataclass(frozen=True)
class ShrunkSet:
    """The base ball scaled toward the origin by (1 - alpha).

    Used by the bandit solver: decisions live here so that both probe
    points x +- zeta*u stay inside the full set.  The origin-centered
    interior ball of radius ``interior_radius`` must sit inside the base
    set for the shrinkage to make sense.
    """

    base: FeasibleSet
    alpha: float
    interior_radius: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 < self.interior_radius <= self.base.radius:
            raise ValueError(
                f"interior radius must lie in (0, {self.base.radius}], "
                f"got {self.interior_radius}"
            )

    @property
    def radius(self) -> float:
        return (1.0 - self.alpha) * self.base.radius

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return float(np.linalg.norm(x)) <= self.radius + tol


def project_ball(x: np.ndarray, target) -> np.ndarray:
    """Euclidean projection of a single vector onto an origin-centered ball.

    ``target`` may be a FeasibleSet, a ShrunkSet, or a bare radius.
    Points already inside are returned untouched.
    """
    radius = target if isinstance(target, (int, float)) else target.radius
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite vector")
    nrm = float(np.linalg.norm(x))
    if nrm <= radius:
        return x
    return x * (radius / nrm)


def sample_ball(rng: np.random.Generator, num: int, dim: int, radius: float) -> np.ndarray:
    """Uniform sample of ``num`` points from the radius-``radius`` ball."""
    z = rng.standard_normal((num, dim))
    nrm = np.linalg.norm(z, axis=1, keepdims=True)
    nrm[nrm < 1e-12] = 1.0
    shell = rng.random((num, 1)) ** (1.0 / dim)
    return radius * shell * (z / nrm)


# ---------------------------------------------------------------------------
# pairwise constraints
# ---------------------------------------------------------------------------


def _swap_indices(d: int) -> np.ndarray:
    # block permutation exchanging the two d-sized halves of a 2d vector
    return np.concatenate((np.arange(d, 2 * d), np.arange(d)))


class QuadraticEdgeConstraint:
    """g(x_lo, x_hi) = 0.5 z'Sz + h'z + q with z the stacked pair.

    S is symmetric PSD and invariant under swapping the two blocks, and h
    is invariant under the same swap, so the constraint treats both
    endpoints identically.
    """

    kind = "quadratic"
    __slots__ = ("quad", "lin", "offset", "dim")

    def __init__(self, quad: np.ndarray, lin: np.ndarray, offset: float) -> None:
        quad = np.asarray(quad, dtype=float)
        lin = np.asarray(lin, dtype=float)
        if quad.ndim != 2 or quad.shape[0] != quad.shape[1] or quad.shape[0] % 2:
            raise ValueError(f"quadratic term must be (2d, 2d), got {quad.shape}")
        d = quad.shape[0] // 2
        if lin.shape != (2 * d,):
            raise ValueError(f"linear term must be ({2 * d},), got {lin.shape}")
        if not np.allclose(quad, quad.T, atol=1e-9, rtol=0.0):
            raise ValueError("quadratic term is not symmetric")
        idx = _swap_indices(d)
        if not np.allclose(quad, quad[np.ix_(idx, idx)], atol=1e-9, rtol=0.0):
            raise ValueError("quadratic term is not block-swap symmetric")
        if not np.allclose(lin, lin[idx], atol=1e-9, rtol=0.0):
            raise ValueError("linear term is not block-swap symmetric")
        self.quad = quad
        self.lin = lin
        self.offset = float(offset)
        self.dim = d

    def value(self, x_lo: np.ndarray, x_hi: np.ndarray) -> float:
        z = np.concatenate((x_lo, x_hi))
        sz = self.quad @ z
        return float(0.5 * (z @ sz) + self.lin @ z + self.offset)

    def value_and_grad(
        self, x_lo: np.ndarray, x_hi: np.ndarray, wrt_lo: bool
    ) -> tuple[float, np.ndarray]:
        z = np.concatenate((x_lo, x_hi))
        sz = self.quad @ z
        val = float(0.5 * (z @ sz) + self.lin @ z + self.offset)
        full = sz + self.lin
        grad = full[: self.dim] if wrt_lo else full[self.dim :]
        return val, grad

    def grad(self, x_lo: np.ndarray, x_hi: np.ndarray, wrt_lo: bool) -> np.ndarray:
        return self.value_and_grad(x_lo, x_hi, wrt_lo)[1]


class ProximityEdgeConstraint:
    """g(x_lo, x_hi) = ||x_lo - x_hi||^2 - b^2: stay within distance b."""

    kind = "proximity"
    __slots__ = ("distance",)

    def __init__(self, distance: float) -> None:
        if not distance > 0:
            raise ValueError(f"distance bound must be positive, got {distance}")
        self.distance = float(distance)

    def value(self, x_lo: np.ndarray, x_hi: np.ndarray) -> float:
        diff = x_lo - x_hi
        return float(diff @ diff - self.distance * self.distance)

    def value_and_grad(
        self, x_lo: np.ndarray, x_hi: np.ndarray, wrt_lo: bool
    ) -> tuple[float, np.ndarray]:
        diff = x_lo - x_hi
        val = float(diff @ diff - self.distance * self.distance)
        grad = 2.0 * diff if wrt_lo else 2.0 * (x_hi - x_lo)
        return val, grad

    def grad(self, x_lo: np.ndarray, x_hi: np.ndarray, wrt_lo: bool) -> np.ndarray:
        return self.value_and_grad(x_lo, x_hi, wrt_lo)[1]


class DirectedConstraint:
    """One orientation (i, j) of an edge constraint.

    ``value(x_i, x_j)`` and ``grad_i(x_i, x_j)`` take the owning agent's
    decision first.  Both orientations of an edge share the same canonical
    parameters, so swapped evaluations agree exactly.
    """

    __slots__ = ("edge", "owner_is_lo")

    def __init__(self, edge, owner_is_lo: bool) -> None:
        self.edge = edge
        self.owner_is_lo = owner_is_lo

    def value(self, x_i: np.ndarray, x_j: np.ndarray) -> float:
        if self.owner_is_lo:
            return self.edge.value(x_i, x_j)
        return self.edge.value(x_j, x_i)

    def value_and_grad_i(
        self, x_i: np.ndarray, x_j: np.ndarray
    ) -> tuple[float, np.ndarray]:
        if self.owner_is_lo:
            return self.edge.value_and_grad(x_i, x_j, wrt_lo=True)
        return self.edge.value_and_grad(x_j, x_i, wrt_lo=False)

    def grad_i(self, x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
        return self.value_and_grad_i(x_i, x_j)[1]


class ConstraintSet:
    """All pairwise constraints of a problem, one per undirected edge."""

    def __init__(self, graph: NetworkGraph, edge_constraints: dict) -> None:
        self.graph = graph
        self.edges = graph.edges
        missing = [e for e in self.edges if e not in edge_constraints]
        if missing:
            raise ValueError(f"no constraint given for edges {missing}")
        extra = [e for e in edge_constraints if e not in set(self.edges)]
        if extra:
            raise ValueError(f"constraints given for non-edges {extra}")
        self._by_edge = {e: edge_constraints[e] for e in self.edges}
        kinds = {c.kind for c in self._by_edge.values()}
        if len(kinds) > 1:
            raise ValueError(f"mixed constraint kinds unsupported: {sorted(kinds)}")
        self.kind = kinds.pop() if kinds else "empty"
        self.lo_idx = np.array([e[0] for e in self.edges], dtype=int)
        self.hi_idx = np.array([e[1] for e in self.edges], dtype=int)
        # stacked parameter arrays for the vectorized evaluators
        if self.kind == "quadratic":
            self._quad = np.stack([self._by_edge[e].quad for e in self.edges])
            self._lin = np.stack([self._by_edge[e].lin for e in self.edges])
            self._off = np.array([self._by_edge[e].offset for e in self.edges])
        elif self.kind == "proximity":
            self._dist = np.array([self._by_edge[e].distance for e in self.edges])

    def __len__(self) -> int:
        return len(self.edges)

    def edge_constraint(self, lo: int, hi: int):
        return self._by_edge[(lo, hi)]

    def directed(self, i: int, j: int) -> DirectedConstraint:
        lo, hi = (i, j) if i < j else (j, i)
        return DirectedConstraint(self._by_edge[(lo, hi)], owner_is_lo=(i == lo))

    def values(self, x: np.ndarray) -> np.ndarray:
        """Constraint values at a full decision matrix x of shape (n, d)."""
        if not self.edges:
            return np.zeros(0)
        if self.kind == "quadratic":
            z = np.concatenate((x[self.lo_idx], x[self.hi_idx]), axis=1)
            sz = np.einsum("eab,eb->ea", self._quad, z)
            return (
                0.5 * np.einsum("ea,ea->e", z, sz)
                + np.einsum("ea,ea->e", self._lin, z)
                + self._off
            )
        diff = x[self.lo_idx] - x[self.hi_idx]
        return np.einsum("ea,ea->e", diff, diff) - self._dist * self._dist

    def grads(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-edge partial gradients (wrt lo endpoint, wrt hi endpoint)."""
        if not self.edges:
            d = x.shape[1]
            return np.zeros((0, d)), np.zeros((0, d))
        if self.kind == "quadratic":
            d = x.shape[1]
            z = np.concatenate((x[self.lo_idx], x[self.hi_idx]), axis=1)
            full = np.einsum("eab,eb->ea", self._quad, z) + self._lin
            return full[:, :d], full[:, d:]
        diff = x[self.lo_idx] - x[self.hi_idx]
        return 2.0 * diff, -2.0 * diff


# ---------------------------------------------------------------------------
# quadratic cost stream
# ---------------------------------------------------------------------------


class QcqpCostRound:
    """One round of one agent's quadratic cost 0.5 x'Ax + x'b."""

    __slots__ = ("curvature", "linear")

    def __init__(self, curvature: np.ndarray, linear: np.ndarray) -> None:
        self.curvature = curvature
        self.linear = linear

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * (x @ (self.curvature @ x)) + self.linear @ x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.curvature @ x + self.linear


@dataclass(frozen=True)
class QcqpStreamConfig:
    """Knobs of the quadratic experiment generator.

    Defaults match the reference experiment: curvature eigenvalues kept in
    [0, 10], linear entries in [-10, 10], per-round drift uniform in
    +-0.01, and constraint offsets shifted until a sampled feasible point
    exists with margin 0.1.  The coupling stds scale the raw edge draws
    (Wishart matrix part and linear part) before symmetrization.
    """

    perturb_halfwidth: float = 0.01
    eig_min: float = 0.0
    eig_max: float = 10.0
    entry_min: float = -10.0
    entry_max: float = 10.0
    coupling_matrix_std: float = 2.0
    coupling_linear_std: float = 4.0
    feasibility_margin: float = 0.1
    feasibility_samples: int = 1000


class QcqpStream:
    """Drifting quadratic costs with fixed quadratic edge couplings.

    All randomness comes from one generator seeded at construction; the
    draw order is fixed (agents in index order, then edges in canonical
    order, then the feasibility sample; per round, agents in index order),
    so a given seed always yields the same parameter sequence.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        dim: int,
        radius: float,
        seed,
        config: QcqpStreamConfig | None = None,
    ) -> None:
        self.config = config or QcqpStreamConfig()
        self.graph = graph
        self.dim = dim
        self.radius = float(radius)
        self._rng = np.random.default_rng(seed)
        cfg = self.config
        n, d = graph.n, dim

        grams = np.empty((n, d, d))
        linears = np.empty((n, d))
        for i in range(n):
            z = self._rng.standard_normal((d, d))
            grams[i] = z @ z.T
            mu = self._rng.uniform(0.0, 1.0)
            sigma = self._rng.uniform(0.0, 1.0)
            b = mu + sigma * self._rng.standard_normal(d)
            linears[i] = np.clip(b, cfg.entry_min, cfg.entry_max)
        self._curvatures = clamp_eigenvalues_stack(grams, cfg.eig_min, cfg.eig_max)
        self._linears = linears

        # Coupling strength matters: the walls must be steep enough that a
        # few rounds of neighbor staleness produce a measurable detour, or
        # the sweep over failure levels degenerates into identical curves.
        idx = _swap_indices(d)
        raw = []
        for _ in graph.edges:
            w = cfg.coupling_matrix_std * self._rng.standard_normal((2 * d, 2 * d))
            gram = w @ w.T
            sym = 0.5 * (gram + gram.T)
            quad = 0.5 * (sym + sym[np.ix_(idx, idx)])
            lin_raw = cfg.coupling_linear_std * self._rng.standard_normal(2 * d)
            lin = 0.5 * (lin_raw + lin_raw[idx])
            off = float(self._rng.standard_normal())
            raw.append((quad, lin, off))

        # Shift offsets until one sampled decision configuration satisfies
        # every constraint with margin, so the joint problem (and hence the
        # hindsight benchmark) is feasible.  Per-edge shifts against the
        # edge's own best sample would leave the edges mutually
        # inconsistent, so all edges are scored on a shared sample and
        # shifted against the configuration with the smallest worst case.
        num = cfg.feasibility_samples
        configs = sample_ball(self._rng, num * n, d, self.radius).reshape(num, n, d)
        sample_vals = np.empty((len(graph.edges), num))
        for row, (e, (quad, lin, off)) in enumerate(zip(graph.edges, raw)):
            lo, hi = e
            z = np.concatenate((configs[:, lo, :], configs[:, hi, :]), axis=1)
            sample_vals[row] = (
                0.5 * np.einsum("ka,ab,kb->k", z, quad, z) + z @ lin + off
            )
        constraints = {}
        if len(graph.edges):
            anchor = int(np.argmin(sample_vals.max(axis=0)))
            for row, (e, (quad, lin, off)) in enumerate(zip(graph.edges, raw)):
                shift = max(0.0, float(sample_vals[row, anchor])) + cfg.feasibility_margin
                constraints[e] = QuadraticEdgeConstraint(quad, lin, off - shift)
        self._constraints = ConstraintSet(graph, constraints)
        self._rounds_emitted = 0

    @property
    def constraints(self) -> ConstraintSet:
        return self._constraints

    def next_round(self) -> list[QcqpCostRound]:
        """Costs for the next round; the first call returns the initial draw."""
        cfg = self.config
        if self._rounds_emitted > 0:
            w = cfg.perturb_halfwidth
            perturbed = np.empty_like(self._curvatures)
            new_lin = np.empty_like(self._linears)
            for i in range(len(perturbed)):
                delta = self._rng.uniform(-w, w, size=perturbed[i].shape)
                perturbed[i] = self._curvatures[i] + 0.5 * (delta + delta.T)
                db = self._rng.uniform(-w, w, size=new_lin[i].shape)
                new_lin[i] = np.clip(self._linears[i] + db, cfg.entry_min, cfg.entry_max)
            self._curvatures = clamp_eigenvalues_stack(perturbed, cfg.eig_min, cfg.eig_max)
            self._linears = new_lin
        self._rounds_emitted += 1
        return [
            QcqpCostRound(a, b) for a, b in zip(self._curvatures, self._linears)
        ]


# ---------------------------------------------------------------------------
# logistic cost stream
# ---------------------------------------------------------------------------


def _sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


class LogisticCostRound:
    """Log-loss of one labeled sample: log(1 + exp(-label * <features, x>))."""

    __slots__ = ("features", "label")

    def __init__(self, features: np.ndarray, label: int) -> None:
        self.features = features
        self.label = label

    def value(self, x: np.ndarray) -> float:
        s = self.label * float(self.features @ x)
        return float(np.logaddexp(0.0, -s))

    def grad(self, x: np.ndarray) -> np.ndarray:
        s = self.label * float(self.features @ x)
        return (-self.label * _sigmoid(-s)) * self.features


@dataclass(frozen=True)
class LogisticStreamConfig:
    """Knobs of the logistic experiment generator.

    The default proximity bounds are deliberately tight relative to the
    unit ball: agents whose classifiers point in unrelated directions
    must compromise, so the pairwise coupling carries real dual pressure
    and degraded communication has a visible cost.  Loose bounds leave
    the constraints nearly slack and the network insensitive to failures.
    """

    distance_min: float = 0.2
    distance_max: float = 0.4


class LogisticStream:
    """Per-round Gaussian samples labeled by hidden per-agent parameters.

    Each agent's ground truth is a standard normal vector projected into
    the feasible ball; labels are drawn from the logistic model at that
    parameter.  Edges carry proximity constraints with distance bounds
    drawn once at construction.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        dim: int,
        radius: float,
        seed,
        config: LogisticStreamConfig | None = None,
    ) -> None:
        self.config = config or LogisticStreamConfig()
        self.graph = graph
        self.dim = dim
        self.radius = float(radius)
        self._rng = np.random.default_rng(seed)
        self._truth = [
            project_ball(self._rng.standard_normal(dim), self.radius)
            for _ in range(graph.n)
        ]
        constraints = {}
        for e in graph.edges:
            bound = float(
                self._rng.uniform(self.config.distance_min, self.config.distance_max)
            )
            constraints[e] = ProximityEdgeConstraint(bound)
        self._constraints = ConstraintSet(graph, constraints)

    @property
    def constraints(self) -> ConstraintSet:
        return self._constraints

    @property
    def ground_truth(self) -> list[np.ndarray]:
        return self._truth

    def next_round(self) -> list[LogisticCostRound]:
        rounds = []
        for i in range(self.graph.n):
            features = self._rng.standard_normal(self.dim)
            prob_pos = _sigmoid(float(features @ self._truth[i]))
            label = 1 if self._rng.random() < prob_pos else -1
            rounds.append(LogisticCostRound(features, label))
        return rounds


# ---------------------------------------------------------------------------
# problem bundle and constants
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    """Everything a solver needs: geometry, couplings, and the cost stream."""

    n: int
    dim: int
    feasible: FeasibleSet
    constraints: ConstraintSet
    stream: object


def qcqp_problem(
    graph: NetworkGraph,
    dim: int,
    radius: float,
    seed,
    config: QcqpStreamConfig | None = None,
) -> Problem:
    stream = QcqpStream(graph, dim, radius, seed, config)
    return Problem(
        n=graph.n,
        dim=dim,
        feasible=FeasibleSet(radius=radius, dim=dim),
        constraints=stream.constraints,
        stream=stream,
    )


def logistic_problem(
    graph: NetworkGraph,
    dim: int,
    radius: float,
    seed,
    config: LogisticStreamConfig | None = None,
) -> Problem:
    stream = LogisticStream(graph, dim, radius, seed, config)
    return Problem(
        n=graph.n,
        dim=dim,
        feasible=FeasibleSet(radius=radius, dim=dim),
        constraints=stream.constraints,
        stream=stream,
    )


@dataclass(frozen=True)
class ProblemConstants:
    """Bounds entering the derived-parameter formulas.

    cost_grad_bound: sup over the ball of the cost gradient norm.
    constraint_grad_bound: sup of any partial constraint gradient norm.
    constraint_curvature: gradient-Lipschitz constant of the constraints.
    constraint_bound: sup of the absolute constraint value.
    radius: feasible-ball radius.
    """

    cost_grad_bound: float
    constraint_grad_bound: float
    constraint_curvature: float
    constraint_bound: float
    radius: float


def estimate_problem_constants(
    sample_rounds,
    constraints: ConstraintSet,
    feasible: FeasibleSet,
    seed,
    num_points: int = 512,
) -> ProblemConstants:
    """Sample-max estimates of the problem constants.

    Draws random decision matrices in the feasible ball and takes maxima
    of the observed gradient and value norms over them and over the given
    cost rounds.  These are heuristic lower estimates of the true suprema;
    the curvature constant is exact (largest constraint Hessian norm).
    """
    rng = np.random.default_rng(seed)
    n = constraints.graph.n
    d = feasible.dim
    cost_grad = 0.0
    cons_grad = 0.0
    cons_val = 0.0
    for _ in range(num_points):
        x = sample_ball(rng, n, d, feasible.radius)
        for costs in sample_rounds:
            for i, c in enumerate(costs):
                cost_grad = max(cost_grad, float(np.linalg.norm(c.grad(x[i]))))
        if len(constraints):
            vals = constraints.values(x)
            glo, ghi = constraints.grads(x)
            cons_val = max(cons_val, float(np.max(np.abs(vals))))
            norms = np.linalg.norm(np.concatenate((glo, ghi)), axis=1)
            cons_grad = max(cons_grad, float(np.max(norms)))
    if constraints.kind == "quadratic":
        curvature = max(
            float(np.max(np.abs(jacobi_eigh(constraints.edge_constraint(*e).quad)[0])))
            for e in constraints.edges
        )
    elif constraints.kind == "proximity":
        curvature = 4.0  # largest eigenvalue of the fixed proximity Hessian
    else:
        curvature = 0.0
    return ProblemConstants(
        cost_grad_bound=cost_grad,
        constraint_grad_bound=cons_grad,
        constraint_curvature=curvature,
        constraint_bound=cons_val,
        radius=feasible.radius,
    )


# ---------------------------------------------------------------------------
# golden-file dump
# ---------------------------------------------------------------------------


def dump_qcqp_params(stream: QcqpStream) -> str:
    """Flat text dump of the stream's current parameters.

    One object per line, matrices row-major.  Intended for freezing a
    generated instance into a golden file; call before consuming rounds
    to capture the initial draw.
    """

    def fmt(arr) -> str:
        return " ".join(repr(float(v)) for v in np.asarray(arr).ravel())

    lines = [f"qcqp n={stream.graph.n} d={stream.dim}"]
    for i, (a, b) in enumerate(zip(stream._curvatures, stream._linears)):
        lines.append(f"A {i} {fmt(a)}")
        lines.append(f"b {i} {fmt(b)}")
    for lo, hi in stream.graph.edges:
        c = stream.constraints.edge_constraint(lo, hi)
        lines.append(f"S {lo} {hi} {fmt(c.quad)}")
        lines.append(f"h {lo} {hi} {fmt(c.lin)}")
        lines.append(f"q {lo} {hi} {repr(c.offset)}")
    return "\n".join(lines) + "\n"
