"""Run records, regret and violation series, and the hindsight benchmark.

Regret compares the online trajectory against the best fixed decisions in
hindsight: the minimizer of the summed costs subject to every pairwise
constraint.  Violations are the signed per-edge constraint values at the
*true* decisions of both endpoints (what the network actually did, not
what any agent believed about its neighbors), accumulated over rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import (
    ConstraintSet,
    FeasibleSet,
    LogisticCostRound,
    QcqpCostRound,
)

__all__ = [
    "RunRecord",
    "RegretSeries",
    "ViolationSeries",
    "HindsightBenchmark",
    "truncate_record",
    "regret_series",
    "violation_series",
    "aggregate_cost",
    "solve_hindsight",
]


@dataclass
class RunRecord:
    """Everything observable about one run.

    decisions: (T, n, d) trajectory, decisions[t-1] is round t.
    inst_cost: (T,) summed cost of the round at the round's decisions.
    edge_values: (T, E) true constraint values per undirected edge.
    delivered_frac: (T,) fraction of directed pairs delivered per round.
    flags: (T, m) per-pair delivery flags.
    cost_rounds: the revealed cost objects, T lists of n entries.
    duals, cache_trace: optional diagnostics (see solver.run flags).
    """

    decisions: np.ndarray
    inst_cost: np.ndarray
    edge_values: np.ndarray
    delivered_frac: np.ndarray
    flags: np.ndarray
    cost_rounds: list
    edges: tuple
    pairs: tuple
    duals: np.ndarray | None = None
    cache_trace: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.decisions.shape[0]

    @property
    def n(self) -> int:
        return self.decisions.shape[1]

    @property
    def dim(self) -> int:
        return self.decisions.shape[2]

    @property
    def num_edges(self) -> int:
        return self.edge_values.shape[1]


def truncate_record(record: RunRecord, horizon: int) -> RunRecord:
    """Prefix of a record: valid because round t never peeks past round t."""
    if not 1 <= horizon <= record.horizon:
        raise ValueError(f"cannot truncate horizon {record.horizon} to {horizon}")
    return RunRecord(
        decisions=record.decisions[:horizon],
        inst_cost=record.inst_cost[:horizon],
        edge_values=record.edge_values[:horizon],
        delivered_frac=record.delivered_frac[:horizon],
        flags=record.flags[:horizon],
        cost_rounds=record.cost_rounds[:horizon],
        edges=record.edges,
        pairs=record.pairs,
        duals=None if record.duals is None else record.duals[:horizon],
        cache_trace=None if record.cache_trace is None else record.cache_trace[:horizon],
    )


@dataclass
class RegretSeries:
    """Cumulative regret and its per-round relative average.

    rel_avg[t-1] = cumulative[t-1] / (t * cumulative[0]); when the first
    round's regret is exactly zero the normalizer degenerates, the curve
    falls back to cumulative/t, and the flag is set.
    """

    cumulative: np.ndarray
    rel_avg: np.ndarray
    degenerate_normalizer: bool


@dataclass
class ViolationSeries:
    """Signed cumulative constraint violations per edge plus summaries."""

    cumulative: np.ndarray
    rel_avg: np.ndarray
    mean_rel_avg: np.ndarray
    max_cumulative: np.ndarray
    degenerate_normalizer: np.ndarray


@dataclass
class HindsightBenchmark:
    """Best fixed feasible decisions for a recorded cost history."""

    decisions: np.ndarray
    average_cost: float
    feasible: bool
    max_violation: float
    stationarity: float
    complementarity: float
    iterations: int


def regret_series(record: RunRecord, benchmark: HindsightBenchmark) -> RegretSeries:
    horizon, n = record.horizon, record.n
    bench = np.empty(horizon)
    xstar = benchmark.decisions
    for t, costs in enumerate(record.cost_rounds):
        bench[t] = sum(costs[i].value(xstar[i]) for i in range(n))
    cumulative = np.cumsum(record.inst_cost - bench)
    rounds = np.arange(1, horizon + 1, dtype=float)
    first = cumulative[0]
    degenerate = first == 0.0
    if degenerate:
        rel = cumulative / rounds
    else:
        rel = cumulative / (rounds * first)
    return RegretSeries(
        cumulative=cumulative, rel_avg=rel, degenerate_normalizer=degenerate
    )


def violation_series(record: RunRecord) -> ViolationSeries:
    horizon, num_edges = record.horizon, record.num_edges
    rounds = np.arange(1, horizon + 1, dtype=float)[:, None]
    if num_edges == 0:
        zeros = np.zeros((horizon, 0))
        flat = np.zeros(horizon)
        return ViolationSeries(zeros, zeros, flat, flat, np.zeros(0, dtype=bool))
    cumulative = np.cumsum(record.edge_values, axis=0)
    first = cumulative[0]
    degenerate = first == 0.0
    denom = np.where(degenerate, 1.0, first)
    rel = cumulative / (rounds * denom)
    return ViolationSeries(
        cumulative=cumulative,
        rel_avg=rel,
        mean_rel_avg=rel.mean(axis=1),
        max_cumulative=cumulative.max(axis=1),
        degenerate_normalizer=degenerate,
    )


# ---------------------------------------------------------------------------
# hindsight benchmark
# ---------------------------------------------------------------------------


def _sigmoid_rows(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class _AverageQuadratic:
    """Time average of quadratic cost rounds: again a quadratic."""

    def __init__(self, cost_rounds) -> None:
        n = len(cost_rounds[0])
        horizon = len(cost_rounds)
        d = cost_rounds[0][0].linear.shape[0]
        self.curv = np.zeros((n, d, d))
        self.lin = np.zeros((n, d))
        for costs in cost_rounds:
            for i, c in enumerate(costs):
                self.curv[i] += c.curvature
                self.lin[i] += c.linear
        self.curv /= horizon
        self.lin /= horizon

    def value(self, x: np.ndarray) -> float:
        ax = np.einsum("nab,nb->na", self.curv, x)
        return float(0.5 * np.einsum("na,na->", x, ax) + np.einsum("na,na->", self.lin, x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("nab,nb->na", self.curv, x) + self.lin

    def hess(self, x: np.ndarray) -> np.ndarray:
        return self.curv


class _AverageLogistic:
    """Time average of per-sample log losses, kept as the full batch."""

    def __init__(self, cost_rounds) -> None:
        n = len(cost_rounds[0])
        self.features = np.stack(
            [np.stack([costs[i].features for costs in cost_rounds]) for i in range(n)]
        )  # (n, T, d)
        self.labels = np.array(
            [[costs[i].label for costs in cost_rounds] for i in range(n)], dtype=float
        )  # (n, T)

    def value(self, x: np.ndarray) -> float:
        s = self.labels * np.einsum("ntd,nd->nt", self.features, x)
        return float(np.logaddexp(0.0, -s).mean(axis=1).sum())

    def grad(self, x: np.ndarray) -> np.ndarray:
        s = self.labels * np.einsum("ntd,nd->nt", self.features, x)
        w = self.labels * _sigmoid_rows(-s)  # (n, T)
        horizon = self.labels.shape[1]
        return -np.einsum("nt,ntd->nd", w, self.features) / horizon

    def hess(self, x: np.ndarray) -> np.ndarray:
        s = self.labels * np.einsum("ntd,nd->nt", self.features, x)
        sig = _sigmoid_rows(s)
        w = sig * (1.0 - sig)
        horizon = self.labels.shape[1]
        return (
            np.einsum("nt,nta,ntb->nab", w, self.features, self.features) / horizon
        )


def aggregate_cost(cost_rounds):
    """Time-averaged objective of a recorded cost history."""
    first = cost_rounds[0][0]
    if isinstance(first, QcqpCostRound):
        return _AverageQuadratic(cost_rounds)
    if isinstance(first, LogisticCostRound):
        return _AverageLogistic(cost_rounds)
    raise TypeError(f"no aggregate for cost rounds of type {type(first).__name__}")


def _project_rows(x: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    scale = np.ones_like(norms)
    over = norms > radius
    scale[over] = radius / norms[over]
    return x * scale[:, None]


def _edge_terms(constraints: ConstraintSet, edge_idx: int, x: np.ndarray):
    """Value, stacked gradient and Hessian of one edge constraint at x."""
    lo, hi = constraints.edges[edge_idx]
    c = constraints.edge_constraint(lo, hi)
    if constraints.kind == "quadratic":
        z = np.concatenate((x[lo], x[hi]))
        sz = c.quad @ z
        val = float(0.5 * (z @ sz) + c.lin @ z + c.offset)
        grad = sz + c.lin
        hess = c.quad
    else:
        diff = x[lo] - x[hi]
        val = float(diff @ diff - c.distance * c.distance)
        grad = np.concatenate((2.0 * diff, -2.0 * diff))
        d = diff.shape[0]
        eye2 = 2.0 * np.eye(d)
        hess = np.block([[eye2, -eye2], [-eye2, eye2]])
    return lo, hi, val, grad, hess


def _kkt_residual(agg, constraints, radius, active_e, active_b, x, lam, mu, jac):
    """Residual (and optionally Jacobian) of the active-set KKT system."""
    n, d = x.shape
    nd = n * d
    na, nb = len(active_e), len(active_b)
    grad = agg.grad(x)
    gvals = np.empty(na)
    bvals = np.empty(nb)
    if jac:
        H = np.zeros((nd, nd))
        hb = agg.hess(x)
        for i in range(n):
            H[i * d : (i + 1) * d, i * d : (i + 1) * d] += hb[i]
        G = np.zeros((na, nd))
        N = np.zeros((nb, nd))
    for row, e in enumerate(active_e):
        lo, hi, val, egrad, ehess = _edge_terms(constraints, e, x)
        gvals[row] = val
        grad[lo] += lam[row] * egrad[:d]
        grad[hi] += lam[row] * egrad[d:]
        if jac:
            G[row, lo * d : (lo + 1) * d] = egrad[:d]
            G[row, hi * d : (hi + 1) * d] = egrad[d:]
            sl, sh = slice(lo * d, (lo + 1) * d), slice(hi * d, (hi + 1) * d)
            H[sl, sl] += lam[row] * ehess[:d, :d]
            H[sl, sh] += lam[row] * ehess[:d, d:]
            H[sh, sl] += lam[row] * ehess[d:, :d]
            H[sh, sh] += lam[row] * ehess[d:, d:]
    for row, i in enumerate(active_b):
        xi = x[i]
        bvals[row] = float(xi @ xi) - radius * radius
        grad[i] += (2.0 * mu[row]) * xi
        if jac:
            N[row, i * d : (i + 1) * d] = 2.0 * xi
            sl = slice(i * d, (i + 1) * d)
            H[sl, sl] += (2.0 * mu[row]) * np.eye(d)
    r = np.concatenate((grad.reshape(-1), gvals, bvals))
    if not jac:
        return r, None
    size = nd + na + nb
    J = np.zeros((size, size))
    J[:nd, :nd] = H
    if na:
        J[:nd, nd : nd + na] = G.T
        J[nd : nd + na, :nd] = G
    if nb:
        J[:nd, nd + na :] = N.T
        J[nd + na :, :nd] = N
    return r, J


def _newton_kkt(agg, constraints, radius, active_e, active_b, x0, lam0):
    """Damped Newton on the equality-KKT system of the given active set."""
    n, d = x0.shape
    nd = n * d
    na, nb = len(active_e), len(active_b)
    x = x0.copy()
    lam = np.array([max(float(lam0[e]), 1e-8) for e in active_e])
    mu = np.full(nb, 1e-8)
    r, _ = _kkt_residual(agg, constraints, radius, active_e, active_b, x, lam, mu, False)
    rnorm = float(np.max(np.abs(r))) if r.size else 0.0
    for _ in range(60):
        if rnorm < 1e-11:
            return x, lam, mu, rnorm
        _, J = _kkt_residual(agg, constraints, radius, active_e, active_b, x, lam, mu, True)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        scale = 1.0
        for _ in range(30):
            xn = x + scale * step[:nd].reshape(n, d)
            ln = lam + scale * step[nd : nd + na]
            mn = mu + scale * step[nd + na :]
            rn, _ = _kkt_residual(
                agg, constraints, radius, active_e, active_b, xn, ln, mn, False
            )
            rna = float(np.max(np.abs(rn))) if rn.size else 0.0
            if rna < (1.0 - 1e-4 * scale) * rnorm or rna < 1e-11:
                x, lam, mu, r, rnorm = xn, ln, mn, rn, rna
                break
            scale *= 0.5
        else:
            return None
    if rnorm < 1e-11:
        return x, lam, mu, rnorm
    return None


def _snap_active_set(agg, constraints, feasible, x0, lam0, mu0, tol):
    """Refine a near-optimal interior point to an exact KKT solution.

    The initial working set is read off the supplied multiplier
    estimates; the usual active-set revisions then apply, dropping
    members whose multipliers come back negative and admitting the worst
    violated constraint of each kind.  Returns (x, lam_full, residual)
    on a clean solve, which for a convex problem certifies the global
    optimum, or None when the refinement fails.
    """
    n = x0.shape[0]
    radius = feasible.radius
    num_edges = len(constraints)
    vals0 = constraints.values(x0) if num_edges else np.zeros(0)
    active_e = sorted(
        e for e in range(num_edges) if lam0[e] > 1e-6 or vals0[e] > -1e-6
    )
    slack0 = radius * radius - np.einsum("id,id->i", x0, x0)
    active_b = sorted(
        i for i in range(n) if mu0[i] > 1e-6 or slack0[i] < 1e-6 * radius * radius
    )
    x_cur = x0
    warm = lam0.copy()
    for _ in range(30):
        sol = _newton_kkt(agg, constraints, radius, active_e, active_b, x_cur, warm)
        if sol is None:
            return None
        x_cur, lam_a, mu_b, residual = sol
        warm = np.zeros(num_edges)
        for e, v in zip(active_e, lam_a):
            warm[e] = v
        drop_e = {e for e, v in zip(active_e, lam_a) if v < -1e-9}
        drop_b = {i for i, v in zip(active_b, mu_b) if v < -1e-9}
        if drop_e or drop_b:
            active_e = sorted(set(active_e) - drop_e)
            active_b = sorted(set(active_b) - drop_b)
            continue
        changed = False
        if num_edges:
            vals = constraints.values(x_cur)
            vals[active_e] = -np.inf
            worst_e = int(np.argmax(vals))
            if vals[worst_e] > 0.5 * tol:
                active_e = sorted(active_e + [worst_e])
                changed = True
        norms = np.linalg.norm(x_cur, axis=1)
        norms[active_b] = -np.inf
        worst_b = int(np.argmax(norms))
        if norms[worst_b] > radius * (1.0 + 1e-12):
            active_b = sorted(active_b + [worst_b])
            changed = True
        if changed:
            continue
        return x_cur, np.maximum(warm, 0.0), residual
    return None


def _find_anchor(constraints: ConstraintSet, feasible: FeasibleSet, iters: int = 5000):
    """A strictly feasible configuration, by squared-hinge descent from 0."""
    n = constraints.graph.n
    d = feasible.dim
    x = np.zeros((n, d))
    if not len(constraints):
        return x
    radius = feasible.radius
    lo_idx, hi_idx = constraints.lo_idx, constraints.hi_idx
    step = 0.02 * radius
    for _ in range(iters):
        vals = constraints.values(x)
        if float(vals.max()) <= -1e-3:
            return x
        w = 2.0 * np.maximum(vals + 0.01, 0.0)
        glo, ghi = constraints.grads(x)
        grad = np.zeros_like(x)
        np.add.at(grad, lo_idx, w[:, None] * glo)
        np.add.at(grad, hi_idx, w[:, None] * ghi)
        gn = float(np.max(np.linalg.norm(grad, axis=1)))
        if gn == 0.0:
            return None
        x = _project_rows(x - (step / gn) * grad, 0.99 * radius)
    return x if float(constraints.values(x).max()) <= -1e-8 else None


def _barrier_value(agg, constraints, radius, x, tau):
    """Log-barrier objective at x; +inf outside the strict interior."""
    vals = constraints.values(x) if len(constraints) else np.zeros(0)
    slack_b = radius * radius - np.einsum("id,id->i", x, x)
    if (vals >= 0.0).any() or (slack_b <= 0.0).any():
        return np.inf
    logs = float(np.log(slack_b).sum())
    if len(constraints):
        logs += float(np.log(-vals).sum())
    return float(agg.value(x)) - logs / tau


def _barrier_terms(agg, constraints, radius, x, tau):
    """Flattened gradient and Hessian of the log-barrier objective."""
    n, d = x.shape
    nd = n * d
    inv_tau = 1.0 / tau
    grad = agg.grad(x)
    H = np.zeros((nd, nd))
    hb = agg.hess(x)
    for i in range(n):
        H[i * d : (i + 1) * d, i * d : (i + 1) * d] += hb[i]
    for e in range(len(constraints)):
        lo, hi, val, egrad, ehess = _edge_terms(constraints, e, x)
        w1 = inv_tau / (-val)
        w2 = inv_tau / (val * val)
        grad[lo] += w1 * egrad[:d]
        grad[hi] += w1 * egrad[d:]
        sl, sh = slice(lo * d, (lo + 1) * d), slice(hi * d, (hi + 1) * d)
        H[sl, sl] += w1 * ehess[:d, :d] + w2 * np.outer(egrad[:d], egrad[:d])
        H[sl, sh] += w1 * ehess[:d, d:] + w2 * np.outer(egrad[:d], egrad[d:])
        H[sh, sl] += w1 * ehess[d:, :d] + w2 * np.outer(egrad[d:], egrad[:d])
        H[sh, sh] += w1 * ehess[d:, d:] + w2 * np.outer(egrad[d:], egrad[d:])
    slack_b = radius * radius - np.einsum("id,id->i", x, x)
    for i in range(n):
        w1 = inv_tau / slack_b[i]
        w2 = inv_tau / (slack_b[i] * slack_b[i])
        grad[i] += (2.0 * w1) * x[i]
        sl = slice(i * d, (i + 1) * d)
        H[sl, sl] += (2.0 * w1) * np.eye(d) + (4.0 * w2) * np.outer(x[i], x[i])
    return grad.reshape(-1), H


def _barrier_center(agg, constraints, radius, x, tau, max_iters=80):
    """Damped Newton minimization of the barrier objective at fixed tau."""
    n, d = x.shape
    for _ in range(max_iters):
        grad, H = _barrier_terms(agg, constraints, radius, x, tau)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(H, -grad, rcond=None)
        decrement = float(grad @ -step)
        if not np.isfinite(decrement) or decrement <= 1e-14:
            break
        ref = _barrier_value(agg, constraints, radius, x, tau)
        slope = float(grad @ step)
        scale = 1.0
        for _ in range(60):
            xn = x + scale * step.reshape(n, d)
            if _barrier_value(agg, constraints, radius, xn, tau) <= ref + 0.25 * scale * slope:
                x = xn
                break
            scale *= 0.5
        else:
            break
    return x


def solve_hindsight(
    cost_rounds,
    constraints: ConstraintSet,
    feasible: FeasibleSet,
    tol: float = 1e-6,
    gap_target: float = 1e-8,
) -> HindsightBenchmark:
    """Best fixed decisions for a cost history.

    Minimizes the time-averaged cost over decision matrices whose rows
    lie in the feasible ball and that satisfy every edge constraint, by
    a log-barrier interior-point method: damped Newton centering along
    the barrier path from a strictly feasible start until the barrier
    duality gap falls below ``gap_target``, then an active-set Newton
    refinement of the KKT system read off the barrier multipliers.  A
    clean refinement certifies the global optimum of this convex program
    to machine precision; if it fails, the gap-certified barrier point
    is returned instead, so the objective is still within roughly
    ``gap_target`` of optimal.

    ``feasible=False`` on the result means no strictly feasible starting
    configuration was found; treat the benchmark as failed.
    """
    agg = aggregate_cost(cost_rounds)
    n = len(cost_rounds[0])
    d = feasible.dim
    radius = feasible.radius
    num_edges = len(constraints)

    x = np.zeros((n, d))
    if num_edges and float(constraints.values(x).max()) > -1e-6:
        x = _find_anchor(constraints, feasible)
        if x is None:
            origin = np.zeros((n, d))
            vals = constraints.values(origin)
            return HindsightBenchmark(
                decisions=origin,
                average_cost=float(agg.value(origin)),
                feasible=False,
                max_violation=float(vals.max()),
                stationarity=float(np.linalg.norm(agg.grad(origin))),
                complementarity=0.0,
                iterations=0,
            )

    total = num_edges + n
    tau = 1.0
    stages = 0
    while total / tau > gap_target:
        x = _barrier_center(agg, constraints, radius, x, tau)
        tau *= 10.0
        stages += 1
    x = _barrier_center(agg, constraints, radius, x, tau)
    stages += 1

    vals = constraints.values(x) if num_edges else np.zeros(0)
    slack_b = radius * radius - np.einsum("id,id->i", x, x)
    lam = -1.0 / (tau * vals) if num_edges else np.zeros(0)
    mu = 1.0 / (tau * slack_b)

    snapped = _snap_active_set(agg, constraints, feasible, x, lam, mu, tol)
    if snapped is not None:
        sx, slam, residual = snapped
        sx = _project_rows(sx, radius)
        svals = constraints.values(sx) if num_edges else np.zeros(0)
        return HindsightBenchmark(
            decisions=sx,
            average_cost=float(agg.value(sx)),
            feasible=True,
            max_violation=float(svals.max()) if num_edges else 0.0,
            stationarity=float(residual),
            complementarity=float(np.sum(np.abs(slam * svals))) if num_edges else 0.0,
            iterations=stages,
        )

    # refinement failed: report the gap-certified barrier point as is
    grad = agg.grad(x)
    if num_edges:
        glo, ghi = constraints.grads(x)
        np.add.at(grad, constraints.lo_idx, lam[:, None] * glo)
        np.add.at(grad, constraints.hi_idx, lam[:, None] * ghi)
    grad += (2.0 * mu)[:, None] * x
    return HindsightBenchmark(
        decisions=x,
        average_cost=float(agg.value(x)),
        feasible=True,
        max_violation=float(vals.max()) if num_edges else 0.0,
        stationarity=float(np.max(np.abs(grad))),
        complementarity=float(np.sum(np.abs(lam * vals))) if num_edges else 0.0,
        iterations=stages,
    )
