"""Unreliable directed links with last-received caching.

Each directed pair (i, j) is a channel delivering j's current decision to
agent i.  A transmission fails independently each round with the pair's
own probability; on failure the receiver keeps the most recent value it
ever got.  The first round always delivers, so every cache starts from
the true neighbor decisions.

Every pair draws from its own RNG substream, exactly one uniform per
round from round 2 on, regardless of its probability.  That makes traces
reproducible under refactoring and lets different failure levels share
the same underlying draws.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .graph import NetworkGraph, directed_pairs

__all__ = [
    "NeighborCache",
    "LinkFailureModel",
    "channel_init",
    "exchange_round",
    "uniform_failure_probs",
    "format_flag_trace",
]


class NeighborCache:
    """Last decision each agent received from each neighbor.

    values[k] is the cached decision for directed pair k (receiver i,
    sender j); last_round[k] is the round it was received (0 = never).
    """

    def __init__(self, num_pairs: int, dim: int) -> None:
        self.values = np.zeros((num_pairs, dim))
        self.last_round = np.zeros(num_pairs, dtype=int)


class LinkFailureModel:
    """Bernoulli failure channel over a graph's directed pairs."""

    def __init__(self, graph: NetworkGraph, probs: np.ndarray, seed) -> None:
        self.graph = graph
        self.pairs = directed_pairs(graph)
        self.pair_index = {p: k for k, p in enumerate(self.pairs)}
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (len(self.pairs),):
            raise ValueError(
                f"need one probability per directed pair "
                f"({len(self.pairs)}), got shape {probs.shape}"
            )
        bad = [
            (p, float(v))
            for p, v in zip(self.pairs, probs)
            if not (0.0 <= v < 1.0)
        ]
        if bad:
            raise ValueError(f"failure probabilities must lie in [0, 1): {bad}")
        self.probs = probs
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._gens = [np.random.default_rng(s) for s in seq.spawn(len(self.pairs))]
        self.rounds_done = 0

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    def sender_of(self, k: int) -> int:
        return self.pairs[k][1]

    def receiver_of(self, k: int) -> int:
        return self.pairs[k][0]


def channel_init(graph: NetworkGraph, probs, seed) -> LinkFailureModel:
    """Build a failure model from per-pair probabilities.

    ``probs`` is either an array aligned with ``directed_pairs(graph)`` or
    a mapping from directed pair (receiver, sender) to probability; the
    mapping must cover every pair exactly.
    """
    pairs = directed_pairs(graph)
    if isinstance(probs, Mapping):
        missing = [p for p in pairs if p not in probs]
        if missing:
            raise ValueError(f"missing failure probability for pairs {missing}")
        extra = [p for p in probs if p not in set(pairs)]
        if extra:
            raise ValueError(f"probabilities given for unknown pairs {extra}")
        arr = np.array([float(probs[p]) for p in pairs])
    else:
        arr = np.asarray(probs, dtype=float)
    return LinkFailureModel(graph, arr, seed)


def exchange_round(
    model: LinkFailureModel, cache: NeighborCache, decisions: np.ndarray
) -> np.ndarray:
    """Transmit every agent's decision over every directed pair once.

    The first call delivers everything (startup round); afterwards pair k
    succeeds when its fresh uniform is at least probs[k].  Delivered
    values overwrite the cache; failed pairs keep their stale entry.

    Returns the boolean delivery flags, one per directed pair.
    """
    t = model.rounds_done + 1
    if t == 1:
        flags = np.ones(model.num_pairs, dtype=bool)
    else:
        flags = np.empty(model.num_pairs, dtype=bool)
        probs = model.probs
        gens = model._gens
        for k in range(model.num_pairs):
            flags[k] = gens[k].random() >= probs[k]
    for k, (recv, send) in enumerate(model.pairs):
        if flags[k]:
            cache.values[k] = decisions[send]
            cache.last_round[k] = t
    model.rounds_done = t
    return flags


def uniform_failure_probs(
    graph: NetworkGraph, low: float, high: float, seed
) -> np.ndarray:
    """Per-pair probabilities drawn uniformly from [low, high].

    Draws one base uniform per directed pair and maps it affinely into the
    range, so two calls with the same seed and different ranges produce
    comonotone probabilities (useful for comparing failure levels on
    shared randomness).
    """
    if not (0.0 <= low <= high < 1.0):
        raise ValueError(f"need 0 <= low <= high < 1, got [{low}, {high}]")
    rng = np.random.default_rng(seed)
    base = rng.random(len(directed_pairs(graph)))
    return low + (high - low) * base


def format_flag_trace(flags_by_round) -> str:
    """Compact text trace of delivery flags: ``<t>: <0/1 per pair>``."""
    lines = []
    for t, flags in enumerate(flags_by_round, start=1):
        bits = "".join("1" if f else "0" for f in flags)
        lines.append(f"{t}: {bits}")
    return "\n".join(lines) + "\n"
