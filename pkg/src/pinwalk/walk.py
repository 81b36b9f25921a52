"""Walk engine: restart walks, step allocation, count combination, top-K.

A "step" is one pin->board->pin hop and increments exactly one pin's
visit count, so a counter's value total always equals the steps used.
Walk segments restart at the query pin with geometrically distributed
lengths (parameter alpha, capped); budgets and early stopping are
checked at segment boundaries only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .counter import VisitCounter
from .errors import (
    ConfigError,
    CounterFullError,
    InvalidDegreeError,
    InvalidNodeError,
    InvalidQueryPinError,
    WalkDeadEndError,
)
from .graph import BipartiteGraph
from .rng import RandomSource

DEGENERATE_SCALE = 1e-6  # scaling-factor clamp when ln(deg) >= max-degree


@dataclass(frozen=True)
class WalkConfig:
    """Knobs for one recommendation walk.

    total_steps is the overall budget N shared by all query pins;
    early_stop_pins / early_stop_visits are the (n_p, n_v) pair: stop
    once more than n_p pins have been visited at least n_v times each.
    """

    alpha: float = 0.5
    total_steps: int = 100_000
    early_stop_pins: int = 2_000
    early_stop_visits: int = 4
    bias_strength: float = 0.0
    max_walk_length: int = 100
    top_k: int = 1_000

    def validated(self) -> "WalkConfig":
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.max_walk_length < 1:
            raise ConfigError("max_walk_length must be >= 1")
        if self.early_stop_visits < 1:
            raise ConfigError("early_stop_visits must be >= 1")
        if self.early_stop_pins < 0:
            raise ConfigError("early_stop_pins must be >= 0")
        if not 0.0 <= self.bias_strength <= 1.0:
            raise ConfigError("bias_strength must be in [0,1]")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        return self

    def without_early_stop(self) -> "WalkConfig":
        """Early stopping can never fire: n_v exceeds any budget."""
        return replace(self, early_stop_visits=self.total_steps + 1)


@dataclass(frozen=True)
class WeightedQuery:
    """User context: weighted query pins plus bias-feature set."""

    entries: tuple[tuple[int, float], ...]
    user_features: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("query needs at least one pin")
        pins = [p for p, _ in self.entries]
        if len(set(pins)) != len(pins):
            raise ConfigError("query pins must be distinct")
        if any(w <= 0 for _, w in self.entries):
            raise ConfigError("query weights must be positive")

    @classmethod
    def single(cls, pin: int, weight: float = 1.0,
               user_features=()) -> "WeightedQuery":
        return cls(((pin, weight),), frozenset(user_features))

    @property
    def pins(self) -> list[int]:
        return [p for p, _ in self.entries]


@dataclass(frozen=True)
class WalkStats:
    steps_used: int = 0
    early_stopped: bool = False


@dataclass(frozen=True)
class RankedResult:
    """(pin, score) pairs sorted by score desc, then pin ID asc."""

    items: tuple[tuple[int, float], ...]
    stats: WalkStats = WalkStats()


def sample_walk_length(alpha: float, rng: RandomSource, cap: int) -> int:
    """Geometric segment length on {1,2,...}, truncated at cap."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    if cap < 1:
        raise ConfigError("cap must be >= 1")
    u = rng.next_unit()
    ratio = math.log(u) / math.log1p(-alpha)
    if ratio >= cap - 1:
        return cap
    return 1 + int(ratio)


def scaling_factor(degree: int, max_degree: int) -> float:
    """Sub-linear degree weighting: deg * (C - ln deg).

    Clamped to deg * 1e-6 on degenerate toy graphs where ln(deg)
    reaches C, keeping the factor positive.
    """
    if degree < 1:
        raise InvalidDegreeError(f"degree must be >= 1, got {degree}")
    log_deg = math.log(degree)
    if log_deg >= max_degree:
        return degree * DEGENERATE_SCALE
    return degree * (max_degree - log_deg)


def allocate_steps(query: WeightedQuery, graph: BipartiteGraph,
                   total_steps: int) -> dict[int, int]:
    """Split the step budget across query pins.

    Shares are proportional to normalized_weight * scaling_factor;
    floor division leftovers go one each to the largest shares (ties
    by pin ID), and every pin ends with at least one step.
    """
    entries = query.entries
    if total_steps < len(entries):
        raise ConfigError(
            f"budget {total_steps} cannot cover {len(entries)} query pins")
    degs = []
    for pin, _ in entries:
        if not 0 <= pin < graph.pin_count:
            raise InvalidQueryPinError(f"node {pin} is not a pin")
        d = graph.degree(pin)
        if d == 0:
            raise InvalidQueryPinError(f"query pin {pin} has degree 0")
        degs.append(d)

    c = graph.max_pin_degree
    w_sum = sum(w for _, w in entries)
    score = np.array([(w / w_sum) * scaling_factor(d, c)
                      for (_, w), d in zip(entries, degs)])
    shares = score / score.sum()
    alloc = np.floor(total_steps * shares).astype(np.int64)

    remainder = total_steps - int(alloc.sum())
    order = sorted(range(len(entries)),
                   key=lambda i: (-score[i], entries[i][0]))
    i = 0
    while remainder > 0:
        alloc[order[i % len(order)]] += 1
        remainder -= 1
        i += 1

    # floor can zero out tiny shares; steal from the largest allocations
    for i in np.flatnonzero(alloc == 0):
        donor = int(np.argmax(alloc))
        alloc[donor] -= 1
        alloc[i] = 1

    return {pin: int(n) for (pin, _), n in zip(entries, alloc)}


def _features_array(user_features) -> np.ndarray:
    return np.array(sorted(user_features), dtype=np.uint16)


def basic_random_walk(q: int, graph: BipartiteGraph, cfg: WalkConfig,
                      rng: RandomSource) -> VisitCounter:
    """Uniform restart walk from pin q; counter totals its steps."""
    cfg.validated()
    _check_query_pin(q, graph)
    counter = VisitCounter.for_steps(cfg.total_steps)
    state, tot, status, err_node, occupied = kernels.basic_walk(
        graph.offsets, graph.edge_vec, q, cfg.alpha,
        cfg.total_steps, cfg.max_walk_length,
        counter.keys, counter.vals, np.uint64(counter.shift),
        np.uint64(rng.state),
    )
    rng.state = int(state)
    counter.occupied = int(occupied)
    _raise_walk_status(int(status), int(err_node))
    return counter


def pixie_random_walk(q: int, graph: BipartiteGraph, user_features,
                      cfg: WalkConfig, rng: RandomSource,
                      budget: int | None = None
                      ) -> tuple[VisitCounter, WalkStats]:
    """Biased early-stopping walk from pin q with its own step budget."""
    cfg.validated()
    _check_query_pin(q, graph)
    n = cfg.total_steps if budget is None else budget
    if n < 1:
        raise ConfigError("walk budget must be >= 1")
    counter = VisitCounter.for_steps(n)
    features = _features_array(user_features)
    if cfg.bias_strength > 0.0 and len(features) > 0:
        state, tot, early, status, err_node, occupied = kernels.pixie_walk_biased(
            graph.offsets, graph.edge_vec,
            graph.ab_offsets, graph.ab_attrs, graph.ab_begins, graph.ab_ends,
            features, q, cfg.alpha, n,
            cfg.early_stop_pins, cfg.early_stop_visits, cfg.bias_strength,
            cfg.max_walk_length,
            counter.keys, counter.vals, np.uint64(counter.shift),
            np.uint64(rng.state),
        )
    else:
        # bias cannot apply: no coin is ever drawn, so the uniform
        # kernel produces the identical stream, ~5x faster
        state, tot, early, status, err_node, occupied = kernels.pixie_walk_uniform(
            graph.offsets, graph.edge_vec, q, cfg.alpha, n,
            cfg.early_stop_pins, cfg.early_stop_visits, cfg.max_walk_length,
            counter.keys, counter.vals, np.uint64(counter.shift),
            np.uint64(rng.state),
        )
    rng.state = int(state)
    counter.occupied = int(occupied)
    _raise_walk_status(int(status), int(err_node))
    return counter, WalkStats(steps_used=int(tot), early_stopped=bool(early))


def _check_query_pin(q: int, graph: BipartiteGraph) -> None:
    if not 0 <= q < graph.node_count:
        raise InvalidNodeError(f"node {q} not in graph")
    if not graph.is_pin(q):
        raise InvalidQueryPinError(f"node {q} is a board, walks start at pins")
    if graph.degree(q) == 0:
        raise WalkDeadEndError(q)


def _raise_walk_status(status: int, err_node: int) -> None:
    if status == 1:
        raise WalkDeadEndError(err_node)
    if status == 2:
        raise CounterFullError("walk counter exceeded load budget")


def _combine_arrays(key_arrays, val_arrays) -> tuple[np.ndarray, np.ndarray]:
    """Combined score per pin: (sum of sqrt counts)^2.

    A pin seen by exactly one walk keeps its raw count (the boost is
    the identity there, and staying in integers keeps it exact).
    """
    all_keys = np.concatenate(key_arrays)
    if len(all_keys) == 0:
        return all_keys, np.empty(0, dtype=np.float64)
    all_vals = np.concatenate(val_arrays)
    uniq, inverse = np.unique(all_keys, return_inverse=True)
    sqrt_sum = np.zeros(len(uniq))
    np.add.at(sqrt_sum, inverse, np.sqrt(all_vals))
    raw_sum = np.zeros(len(uniq))
    np.add.at(raw_sum, inverse, all_vals)
    sources = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(sources, inverse, 1)
    scores = np.where(sources == 1, raw_sum, sqrt_sum ** 2)
    return uniq, scores


def combine_counts(counters: list[VisitCounter]) -> dict[int, float]:
    """Multi-hit boost across per-query-pin counters."""
    if not counters:
        raise ConfigError("combine_counts needs at least one counter")
    pairs = [c.items() for c in counters]
    ids, scores = _combine_arrays([k for k, _ in pairs], [v for _, v in pairs])
    return {int(k): float(s) for k, s in zip(ids, scores)}


def top_k(counts, k: int, stats: WalkStats = WalkStats()) -> RankedResult:
    """K best-scored pins, ties broken by ascending pin ID."""
    if isinstance(counts, dict):
        ids = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
        scores = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
    else:
        ids, scores = counts
    if len(ids) == 0:
        return RankedResult((), stats)
    order = np.lexsort((ids, -scores))[:k]
    items = tuple((int(ids[i]), float(scores[i])) for i in order)
    return RankedResult(items, stats)


def pixie_random_walk_multiple(query: WeightedQuery, graph: BipartiteGraph,
                               cfg: WalkConfig, rng: RandomSource
                               ) -> RankedResult:
    """Full pipeline: allocate, walk per pin, boost, rank.

    Query pins never appear in the output ranking.
    """
    cfg.validated()
    alloc = allocate_steps(query, graph, cfg.total_steps)
    key_arrays, val_arrays = [], []
    steps_used = 0
    early_any = False
    for pin, _ in query.entries:
        counter, stats = pixie_random_walk(
            pin, graph, query.user_features, cfg, rng, budget=alloc[pin])
        steps_used += stats.steps_used
        early_any = early_any or stats.early_stopped
        k, v = counter.items()
        key_arrays.append(k)
        val_arrays.append(v)

    if len(key_arrays) == 1:
        # lone counter: the boost is the identity, keep raw counts
        ids, scores = key_arrays[0], val_arrays[0].astype(np.float64)
    else:
        ids, scores = _combine_arrays(key_arrays, val_arrays)
    if len(ids):
        keep = ~np.isin(ids, np.array(query.pins, dtype=np.int64))
        ids, scores = ids[keep], scores[keep]
    return top_k((ids, scores), cfg.top_k,
                 WalkStats(steps_used=steps_used, early_stopped=early_any))
