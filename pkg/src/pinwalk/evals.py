"""Desk-scale experiment harness.

Reproduces the serving-engine studies on synthetic planted-community
graphs: link-prediction F1 across pruning strengths, top-K stability
across step budgets, early-stopping overlap/cost trade-off, bias
efficacy across populations, and runtime scaling. Every experiment is
a pure function of its seed block; reports go out as CSV rows plus a
JSON summary.
"""

from __future__ import annotations

import csv
import gc
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .compiler import PruneConfig, compile_graph
from .errors import PinwalkError
from .graph import BipartiteGraph
from .rng import RandomSource, derive_seed
from .synth import SynthConfig, SynthData, generate
from .walk import (
    WalkConfig,
    WeightedQuery,
    basic_random_walk,
    pixie_random_walk_multiple,
    top_k,
)

# desk-scale early-stopping operating point (counterpart of the
# production n_p=2000, n_v=4 on a ~10k-pin graph): ~0.80 top-1000
# overlap at ~3.4x step reduction under the default config
DESK_EARLY_STOP_PINS = 500
DESK_EARLY_STOP_VISITS = 8


@dataclass
class EvalReport:
    experiment: str
    parameters: dict
    rows: list[dict] = field(default_factory=list)

    def write_csv(self, path) -> None:
        if not self.rows:
            raise PinwalkError("no rows to write")
        fields = list(self.rows[0])
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows)

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"experiment": self.experiment,
                       "parameters": self.parameters,
                       "rows": self.rows}, f, indent=2)
            f.write("\n")


def eligible_query_pins(graph: BipartiteGraph, count: int,
                         rng: RandomSource) -> list[int]:
    """Random degree>=1 pins, distinct."""
    pins: list[int] = []
    seen: set[int] = set()
    while len(pins) < count:
        p = rng.next_below(graph.pin_count)
        if p in seen or graph.degree(p) == 0:
            continue
        seen.add(p)
        pins.append(p)
    return pins


# -- link prediction vs pruning strength --------------------------------

def link_prediction_eval(synth: SynthData, prune_cfg: PruneConfig,
                         walk_cfg: WalkConfig, n_boards: int = 100,
                         query_len: int = 20, holdout_len: int = 5,
                         top_r: int = 100, seed: int = 0) -> dict:
    """Hold out each sampled board's latest pins, query with the ones
    before them, and score the top-R response against the holdout."""
    rng = RandomSource(derive_seed(seed, 0xB0A2D))
    eligible = [b for b, members in enumerate(synth.board_members)
                if len(members) >= query_len + holdout_len]
    if not eligible:
        raise PinwalkError("no board has enough pins for the holdout")
    pool = list(eligible)
    n_boards = min(n_boards, len(pool))
    for i in range(n_boards):
        j = i + rng.next_below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    sampled = pool[:n_boards]

    holdout: set[tuple[int, int]] = set()
    per_board_x: dict[int, list[int]] = {}
    for b in sampled:
        latest = synth.board_members[b][-holdout_len:]
        per_board_x[b] = latest
        holdout.update((p, b) for p in latest)

    compiled = compile_graph(synth.to_parsed_edges(holdout),
                             synth.topics_dict(), prune_cfg)
    graph = compiled.graph
    cfg = replace(walk_cfg, top_k=top_r)

    precisions, recalls, f1s = [], [], []
    for qi, b in enumerate(sampled):
        members = synth.board_members[b]
        qpins = [p for p in members[:-holdout_len][-query_len:]
                 if graph.degree(p) > 0]
        if not qpins:
            continue
        query = WeightedQuery(tuple((p, 1.0) for p in qpins))
        result = pixie_random_walk_multiple(
            query, graph, cfg, RandomSource(derive_seed(seed, 1, qi)))
        r_set = {p for p, _ in result.items}
        x_set = set(per_board_x[b])
        hits = len(r_set & x_set)
        p = hits / len(r_set) if r_set else 0.0
        r = hits / len(x_set)
        f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)

    if not f1s:
        raise PinwalkError("no eligible board produced a usable query")
    return {
        "delta": prune_cfg.delta,
        "entropy_quantile": prune_cfg.entropy_quantile,
        "boards": len(f1s),
        "edges_after": compiled.report.edges_after,
        "precision": float(np.mean(precisions)),
        "recall": float(np.mean(recalls)),
        "f1": float(np.mean(f1s)),
    }


def link_prediction_sweep(synth: SynthData, deltas, walk_cfg: WalkConfig,
                          entropy_quantile: float = 0.10,
                          n_boards: int = 100, seed: int = 0) -> EvalReport:
    rows = []
    for delta in deltas:
        cfg = PruneConfig(entropy_quantile=entropy_quantile, delta=delta)
        rows.append(link_prediction_eval(synth, cfg, walk_cfg,
                                         n_boards=n_boards, seed=seed))
    return EvalReport(
        "linkpred",
        {"deltas": list(deltas), "entropy_quantile": entropy_quantile,
         "n_boards": n_boards, "seed": seed,
         "synth": synth.cfg.__dict__ | {"attrs": None}},
        rows,
    )


# -- stability of the top set vs step budget ----------------------------

def stability_counts(graph: BipartiteGraph, query: WeightedQuery,
                     walk_cfg: WalkConfig, repeats: int = 100,
                     k_values=tuple(range(50, 101, 10)),
                     seed: int = 0) -> dict[int, int]:
    """Run the query `repeats` times with distinct seeds; for each K,
    count pins present in at least K of the top-K lists."""
    appearance: dict[int, int] = {}
    for r in range(repeats):
        result = pixie_random_walk_multiple(
            query, graph, walk_cfg, RandomSource(derive_seed(seed, r)))
        for p, _ in result.items:
            appearance[p] = appearance.get(p, 0) + 1
    counts = np.array(list(appearance.values()), dtype=np.int64)
    return {k: int((counts >= k).sum()) for k in k_values}


def stability_experiment(graph: BipartiteGraph, n_grid, n_queries: int = 20,
                         repeats: int = 100, walk_cfg: WalkConfig | None = None,
                         k_values=tuple(range(50, 101, 10)),
                         seed: int = 0) -> EvalReport:
    base = (walk_cfg or WalkConfig()).without_early_stop()
    pins = eligible_query_pins(graph, n_queries,
                                RandomSource(derive_seed(seed, 0x57AB)))
    rows = []
    for n in n_grid:
        cfg = replace(base, total_steps=n,
                      early_stop_visits=n + 1)
        per_k = {k: [] for k in k_values}
        for qi, pin in enumerate(pins):
            counts = stability_counts(graph, WeightedQuery.single(pin), cfg,
                                      repeats, k_values,
                                      seed=derive_seed(seed, 2, qi, n))
            for k, v in counts.items():
                per_k[k].append(v)
        for k in k_values:
            rows.append({"steps": n, "k": k,
                         "mean_pins": float(np.mean(per_k[k])),
                         "repeats": repeats})
    return EvalReport(
        "stability",
        {"n_grid": list(n_grid), "queries": n_queries, "repeats": repeats,
         "k_values": list(k_values), "seed": seed},
        rows,
    )


# -- early stopping ------------------------------------------------------

def early_stop_eval(graph: BipartiteGraph, query_pins, walk_cfg: WalkConfig,
                    grid, seed: int = 0) -> EvalReport:
    """Overlap with a no-early-stop gold standard, per (n_p, n_v) point.

    The gold and early runs share a per-query seed, so the early walk
    is a prefix of the gold walk and differences measure truncation.
    """
    gold_cfg = walk_cfg.without_early_stop()
    golds = []
    for qi, pin in enumerate(query_pins):
        result = pixie_random_walk_multiple(
            WeightedQuery.single(pin), graph, gold_cfg,
            RandomSource(derive_seed(seed, 3, qi)))
        golds.append(({p for p, _ in result.items}, result.stats.steps_used))

    rows = []
    for n_p, n_v in grid:
        cfg = replace(walk_cfg, early_stop_pins=n_p, early_stop_visits=n_v)
        overlaps, steps, reductions = [], [], []
        for qi, pin in enumerate(query_pins):
            result = pixie_random_walk_multiple(
                WeightedQuery.single(pin), graph, cfg,
                RandomSource(derive_seed(seed, 3, qi)))
            got = {p for p, _ in result.items}
            gold_set, gold_steps = golds[qi]
            denom = min(cfg.top_k, len(gold_set))
            overlaps.append(len(got & gold_set) / denom if denom else 1.0)
            steps.append(result.stats.steps_used)
            reductions.append(gold_steps / max(1, result.stats.steps_used))
        rows.append({
            "n_p": n_p, "n_v": n_v,
            "mean_overlap": float(np.mean(overlaps)),
            "mean_steps": float(np.mean(steps)),
            "mean_step_reduction": float(np.mean(reductions)),
        })
    return EvalReport(
        "earlystop",
        {"queries": len(list(query_pins)), "total_steps": walk_cfg.total_steps,
         "seed": seed},
        rows,
    )


# -- bias efficacy -------------------------------------------------------

def bias_fractions(graph: BipartiteGraph, query_pins, target_attr: int,
                   beta: float, walk_cfg: WalkConfig, seed: int = 0,
                   use_basic: bool = False) -> np.ndarray:
    """Per-query fraction of top-K results carrying the target attribute."""
    fractions = []
    for qi, pin in enumerate(query_pins):
        rng = RandomSource(derive_seed(seed, 4, qi))
        if use_basic:
            counter = basic_random_walk(pin, graph,
                                        walk_cfg.without_early_stop(), rng)
            ids, vals = counter.items()
            keep = ids != pin
            result = top_k((ids[keep], vals[keep].astype(np.float64)),
                           walk_cfg.top_k)
        else:
            cfg = replace(walk_cfg, bias_strength=beta)
            result = pixie_random_walk_multiple(
                WeightedQuery.single(pin, user_features=(target_attr,)),
                graph, cfg, rng)
        items = result.items
        if not items:
            fractions.append(0.0)
            continue
        hit = sum(1 for p, _ in items if int(graph.node_attr[p]) == target_attr)
        fractions.append(hit / len(items))
    return np.array(fractions)


def bias_experiment(synth: SynthData, betas, n_queries: int = 50,
                    walk_cfg: WalkConfig | None = None,
                    seed: int = 0) -> EvalReport:
    """Queries start in community 0 and target community 1's attribute."""
    cfg = walk_cfg or WalkConfig(total_steps=20_000, top_k=100)
    graph = synth.graph
    rng = RandomSource(derive_seed(seed, 0xB1A5))
    pins = []
    while len(pins) < n_queries:
        p = rng.next_below(synth.cfg.pins_per_community)  # community 0
        if graph.degree(p) > 0 and p not in pins:
            pins.append(p)
    target = synth.cfg.attr_of(1)

    rows = [{"algorithm": "basic", "beta": 0.0,
             "mean_target_fraction": float(np.mean(bias_fractions(
                 graph, pins, target, 0.0, cfg, seed, use_basic=True)))}]
    for beta in betas:
        fr = bias_fractions(graph, pins, target, beta, cfg, seed)
        rows.append({"algorithm": "pixie", "beta": beta,
                     "mean_target_fraction": float(np.mean(fr))})
    return EvalReport(
        "bias",
        {"betas": list(betas), "queries": n_queries,
         "target_attr": target, "seed": seed},
        rows,
    )


# -- runtime scaling -----------------------------------------------------

def runtime_bench(graph: BipartiteGraph, n_grid, query_sizes=(1, 2, 5, 10),
                  queries_per_point: int = 200, passes: int = 5,
                  walk_cfg: WalkConfig | None = None,
                  seed: int = 0) -> EvalReport:
    """Mean wall time per query vs step budget and vs query size.

    Grid points are interleaved across several passes so slow system
    phases average out over the whole grid instead of biasing one
    point, and the collector is paused while the clock runs.
    """
    base = (walk_cfg or WalkConfig()).without_early_stop()
    rng = RandomSource(derive_seed(seed, 0xBE9C))
    pins = eligible_query_pins(graph, max(queries_per_point,
                                           max(query_sizes) * 4), rng)

    # warm the JIT before timing
    pixie_random_walk_multiple(WeightedQuery.single(pins[0]), graph,
                               replace(base, total_steps=1000,
                                       early_stop_visits=1001),
                               RandomSource(1))

    per_pass = max(1, queries_per_point // passes)
    elapsed_by_n = {n: 0.0 for n in n_grid}
    queries_by_n = {n: 0 for n in n_grid}
    gc.collect()
    gc.disable()
    try:
        for p in range(passes):
            for n in n_grid:
                cfg = replace(base, total_steps=n, early_stop_visits=n + 1)
                t0 = time.perf_counter()
                for qi in range(per_pass):
                    pixie_random_walk_multiple(
                        WeightedQuery.single(pins[(p * per_pass + qi) % len(pins)]),
                        graph, cfg,
                        RandomSource(derive_seed(seed, 5, n, p, qi)))
                elapsed_by_n[n] += time.perf_counter() - t0
                queries_by_n[n] += per_pass
            gc.enable()
            gc.collect()
            gc.disable()
    finally:
        gc.enable()

    rows = []
    for n in n_grid:
        rows.append({"sweep": "steps", "value": n,
                     "mean_micros": 1e6 * elapsed_by_n[n] / queries_by_n[n],
                     "queries": queries_by_n[n]})

    fixed_n = max(n_grid)
    for q in query_sizes:
        cfg = replace(base, total_steps=fixed_n, early_stop_visits=fixed_n + 1)
        t0 = time.perf_counter()
        for qi in range(queries_per_point):
            qrng = RandomSource(derive_seed(seed, 6, q, qi))
            start = qrng.next_below(max(1, len(pins) - q))
            query = WeightedQuery(tuple((p, 1.0) for p in pins[start:start + q]))
            pixie_random_walk_multiple(query, graph, cfg,
                                       RandomSource(derive_seed(seed, 7, q, qi)))
        elapsed = time.perf_counter() - t0
        rows.append({"sweep": "query_size", "value": q,
                     "mean_micros": 1e6 * elapsed / queries_per_point,
                     "queries": queries_per_point})

    xs = np.array([r["value"] for r in rows if r["sweep"] == "steps"], dtype=float)
    ys = np.array([r["mean_micros"] for r in rows if r["sweep"] == "steps"])
    slope, intercept, r2 = linear_fit(xs, ys)
    return EvalReport(
        "runtime",
        {"n_grid": list(n_grid), "query_sizes": list(query_sizes),
         "queries_per_point": queries_per_point, "seed": seed,
         "fit_slope_micros_per_step": slope,
         "fit_intercept_micros": intercept, "fit_r2": r2},
        rows,
    )


def linear_fit(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Least squares y = a*x + b; returns (a, b, R^2)."""
    a, b = np.polyfit(xs, ys, 1)
    pred = a * xs + b
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


# -- sanity anchor -------------------------------------------------------

def community_recovery(synth: SynthData, n_queries: int = 100,
                       top: int = 20, walk_cfg: WalkConfig | None = None,
                       seed: int = 0) -> float:
    """Mean fraction of top results inside the query pin's community."""
    cfg = replace(walk_cfg or WalkConfig(total_steps=10_000), top_k=top)
    cfg = cfg.without_early_stop()
    graph = synth.graph
    pins = eligible_query_pins(graph, n_queries,
                                RandomSource(derive_seed(seed, 0xC0)))
    fractions = []
    for qi, pin in enumerate(pins):
        result = pixie_random_walk_multiple(
            WeightedQuery.single(pin), graph, cfg,
            RandomSource(derive_seed(seed, 8, qi)))
        if not result.items:
            continue
        c = synth.community_of_pin(pin)
        hit = sum(1 for p, _ in result.items
                  if synth.community_of_pin(p) == c)
        fractions.append(hit / len(result.items))
    return float(np.mean(fractions))


def default_synth(seed: int = 0) -> SynthData:
    """The desk-scale graph most experiments run on."""
    return generate(SynthConfig(seed=seed))
