"""Acceptance suite: one test per release criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS/FAIL
line per criterion. Paper-scale figures are not reproducible on a
desk, so soft criteria are scaled directional reproductions with
conservative floors; every tolerance is fixed here, not tuned at
runtime.
"""

import json
import os
import socket
import subprocess
import sys
import time

import pytest
from scipy import stats

from oracles import (
    empirical_pin_frequencies,
    expected_visit_frequencies,
    total_variation,
)
from pinwalk.compiler import PruneConfig, compile_files
from pinwalk.counter import VisitCounter
from pinwalk.evals import (
    DESK_EARLY_STOP_PINS,
    DESK_EARLY_STOP_VISITS,
    eligible_query_pins,
    bias_fractions,
    early_stop_eval,
    link_prediction_sweep,
    runtime_bench,
    stability_experiment,
)
from pinwalk.rng import RandomSource, derive_seed
from pinwalk.synth import SynthConfig, bilingual_config, generate
from pinwalk.walk import (
    WalkConfig,
    WeightedQuery,
    allocate_steps,
    basic_random_walk,
    combine_counts,
    pixie_random_walk_multiple,
    scaling_factor,
)


def check(num: int, desc: str, ok: bool, details: str) -> None:
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {desc}: {details}")
    assert ok, f"criterion {num} ({desc}): {details}"


@pytest.fixture(scope="module")
def desk_synth():
    return generate(SynthConfig(seed=0))  # 10k pins, 1k boards


@pytest.fixture(scope="module")
def bilingual_synth():
    return generate(bilingual_config())


@pytest.fixture(scope="module")
def noisy_synth():
    return generate(SynthConfig(communities=10, pins_per_community=300,
                                boards_per_community=40, edges_per_board=40,
                                cross_community_noise=0.3, topic_jitter=0.02,
                                seed=11))


def test_criterion_01_counter_oracle_equivalence():
    start = time.perf_counter()
    rng = RandomSource(20_24)
    counter = VisitCounter.for_steps(100_000)
    reference: dict[int, int] = {}
    mismatches = 0
    for _ in range(100_000):
        key = rng.next_below(60_000)
        if rng.next_below(4) == 0:
            if counter.lookup(key) != reference.get(key, 0):
                mismatches += 1
        else:
            reference[key] = reference.get(key, 0) + 1
            if counter.increment(key) != reference[key]:
                mismatches += 1
    if counter.as_dict() != reference:
        mismatches += 1
    elapsed = time.perf_counter() - start
    check(1, "counter matches reference map over 1e5 ops",
          mismatches == 0 and elapsed < 5.0,
          f"mismatches={mismatches}, runtime={elapsed:.2f}s (limit 5s)")


def test_criterion_02_walk_distribution_oracle(five_pin_graph):
    start = time.perf_counter()
    cfg = WalkConfig(alpha=0.5, total_steps=1_000_000,
                     max_walk_length=100).without_early_stop()
    counter = basic_random_walk(0, five_pin_graph, cfg, RandomSource(7))
    emp = empirical_pin_frequencies(counter, 5)
    exact = expected_visit_frequencies(five_pin_graph, 0, cfg.alpha,
                                       cfg.max_walk_length)
    tv = total_variation(emp, exact)
    elapsed = time.perf_counter() - start
    check(2, "1e6-step walk within TV 0.01 of transition-matrix oracle",
          tv < 0.01 and elapsed < 30.0,
          f"TV={tv:.5f}, runtime={elapsed:.2f}s (limit 30s)")


def test_criterion_03_algebraic_identities(desk_synth):
    graph = desk_synth.graph
    problems = []

    single = VisitCounter.for_steps(64)
    for k, n in [(3, 7), (11, 2), (200, 1), (4097, 13)]:
        for _ in range(n):
            single.increment(k)
    if combine_counts([single]) != {3: 7.0, 11: 2.0, 200: 1.0, 4097: 13.0}:
        problems.append("single-counter identity not exact")

    a, b = VisitCounter.for_steps(16), VisitCounter.for_steps(16)
    for _ in range(4):
        a.increment(5)
    for _ in range(9):
        b.increment(5)
    if combine_counts([a, b])[5] != 25.0:
        problems.append("sqrt-sum-square of (4,9) != 25")

    rng = RandomSource(314)
    for _ in range(1000):
        size = 1 + rng.next_below(10)
        pins = eligible_query_pins(graph, size, rng)
        entries = tuple((p, 0.05 + rng.next_unit() * 10) for p in pins)
        n = size + rng.next_below(200_000)
        alloc = allocate_steps(WeightedQuery(entries), graph, n)
        if sum(alloc.values()) != n:
            problems.append(f"allocation sums to {sum(alloc.values())} != {n}")
            break

    for c in (1, 7, 100, 12345):
        if scaling_factor(1, c) != float(c):
            problems.append(f"scaling_factor(1,{c}) != {c}")

    check(3, "combine/allocate/scaling identities exact",
          not problems, "; ".join(problems) or
          "single-counter exact, (4,9)->25, 1000 allocations sum to N, s(1,C)=C")


def test_criterion_04_determinism(desk_synth, tmp_path):
    query = WeightedQuery(((12, 0.6), (5_001, 0.4)), frozenset({2}))
    cfg = WalkConfig(total_steps=20_000, top_k=500, bias_strength=0.5)
    results = [pixie_random_walk_multiple(query, desk_synth.graph, cfg,
                                          RandomSource(99))
               for _ in range(10)]
    walks_identical = all(r == results[0] for r in results[1:])

    data = generate(SynthConfig(communities=3, pins_per_community=50,
                                boards_per_community=10, edges_per_board=15,
                                cross_community_noise=0.1, seed=8))
    edges, topics = tmp_path / "e.tsv", tmp_path / "t.tsv"
    data.write_raw_files(edges, topics)
    blobs = []
    for i in range(10):
        out = tmp_path / f"g{i}.pixg"
        compile_files(edges, topics,
                      PruneConfig(entropy_quantile=0.1, delta=0.7), out)
        blobs.append(out.read_bytes())
    compiles_identical = all(b == blobs[0] for b in blobs[1:])

    check(4, "fixed seed gives bit-identical results and binaries x10",
          walks_identical and compiles_identical,
          f"walks_identical={walks_identical}, compiles_identical={compiles_identical}")


def test_criterion_05_early_stopping(desk_synth):
    pins = eligible_query_pins(desk_synth.graph, 50, RandomSource(123))
    cfg = WalkConfig(alpha=0.5, total_steps=100_000, top_k=1000,
                     max_walk_length=100)
    report = early_stop_eval(
        desk_synth.graph, pins, cfg,
        [(DESK_EARLY_STOP_PINS, DESK_EARLY_STOP_VISITS)], seed=9)
    row = report.rows[0]
    ok = row["mean_overlap"] >= 0.70 and row["mean_step_reduction"] >= 2.0
    check(5, "early stop: >=70% top-1000 overlap at >=2x step reduction",
          ok, f"operating point (n_p={DESK_EARLY_STOP_PINS}, "
              f"n_v={DESK_EARLY_STOP_VISITS}): overlap={row['mean_overlap']:.3f}, "
              f"reduction={row['mean_step_reduction']:.2f}x over 50 queries")


def test_criterion_06_bias_efficacy(bilingual_synth):
    graph = bilingual_synth.graph
    rng = RandomSource(derive_seed(5, 0xB1A5))
    pins = []
    while len(pins) < 50:
        p = rng.next_below(bilingual_synth.cfg.pins_per_community)
        if graph.degree(p) > 0 and p not in pins:
            pins.append(p)
    target = bilingual_synth.cfg.attr_of(1)
    cfg = WalkConfig(alpha=0.5, total_steps=20_000, top_k=100).without_early_stop()
    off = bias_fractions(graph, pins, target, 0.0, cfg, seed=5)
    on = bias_fractions(graph, pins, target, 0.9, cfg, seed=5)
    p_value = stats.wilcoxon(on, off, alternative="greater").pvalue
    ratio = on.mean() / max(off.mean(), 1e-12)
    ok = p_value < 0.01 and ratio >= 1.5
    check(6, "beta=0.9 beats beta=0 on target-attribute fraction",
          ok, f"fractions {off.mean():.3f} -> {on.mean():.3f} "
              f"(ratio {ratio:.2f}x, floor 1.5x), paired p={p_value:.2e}")


def test_criterion_07_pruning_curve(noisy_synth):
    deltas = [round(0.1 * i, 1) for i in range(1, 11)]
    cfg = WalkConfig(alpha=0.5, total_steps=30_000,
                     top_k=100).without_early_stop()
    report = link_prediction_sweep(noisy_synth, deltas, cfg,
                                   n_boards=100, seed=17)
    edges = [r["edges_after"] for r in report.rows]
    monotone = all(a <= b for a, b in zip(edges, edges[1:]))
    f1 = {r["delta"]: r["f1"] for r in report.rows}
    best = max((d for d in deltas if d < 1.0), key=lambda d: f1[d])
    ratio = f1[best] / f1[1.0]
    ok = monotone and ratio >= 1.10
    check(7, "pruning: monotone edges, best delta<1 lifts F1 >= 10%",
          ok, f"edges monotone={monotone}, best delta={best}, "
              f"F1 {f1[1.0]:.4f} -> {f1[best]:.4f} (+{(ratio - 1) * 100:.0f}%)")


def test_criterion_08_runtime_linearity(desk_synth):
    start = time.perf_counter()
    n_grid = [10_000 * i for i in range(1, 11)]
    report = runtime_bench(desk_synth.graph, n_grid, query_sizes=(1,),
                           queries_per_point=200,
                           walk_cfg=WalkConfig(top_k=1000), seed=3)
    elapsed = time.perf_counter() - start
    r2 = report.parameters["fit_r2"]
    times = {r["value"]: r["mean_micros"] for r in report.rows
             if r["sweep"] == "steps"}
    doubling = times[100_000] / times[50_000]
    ok = r2 >= 0.98 and elapsed < 300
    check(8, "query time linear in steps (R^2 >= 0.98, 10x200 queries)",
          ok, f"R^2={r2:.4f}, 2x-steps time ratio={doubling:.2f}, "
              f"total runtime={elapsed:.1f}s (limit 300s)")


def test_criterion_09_stability_direction(desk_synth):
    report = stability_experiment(desk_synth.graph,
                                  [10_000, 50_000, 100_000],
                                  n_queries=20, repeats=100,
                                  walk_cfg=WalkConfig(top_k=1000),
                                  k_values=(100,), seed=6)
    counts = {r["steps"]: r["mean_pins"] for r in report.rows}
    series = [counts[10_000], counts[50_000], counts[100_000]]
    ok = series[0] <= series[1] <= series[2]
    check(9, "pins stable across all 100 runs grow with step budget",
          ok, f"mean counts at K=100: {series[0]:.1f} <= {series[1]:.1f} "
              f"<= {series[2]:.1f}")


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_criterion_10_end_to_end_service(tmp_path):
    import requests

    data = generate(SynthConfig(communities=4, pins_per_community=150,
                                boards_per_community=25, edges_per_board=20,
                                cross_community_noise=0.05, seed=77))
    edges, topics = tmp_path / "edges.tsv", tmp_path / "topics.tsv"
    data.write_raw_files(edges, topics)

    graph_dir = tmp_path / "serving"
    stage = tmp_path / "stage"
    graph_dir.mkdir()
    stage.mkdir()
    compile_files(edges, topics, PruneConfig(entropy_quantile=0.1, delta=1.0),
                  graph_dir / "graph-000.pixg")

    # soak pins must be walkable in both graph generations
    from pinwalk.compiler import read_id_map
    from pinwalk.graph import load_binary

    g0 = load_binary(graph_dir / "graph-000.pixg")
    idmap = read_id_map(graph_dir / "graph-000.idmap")
    soak_keys = [k for k, i in idmap.items()
                 if i < g0.pin_count and g0.degree(i) > 0][:100]
    assert len(soak_keys) == 100

    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "pinwalk.cli", "serve",
         "--graph-dir", str(graph_dir), "--port", str(port),
         "--steps", "20000", "--seed", "42", "--poll-interval", "0.2"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 60
        while True:
            try:
                if requests.get(base + "/v1/health", timeout=1).ok:
                    break
            except requests.ConnectionError:
                pass
            if time.time() > deadline:
                raise RuntimeError("server did not come up")
            time.sleep(0.2)

        pinned = {"query": [{"pinKey": "p1", "weight": 1.0}],
                  "seed": 31337, "topK": 50}
        r1 = requests.post(base + "/v1/recommend", json=pinned, timeout=10)
        r2 = requests.post(base + "/v1/recommend", json=pinned, timeout=10)
        bodies_identical = r1.ok and r2.ok and r1.content == r2.content

        # 30-second soak with a mid-traffic graph swap
        compile_files(edges, topics,
                      PruneConfig(entropy_quantile=0.1, delta=0.8),
                      stage / "graph-001.pixg")
        failures = 0
        requests_sent = 0
        versions = set()
        swapped = False
        soak_start = time.time()
        while time.time() - soak_start < 30.0:
            if not swapped and time.time() - soak_start > 8.0:
                os.replace(stage / "graph-001.idmap",
                           graph_dir / "graph-001.idmap")
                os.replace(stage / "graph-001.pixg",
                           graph_dir / "graph-001.pixg")
                swapped = True
            try:
                r = requests.post(
                    base + "/v1/recommend",
                    json={"query": [{"pinKey": soak_keys[requests_sent % 100]}],
                          "topK": 20},
                    timeout=10)
                requests_sent += 1
                if r.status_code != 200:
                    failures += 1
                else:
                    versions.add(r.json()["stats"]["graphVersion"])
            except requests.RequestException:
                requests_sent += 1
                failures += 1
        saw_both = versions == {"graph-000.pixg", "graph-001.pixg"}
        ok = bodies_identical and failures == 0 and saw_both
        check(10, "serve: pinned-seed replay identical, zero-failure hot swap",
              ok, f"identical_bodies={bodies_identical}, "
                  f"requests={requests_sent}, failures={failures}, "
                  f"versions_seen={sorted(versions)}")
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
