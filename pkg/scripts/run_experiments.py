#!/usr/bin/env python3
"""Run the full desk-scale experiment battery and drop CSV/JSON reports.

Usage:
    python scripts/run_experiments.py [--out results/] [--seed 0] [--quick]

Experiments: stability vs steps, early-stopping trade-off, bias
efficacy, link-prediction F1 vs pruning factor, runtime scaling.
Every experiment is deterministic for a given --seed.
"""

import argparse
import pathlib
import sys
import time

from pinwalk.evals import (
    DESK_EARLY_STOP_PINS,
    DESK_EARLY_STOP_VISITS,
    eligible_query_pins,
    bias_experiment,
    community_recovery,
    early_stop_eval,
    link_prediction_sweep,
    runtime_bench,
    stability_experiment,
)
from pinwalk.rng import RandomSource
from pinwalk.synth import SynthConfig, bilingual_config, generate
from pinwalk.walk import WalkConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true",
                        help="scale everything down ~10x for a smoke run")
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    q = 10 if args.quick else 1

    def emit(report, name):
        report.write_csv(out / f"{name}.csv")
        report.write_json(out / f"{name}.json")
        print(f"  -> {out / f'{name}.csv'}")

    print("generating graphs ...")
    desk = generate(SynthConfig(seed=args.seed))
    bilingual = generate(bilingual_config(seed=args.seed + 7))
    noisy = generate(SynthConfig(communities=10, pins_per_community=300,
                                 boards_per_community=40, edges_per_board=40,
                                 cross_community_noise=0.3, topic_jitter=0.02,
                                 seed=args.seed + 11))

    anchor = community_recovery(desk, n_queries=100 // q, seed=args.seed)
    print(f"community-recovery sanity anchor: {anchor:.3f} (want >= 0.9)")

    t0 = time.time()
    print("stability vs steps ...")
    emit(stability_experiment(desk.graph, [10_000, 50_000, 100_000],
                              n_queries=20 // q or 2, repeats=100 // q or 10,
                              walk_cfg=WalkConfig(top_k=1000),
                              seed=args.seed),
         "stability")

    print("early stopping trade-off ...")
    pins = eligible_query_pins(desk.graph, 50 // q or 5,
                                RandomSource(args.seed + 123))
    grid = [(n_p, n_v) for n_p in (100, 300, DESK_EARLY_STOP_PINS, 1000)
            for n_v in (4, DESK_EARLY_STOP_VISITS, 16)]
    emit(early_stop_eval(desk.graph, pins,
                         WalkConfig(total_steps=100_000, top_k=1000),
                         grid, seed=args.seed + 9),
         "earlystop")

    print("bias efficacy ...")
    emit(bias_experiment(bilingual, [0.0, 0.5, 0.9, 1.0],
                         n_queries=50 // q or 5,
                         walk_cfg=WalkConfig(total_steps=20_000, top_k=100),
                         seed=args.seed + 5),
         "bias")

    print("link prediction vs pruning factor ...")
    emit(link_prediction_sweep(noisy, [round(0.1 * i, 1) for i in range(1, 11)],
                               WalkConfig(total_steps=30_000 // q,
                                          top_k=100).without_early_stop(),
                               n_boards=100 // q or 10, seed=args.seed + 17),
         "linkpred")

    print("runtime scaling ...")
    emit(runtime_bench(desk.graph, [10_000 * i for i in range(1, 11)],
                       query_sizes=(1, 2, 5, 10),
                       queries_per_point=200 // q or 20,
                       walk_cfg=WalkConfig(top_k=1000), seed=args.seed + 3),
         "runtime")

    print(f"done in {time.time() - t0:.0f}s; reports in {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
