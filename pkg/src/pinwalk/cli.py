"""Command line entry point.

Subcommands: compile, serve, query, synth, eval, bench. Every flag can
also be supplied through a PIXIE_-prefixed environment variable (e.g.
PIXIE_STEPS for --steps); explicit flags win. Results go to stdout as
TSV/CSV, diagnostics to stderr. Exit codes: 0 ok, 1 usage, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import evals
from .compiler import PruneConfig, compile_files, id_map_path, read_id_map
from .errors import PinwalkError
from .graph import load_binary
from .rng import RandomSource
from .synth import SynthConfig, generate
from .walk import WalkConfig, WeightedQuery, pixie_random_walk_multiple


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit 1 (2 is for runtime failures)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _opt(parser, flag, *, cast=str, default=None, required=False, help=None):
    """Add an option whose default can come from PIXIE_<FLAG>."""
    env_key = "PIXIE_" + flag.lstrip("-").replace("-", "_").upper()
    env_val = os.environ.get(env_key)
    if env_val is not None:
        default = cast(env_val)
        required = False
    parser.add_argument(flag, type=cast, default=default, required=required,
                        help=help)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _add_walk_flags(p, steps_default=100_000):
    _opt(p, "--steps", cast=int, default=steps_default, help="total step budget N")
    _opt(p, "--alpha", cast=float, default=0.5, help="segment length parameter")
    _opt(p, "--np", cast=int, default=2_000, help="early stop: pin threshold")
    _opt(p, "--nv", cast=int, default=4, help="early stop: visit threshold")
    _opt(p, "--beta", cast=float, default=0.0, help="bias strength")
    _opt(p, "--max-walk-length", cast=int, default=100)


def _walk_config(args, top_k=1_000) -> WalkConfig:
    return WalkConfig(
        alpha=args.alpha,
        total_steps=args.steps,
        early_stop_pins=args.np,
        early_stop_visits=args.nv,
        bias_strength=args.beta,
        max_walk_length=args.max_walk_length,
        top_k=top_k,
    ).validated()


def _add_synth_flags(p):
    _opt(p, "--communities", cast=int, default=20)
    _opt(p, "--pins-per-community", cast=int, default=500)
    _opt(p, "--boards-per-community", cast=int, default=50)
    _opt(p, "--edges-per-board", cast=int, default=50)
    _opt(p, "--noise", cast=float, default=0.05,
         help="cross-community edge probability")
    _opt(p, "--seed", cast=int, default=0)


def _synth_config(args) -> SynthConfig:
    return SynthConfig(
        communities=args.communities,
        pins_per_community=args.pins_per_community,
        boards_per_community=args.boards_per_community,
        edges_per_board=args.edges_per_board,
        cross_community_noise=args.noise,
        seed=args.seed,
    ).validated()


def build_parser() -> _Parser:
    parser = _Parser(prog="pinwalk", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("compile", help="prune raw edges and emit the binary graph")
    _opt(p, "--edges", required=True, help="boardKey<TAB>pinKey lines")
    _opt(p, "--topics", required=True, help="nodeKey<TAB>attr<TAB>vector lines")
    _opt(p, "--delta", cast=float, default=1.0, help="degree pruning factor")
    _opt(p, "--entropy-quantile", cast=float, default=0.10)
    _opt(p, "--latest-m", cast=int, default=20)
    _opt(p, "--out", required=True, help="output .pixg path")

    p = sub.add_parser("serve", help="run the recommendation HTTP service")
    _opt(p, "--graph-dir", required=True)
    _opt(p, "--port", cast=int, default=8080)
    _opt(p, "--host", default="127.0.0.1")
    _opt(p, "--workers", cast=int, default=4)
    _add_walk_flags(p)
    _opt(p, "--half-life-seconds", cast=float, default=86_400.0)
    _opt(p, "--seed", cast=int, default=0)
    _opt(p, "--poll-interval", cast=float, default=0.5)

    p = sub.add_parser("query", help="one-shot recommendation, TSV to stdout")
    _opt(p, "--graph", required=True, help=".pixg file (with .idmap sibling)")
    _opt(p, "--pin", required=True, help="query pin key(s), comma separated")
    _opt(p, "--weights", default=None, help="comma separated, default equal")
    _opt(p, "--features", default=None,
         help="user attribute buckets, comma separated")
    _add_walk_flags(p)
    _opt(p, "--seed", cast=int, default=0)
    _opt(p, "--top", cast=int, default=1_000)

    p = sub.add_parser("synth", help="generate a planted-community corpus")
    _add_synth_flags(p)
    _opt(p, "--out-edges", required=True)
    _opt(p, "--out-topics", required=True)

    p = sub.add_parser("eval", help="run one experiment, CSV out")
    p.add_argument("--experiment", required=True,
                   choices=["linkpred", "stability", "earlystop", "bias",
                            "runtime"])
    _add_synth_flags(p)
    _add_walk_flags(p, steps_default=20_000)
    _opt(p, "--out", required=True, help="CSV path")
    _opt(p, "--json", default=None, help="JSON summary path")
    _opt(p, "--deltas", cast=_float_list,
         default=[round(0.1 * i, 1) for i in range(1, 11)])
    _opt(p, "--n-grid", cast=_int_list, default=[10_000, 50_000, 100_000])
    _opt(p, "--queries", cast=int, default=20)
    _opt(p, "--repeats", cast=int, default=100)
    _opt(p, "--boards", cast=int, default=100)
    _opt(p, "--betas", cast=_float_list, default=[0.0, 0.5, 0.9])
    _opt(p, "--queries-per-point", cast=int, default=200)
    _opt(p, "--eval-seed", cast=int, default=0)

    p = sub.add_parser("bench", help="shortcut for the runtime experiment")
    _add_synth_flags(p)
    _add_walk_flags(p)
    _opt(p, "--out", required=True, help="CSV path")
    _opt(p, "--json", default=None)
    _opt(p, "--n-grid", cast=_int_list,
         default=[10_000 * i for i in range(1, 11)])
    _opt(p, "--queries-per-point", cast=int, default=200)
    _opt(p, "--eval-seed", cast=int, default=0)

    return parser


def _cmd_compile(args) -> int:
    cfg = PruneConfig(entropy_quantile=args.entropy_quantile,
                      delta=args.delta, latest_m=args.latest_m)
    report = compile_files(args.edges, args.topics, cfg, args.out)
    for k, v in report.as_dict().items():
        print(f"{k}\t{v}", file=sys.stderr)
    print(f"wrote {args.out} and {id_map_path(args.out)}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    from .server import ServerConfig, serve

    serve(ServerConfig(
        graph_dir=args.graph_dir,
        port=args.port,
        host=args.host,
        workers=args.workers,
        half_life_seconds=args.half_life_seconds,
        seed=args.seed,
        poll_interval=args.poll_interval,
        walk=_walk_config(args),
    ))
    return 0


def _cmd_query(args) -> int:
    graph = load_binary(args.graph)
    key_to_id = read_id_map(id_map_path(args.graph))
    id_to_key = {v: k for k, v in key_to_id.items()}

    keys = [k for k in args.pin.split(",") if k]
    weights = ([float(w) for w in args.weights.split(",") if w]
               if args.weights else [1.0] * len(keys))
    if len(weights) != len(keys):
        raise PinwalkError(f"{len(keys)} pins but {len(weights)} weights")
    unknown = [k for k in keys if k not in key_to_id]
    if unknown:
        raise PinwalkError(f"unknown pin key(s): {', '.join(unknown)}")
    features = frozenset(int(a) for a in (args.features or "").split(",") if a)

    query = WeightedQuery(
        tuple((key_to_id[k], w) for k, w in zip(keys, weights)), features)
    cfg = _walk_config(args, top_k=args.top)
    result = pixie_random_walk_multiple(query, graph, cfg,
                                        RandomSource(args.seed))
    print(f"steps={result.stats.steps_used} "
          f"early_stopped={result.stats.early_stopped}", file=sys.stderr)
    for pin, score in result.items:
        print(f"{id_to_key[pin]}\t{score!r}")
    return 0


def _cmd_synth(args) -> int:
    data = generate(_synth_config(args))
    data.write_raw_files(args.out_edges, args.out_topics)
    print(f"pins={data.cfg.pin_count} boards={data.cfg.board_count} "
          f"edges={data.graph.edge_slots // 2}", file=sys.stderr)
    return 0


def _run_experiment(args, experiment: str) -> int:
    synth = generate(_synth_config(args))
    cfg = _walk_config(args)
    seed = args.eval_seed
    if experiment == "linkpred":
        report = evals.link_prediction_sweep(
            synth, args.deltas, cfg.without_early_stop(),
            n_boards=args.boards, seed=seed)
    elif experiment == "stability":
        report = evals.stability_experiment(
            synth.graph, args.n_grid, n_queries=args.queries,
            repeats=args.repeats, walk_cfg=cfg, seed=seed)
    elif experiment == "earlystop":
        pins = evals.eligible_query_pins(
            synth.graph, args.queries, RandomSource(seed))
        grid = [(args.np, nv) for nv in (2, 4, 8, 16, 32)]
        report = evals.early_stop_eval(synth.graph, pins, cfg, grid, seed=seed)
    elif experiment == "bias":
        report = evals.bias_experiment(synth, args.betas,
                                       n_queries=args.queries,
                                       walk_cfg=cfg, seed=seed)
    elif experiment == "runtime":
        report = evals.runtime_bench(
            synth.graph, args.n_grid,
            queries_per_point=args.queries_per_point,
            walk_cfg=cfg, seed=seed)
    else:  # pragma: no cover - argparse restricts choices
        raise PinwalkError(f"unknown experiment {experiment}")

    report.write_csv(args.out)
    if args.json:
        report.write_json(args.json)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    return _run_experiment(args, args.experiment)


def _cmd_bench(args) -> int:
    return _run_experiment(args, "runtime")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    handlers = {
        "compile": _cmd_compile,
        "serve": _cmd_serve,
        "query": _cmd_query,
        "synth": _cmd_synth,
        "eval": _cmd_eval,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except PinwalkError as exc:
        print(f"pinwalk {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures still exit 2, with context
        print(f"pinwalk {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
