"""Raw-input compiler: parse, prune, pack, persist.

Pipeline: tab-separated board/pin edges and per-node topic lines come
in; high-entropy boards and topically dissimilar edges are pruned; the
survivors get dense IDs (pins first, then boards, each by first
appearance in the input) and are written as the binary graph plus an
external-key -> internal-ID map.

The whole pipeline is deterministic: identical inputs and config give
byte-identical outputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    MissingTopicsError,
    ParseError,
    UndefinedSimilarityError,
)
from .graph import BipartiteGraph, save_binary
from .rng import RandomSource, derive_seed

EDGE_PRUNE_SALT = 0x70695845  # seeds the fallback pruning of vectorless pins


@dataclass(frozen=True)
class PruneConfig:
    entropy_quantile: float = 0.10
    delta: float = 1.0
    latest_m: int = 20
    topic_dim: int | None = None

    def validated(self) -> "PruneConfig":
        if not 0.0 <= self.entropy_quantile < 1.0:
            raise ConfigError("entropy_quantile must be in [0,1)")
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError("delta must be in (0,1]")
        if self.latest_m < 1:
            raise ConfigError("latest_m must be >= 1")
        return self


@dataclass
class ParsedEdges:
    """Deduplicated edge list with provisional 0-based indices."""

    pin_keys: list[str]
    board_keys: list[str]
    edges: list[tuple[int, int]]           # (pin_idx, board_idx), input order
    board_members: list[list[int]]         # per board, pin_idx in input order
    duplicates: int


@dataclass
class CompileReport:
    pins: int = 0
    boards_before: int = 0
    boards_after: int = 0
    edges_before: int = 0
    edges_after: int = 0
    duplicates_collapsed: int = 0
    boards_removed: int = 0
    entropy_threshold: float | None = None
    boards_without_topics: int = 0
    pins_without_topics: int = 0
    isolated_pins: int = 0
    isolated_boards: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def parse_edge_file(path) -> ParsedEdges:
    """Read `boardKey<TAB>pinKey` lines; duplicates collapse silently."""
    pin_ids: dict[str, int] = {}
    board_ids: dict[str, int] = {}
    edges: list[tuple[int, int]] = []
    board_members: list[list[int]] = []
    seen: set[tuple[int, int]] = set()
    duplicates = 0

    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(path, line_no,
                                 f"expected 'boardKey<TAB>pinKey', got {line!r}")
            board_key, pin_key = parts
            if board_key in pin_ids:
                raise ParseError(path, line_no,
                                 f"key {board_key!r} already used as a pin")
            if pin_key in board_ids:
                raise ParseError(path, line_no,
                                 f"key {pin_key!r} already used as a board")
            if board_key not in board_ids:
                board_ids[board_key] = len(board_ids)
                board_members.append([])
            if pin_key not in pin_ids:
                pin_ids[pin_key] = len(pin_ids)
            b, p = board_ids[board_key], pin_ids[pin_key]
            if (p, b) in seen:
                duplicates += 1
                continue
            seen.add((p, b))
            edges.append((p, b))
            board_members[b].append(p)

    return ParsedEdges(
        pin_keys=list(pin_ids),
        board_keys=list(board_ids),
        edges=edges,
        board_members=board_members,
        duplicates=duplicates,
    )


def parse_topics_file(path, topic_dim: int | None = None
                      ) -> dict[str, tuple[int, np.ndarray]]:
    """Read `nodeKey<TAB>attrId<TAB>v1,...,vd` lines."""
    out: dict[str, tuple[int, np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no,
                                 "expected 'nodeKey<TAB>attrId<TAB>v1,v2,...'")
            key, attr_s, vec_s = parts
            if not key:
                raise ParseError(path, line_no, "empty node key")
            try:
                attr = int(attr_s)
            except ValueError:
                raise ParseError(path, line_no, f"bad attrId {attr_s!r}")
            if not 0 <= attr < (1 << 16):
                raise ParseError(path, line_no, f"attrId {attr} outside u16")
            try:
                vec = np.array([float(x) for x in vec_s.split(",")])
            except ValueError:
                raise ParseError(path, line_no, "bad vector component")
            if topic_dim is None:
                topic_dim = len(vec)
            if len(vec) != topic_dim:
                raise ParseError(path, line_no,
                                 f"vector dim {len(vec)} != {topic_dim}")
            if np.any(vec < 0):
                raise ParseError(path, line_no, "negative vector component")
            if abs(float(vec.sum()) - 1.0) > 1e-6:
                raise ParseError(path, line_no,
                                 f"vector sums to {vec.sum():.8f}, not 1")
            if key in out:
                raise ParseError(path, line_no, f"duplicate node key {key!r}")
            out[key] = (attr, vec)
    return out


def board_topic_distribution(member_pins, topic_vectors: dict[int, np.ndarray],
                             latest_m: int) -> np.ndarray:
    """Mean of the most recent member vectors, renormalized.

    `member_pins` is in save order, so recency is position; only the
    last `latest_m` members that carry a vector contribute.
    """
    recent = [p for p in member_pins if p in topic_vectors][-latest_m:]
    if not recent:
        raise MissingTopicsError("board has no member pin with a topic vector")
    mean = np.mean([topic_vectors[p] for p in recent], axis=0)
    return mean / mean.sum()


def entropy(distribution: np.ndarray) -> float:
    """Shannon entropy in nats, with 0*ln(0) = 0."""
    p = np.asarray(distribution, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UndefinedSimilarityError("cosine of zero vector")
    return float(np.dot(u, v) / (nu * nv))


def select_boards_to_prune(entropies: dict[int, float], board_count: int,
                           quantile: float) -> list[int]:
    """Indices of the ceil(quantile * boards) most diverse boards.

    Threshold ties are broken by removing higher board indices first;
    boards without an entropy value are never selected.
    """
    k = math.ceil(quantile * board_count)
    if k <= 0 or not entropies:
        return []
    ranked = sorted(entropies, key=lambda b: (-entropies[b], -b))
    return sorted(ranked[:k])


def prune_edges(edges: list[tuple[int, int]],
                pin_vectors: dict[int, np.ndarray],
                board_dists: dict[int, np.ndarray],
                delta: float) -> tuple[list[tuple[int, int]], int]:
    """Keep each pin's ceil(d^delta) most board-similar edges.

    Ties keep the lower board index; boards without a distribution rank
    below any real similarity. Pins without a vector keep a random
    subset drawn from a per-pin deterministic seed. Returns the kept
    edges (input order) and the count of vectorless pins.
    """
    by_pin: dict[int, list[int]] = {}
    for p, b in edges:
        by_pin.setdefault(p, []).append(b)

    kept: set[tuple[int, int]] = set()
    vectorless = 0
    for p, boards in by_pin.items():
        d = len(boards)
        keep = min(d, math.ceil(d ** delta - 1e-12))
        if keep >= d:
            kept.update((p, b) for b in boards)
            continue
        vec = pin_vectors.get(p)
        if vec is None:
            vectorless += 1
            rng = RandomSource(derive_seed(EDGE_PRUNE_SALT, p))
            pool = list(boards)
            for i in range(keep):  # partial Fisher-Yates
                j = i + rng.next_below(len(pool) - i)
                pool[i], pool[j] = pool[j], pool[i]
            chosen = pool[:keep]
        else:
            def rank(b):
                dist = board_dists.get(b)
                sim = -math.inf if dist is None else cosine_similarity(vec, dist)
                return (-sim, b)
            chosen = sorted(boards, key=rank)[:keep]
        kept.update((p, b) for b in chosen)

    return [e for e in edges if e in kept], vectorless


@dataclass
class CompiledGraph:
    graph: BipartiteGraph
    pin_keys: list[str]
    board_keys: list[str]          # surviving boards, in final ID order
    report: CompileReport


def compile_graph(parsed: ParsedEdges,
                  topics: dict[str, tuple[int, np.ndarray]],
                  cfg: PruneConfig) -> CompiledGraph:
    """Prune and pack parsed inputs into a serving graph."""
    cfg.validated()
    report = CompileReport(
        pins=len(parsed.pin_keys),
        boards_before=len(parsed.board_keys),
        edges_before=len(parsed.edges),
        duplicates_collapsed=parsed.duplicates,
    )

    pin_vectors: dict[int, np.ndarray] = {}
    pin_attr: dict[int, int] = {}
    for idx, key in enumerate(parsed.pin_keys):
        if key in topics:
            attr, vec = topics[key]
            pin_attr[idx] = attr
            pin_vectors[idx] = vec
    report.pins_without_topics = len(parsed.pin_keys) - len(pin_vectors)

    board_dists: dict[int, np.ndarray] = {}
    board_entropy: dict[int, float] = {}
    for b, members in enumerate(parsed.board_members):
        try:
            dist = board_topic_distribution(members, pin_vectors, cfg.latest_m)
        except MissingTopicsError:
            continue
        board_dists[b] = dist
        board_entropy[b] = entropy(dist)
    report.boards_without_topics = len(parsed.board_keys) - len(board_dists)

    removed = select_boards_to_prune(board_entropy, len(parsed.board_keys),
                                     cfg.entropy_quantile)
    removed_set = set(removed)
    report.boards_removed = len(removed)
    if removed:
        report.entropy_threshold = min(board_entropy[b] for b in removed)

    edges = [(p, b) for p, b in parsed.edges if b not in removed_set]
    edges, _ = prune_edges(edges, pin_vectors, board_dists, cfg.delta)
    report.edges_after = len(edges)

    # final dense IDs: every pin survives; boards keep first-appearance order
    surviving = [b for b in range(len(parsed.board_keys)) if b not in removed_set]
    board_new = {b: i for i, b in enumerate(surviving)}
    pin_count = len(parsed.pin_keys)
    report.boards_after = len(surviving)

    node_attr = np.zeros(pin_count + len(surviving), dtype=np.uint16)
    for idx, attr in pin_attr.items():
        node_attr[idx] = attr
    for b in surviving:
        key = parsed.board_keys[b]
        if key in topics:
            node_attr[pin_count + board_new[b]] = topics[key][0]

    id_edges = [(p, pin_count + board_new[b]) for p, b in edges]
    graph = BipartiteGraph.from_edges(pin_count, len(surviving), id_edges,
                                      node_attr)
    degrees = graph.offsets[1:] - graph.offsets[:-1]
    report.isolated_pins = int((degrees[:pin_count] == 0).sum())
    report.isolated_boards = int((degrees[pin_count:] == 0).sum())

    rep = graph.validate()
    if not rep.ok:
        raise AssertionError(f"compiler produced invalid graph: {rep}")

    board_keys = [parsed.board_keys[b] for b in surviving]
    return CompiledGraph(graph, parsed.pin_keys, board_keys, report)


def write_id_map(compiled: CompiledGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, key in enumerate(compiled.pin_keys):
            f.write(f"{key}\t{i}\n")
        base = len(compiled.pin_keys)
        for i, key in enumerate(compiled.board_keys):
            f.write(f"{key}\t{base + i}\n")


def read_id_map(path) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, "expected 'key<TAB>id'")
            out[parts[0]] = int(parts[1])
    return out


def id_map_path(graph_path) -> str:
    root, _ = os.path.splitext(str(graph_path))
    return root + ".idmap"


def compile_files(raw_path, topics_path, cfg: PruneConfig,
                  out_path) -> CompileReport:
    """File-level entry point; partial outputs are removed on failure."""
    parsed = parse_edge_file(raw_path)
    topics = parse_topics_file(topics_path, cfg.topic_dim)
    compiled = compile_graph(parsed, topics, cfg)
    map_path = id_map_path(out_path)
    try:
        save_binary(compiled.graph, out_path)
        write_id_map(compiled, map_path)
    except BaseException:
        for p in (out_path, map_path):
            if os.path.exists(p):
                os.unlink(p)
        raise
    return compiled.report
