"""Planted-community synthetic graphs.

Stand-in for a production pin/board corpus: each board draws its pins
from its own community except with a small cross-community noise
probability. The community index doubles as the node attribute and as
the dominant coordinate of every member pin's topic vector, so the
same data exercises biasing, entropy pruning, and similarity pruning.
Everything is a pure function of the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compiler import ParsedEdges
from .errors import ConfigError
from .graph import BipartiteGraph
from .rng import RandomSource


@dataclass(frozen=True)
class SynthConfig:
    communities: int = 20
    pins_per_community: int = 500
    boards_per_community: int = 50
    edges_per_board: int = 50
    cross_community_noise: float = 0.05
    dominant_mass: float = 0.85
    topic_jitter: float = 0.05
    seed: int = 0
    attrs: tuple[int, ...] | None = None  # community -> attribute; default c+1

    def validated(self) -> "SynthConfig":
        if min(self.communities, self.pins_per_community,
               self.boards_per_community, self.edges_per_board) < 1:
            raise ConfigError("all synthetic counts must be >= 1")
        if not 0.0 <= self.cross_community_noise < 1.0:
            raise ConfigError("cross_community_noise must be in [0,1)")
        if not 0.0 < self.dominant_mass <= 1.0:
            raise ConfigError("dominant_mass must be in (0,1]")
        if self.attrs is not None and len(self.attrs) != self.communities:
            raise ConfigError("attrs must list one attribute per community")
        return self

    def attr_of(self, community: int) -> int:
        return self.attrs[community] if self.attrs else community + 1

    @property
    def pin_count(self) -> int:
        return self.communities * self.pins_per_community

    @property
    def board_count(self) -> int:
        return self.communities * self.boards_per_community


@dataclass
class SynthData:
    cfg: SynthConfig
    graph: BipartiteGraph
    pin_vectors: np.ndarray                  # (pins, communities)
    board_members: list[list[int]]           # deduped, draw order
    raw_edge_count: int                      # before dedup

    def community_of_pin(self, pin: int) -> int:
        return pin // self.cfg.pins_per_community

    def community_of_board(self, board_raw: int) -> int:
        return board_raw // self.cfg.boards_per_community

    def pin_key(self, pin: int) -> str:
        return f"p{pin}"

    def board_key(self, board_raw: int) -> str:
        return f"b{board_raw}"

    def to_parsed_edges(self, holdout=None) -> ParsedEdges:
        """View as compiler input; `holdout` is a set of (pin, board_raw)
        edges to withhold from the stream."""
        holdout = holdout or set()
        edges = []
        members: list[list[int]] = [[] for _ in self.board_members]
        for b, pins in enumerate(self.board_members):
            for p in pins:
                if (p, b) in holdout:
                    continue
                edges.append((p, b))
                members[b].append(p)
        return ParsedEdges(
            pin_keys=[self.pin_key(p) for p in range(self.cfg.pin_count)],
            board_keys=[self.board_key(b) for b in range(self.cfg.board_count)],
            edges=edges,
            board_members=members,
            duplicates=0,
        )

    def topics_dict(self) -> dict[str, tuple[int, np.ndarray]]:
        out = {}
        for p in range(self.cfg.pin_count):
            c = self.community_of_pin(p)
            out[self.pin_key(p)] = (self.cfg.attr_of(c), self.pin_vectors[p])
        base = _base_vectors(self.cfg)
        for b in range(self.cfg.board_count):
            c = self.community_of_board(b)
            out[self.board_key(b)] = (self.cfg.attr_of(c), base[c])
        return out

    def write_raw_files(self, edges_path, topics_path) -> None:
        with open(edges_path, "w", encoding="utf-8") as f:
            for b, pins in enumerate(self.board_members):
                for p in pins:
                    f.write(f"{self.board_key(b)}\t{self.pin_key(p)}\n")
        with open(topics_path, "w", encoding="utf-8") as f:
            for key, (attr, vec) in self.topics_dict().items():
                comps = ",".join(repr(float(x)) for x in vec)
                f.write(f"{key}\t{attr}\t{comps}\n")


def _base_vectors(cfg: SynthConfig) -> np.ndarray:
    """Per-community topic vector: dominant own mass, rest spread."""
    d = cfg.communities
    base = np.full((d, d), (1.0 - cfg.dominant_mass) / max(1, d - 1))
    if d == 1:
        base[:] = 0.0
    np.fill_diagonal(base, cfg.dominant_mass if d > 1 else 1.0)
    return base


def generate(cfg: SynthConfig) -> SynthData:
    cfg.validated()
    rng = RandomSource(cfg.seed)
    ppc, bpc = cfg.pins_per_community, cfg.boards_per_community
    noise = cfg.cross_community_noise

    board_members: list[list[int]] = []
    edges: list[tuple[int, int]] = []
    raw = 0
    for c in range(cfg.communities):
        for k in range(bpc):
            b = c * bpc + k
            seen: set[int] = set()
            members: list[int] = []
            for _ in range(cfg.edges_per_board):
                raw += 1
                if cfg.communities > 1 and rng.next_unit() <= noise:
                    other = rng.next_below(cfg.communities - 1)
                    if other >= c:
                        other += 1
                    pin = other * ppc + rng.next_below(ppc)
                else:
                    pin = c * ppc + rng.next_below(ppc)
                if pin in seen:
                    continue
                seen.add(pin)
                members.append(pin)
                edges.append((pin, cfg.pin_count + b))
            board_members.append(members)

    base = _base_vectors(cfg)
    vectors = np.empty((cfg.pin_count, cfg.communities))
    for p in range(cfg.pin_count):
        c = p // ppc
        jitter = np.array([rng.next_unit() for _ in range(cfg.communities)])
        v = base[c] + cfg.topic_jitter * jitter
        vectors[p] = v / v.sum()

    node_attr = np.zeros(cfg.pin_count + cfg.board_count, dtype=np.uint16)
    for c in range(cfg.communities):
        node_attr[c * ppc:(c + 1) * ppc] = cfg.attr_of(c)
        lo = cfg.pin_count + c * bpc
        node_attr[lo:lo + bpc] = cfg.attr_of(c)

    graph = BipartiteGraph.from_edges(cfg.pin_count, cfg.board_count, edges,
                                      node_attr)
    return SynthData(cfg, graph, vectors, board_members, raw)


def bilingual_config(pins_per_community: int = 1500,
                     boards_per_community: int = 150,
                     edges_per_board: int = 40,
                     cross_noise: float = 0.15,
                     seed: int = 7) -> SynthConfig:
    """Two attribute populations with cross links, for bias studies."""
    return SynthConfig(
        communities=2,
        pins_per_community=pins_per_community,
        boards_per_community=boards_per_community,
        edges_per_board=edges_per_board,
        cross_community_noise=cross_noise,
        seed=seed,
    )
