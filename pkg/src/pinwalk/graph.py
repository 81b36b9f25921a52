"""Immutable in-memory pin/board graph.

Layout is a single adjacency array (`edge_vec`) indexed by per-node
`offsets`, so neighbor sampling is two array reads. Node IDs are dense
and 0-based: pins occupy [0, pin_count), boards [pin_count, node_count).
Both edge directions are stored, so the slot count is 2|E|.

Within each node's slice neighbors are sorted by (neighbor attribute,
neighbor ID) and `ab_*` arrays record, per node, the half-open subrange
of the slice holding each attribute. Attribute-biased sampling is then
a subrange pick instead of rejection sampling.

All arrays are frozen after construction; concurrent readers need no
locks. Random state is always caller-owned.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    InvalidNodeError,
    InvariantViolationError,
    NoNeighborError,
    TruncatedFileError,
    VersionMismatchError,
)
from .rng import RandomSource

MAGIC = b"PIXG"
FORMAT_VERSION = 1

# Node IDs are u32 with 0xFFFFFFFF reserved (counter empty-slot sentinel),
# so a graph holds at most 2^32 - 1 nodes.
MAX_NODES = (1 << 32) - 1

UNLABELED = 0  # attribute 0 means "no bias bucket"


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.violations)


class BipartiteGraph:
    """Frozen pin/board graph in offset+edge-array form."""

    __slots__ = (
        "pin_count",
        "board_count",
        "offsets",
        "edge_vec",
        "node_attr",
        "ab_offsets",
        "ab_attrs",
        "ab_begins",
        "ab_ends",
        "_max_pin_degree",
    )

    def __init__(self, pin_count, board_count, offsets, edge_vec, node_attr,
                 ab_offsets, ab_attrs, ab_begins, ab_ends):
        self.pin_count = int(pin_count)
        self.board_count = int(board_count)
        self.offsets = offsets
        self.edge_vec = edge_vec
        self.node_attr = node_attr
        self.ab_offsets = ab_offsets
        self.ab_attrs = ab_attrs
        self.ab_begins = ab_begins
        self.ab_ends = ab_ends
        self._max_pin_degree = None
        for arr in (offsets, edge_vec, node_attr, ab_offsets, ab_attrs,
                    ab_begins, ab_ends):
            arr.flags.writeable = False

    # -- construction -------------------------------------------------

    @classmethod
    def from_edges(cls, pin_count: int, board_count: int, edges,
                   node_attr=None) -> "BipartiteGraph":
        """Build from (pin, board) ID pairs; both directions are stored.

        Parallel pairs are kept as-is (multiplicity shows up in both
        directions); callers wanting set semantics deduplicate first.
        """
        n = pin_count + board_count
        if n > MAX_NODES:
            raise ValueError(f"graph exceeds {MAX_NODES} node capacity")
        if node_attr is None:
            node_attr = np.zeros(n, dtype=np.uint16)
        else:
            node_attr = np.asarray(node_attr, dtype=np.uint16).copy()
            if node_attr.shape != (n,):
                raise ValueError("node_attr length must equal node count")

        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        if len(edges):
            pins, boards = edges[:, 0], edges[:, 1]
            if pins.min() < 0 or pins.max() >= pin_count:
                raise ValueError("pin ID out of range")
            if boards.min() < pin_count or boards.max() >= n:
                raise ValueError("board ID out of range")
            src = np.concatenate([pins, boards])
            dst = np.concatenate([boards, pins]).astype(np.uint32)
        else:
            src = np.empty(0, dtype=np.int64)
            dst = np.empty(0, dtype=np.uint32)

        dst_attr = node_attr[dst] if len(dst) else np.empty(0, dtype=np.uint16)
        order = np.lexsort((dst, dst_attr, src))
        src = src[order]
        dst = dst[order]
        dst_attr = dst_attr[order]

        counts = np.bincount(src, minlength=n) if len(src) else np.zeros(n, dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(counts, out=offsets[1:])

        # attribute runs: a new run starts at each node or attribute change
        m = len(dst)
        if m:
            is_start = np.ones(m, dtype=bool)
            is_start[1:] = (src[1:] != src[:-1]) | (dst_attr[1:] != dst_attr[:-1])
            starts = np.flatnonzero(is_start)
            ends = np.append(starts[1:], m)
            run_node = src[starts]
            run_counts = np.bincount(run_node, minlength=n)
            ab_offsets = np.zeros(n + 1, dtype=np.uint64)
            np.cumsum(run_counts, out=ab_offsets[1:])
            slice_base = offsets[:-1].astype(np.int64)[run_node]
            ab_attrs = dst_attr[starts].copy()
            ab_begins = (starts - slice_base).astype(np.uint32)
            ab_ends = (ends - slice_base).astype(np.uint32)
        else:
            ab_offsets = np.zeros(n + 1, dtype=np.uint64)
            ab_attrs = np.empty(0, dtype=np.uint16)
            ab_begins = np.empty(0, dtype=np.uint32)
            ab_ends = np.empty(0, dtype=np.uint32)

        return cls(pin_count, board_count, offsets, dst, node_attr,
                   ab_offsets, ab_attrs, ab_begins, ab_ends)

    @classmethod
    def empty(cls) -> "BipartiteGraph":
        return cls.from_edges(0, 0, [])

    # -- basic accessors ----------------------------------------------

    @property
    def node_count(self) -> int:
        return self.pin_count + self.board_count

    @property
    def edge_slots(self) -> int:
        return len(self.edge_vec)

    def is_pin(self, v: int) -> bool:
        return v < self.pin_count

    def degree(self, v: int) -> int:
        if not 0 <= v < self.node_count:
            raise InvalidNodeError(f"node {v} not in [0, {self.node_count})")
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors(self, v: int) -> np.ndarray:
        if not 0 <= v < self.node_count:
            raise InvalidNodeError(f"node {v} not in [0, {self.node_count})")
        return self.edge_vec[int(self.offsets[v]):int(self.offsets[v + 1])]

    def attr_ranges(self, v: int):
        """(attrs, begins, ends) of the node's attribute subranges."""
        if not 0 <= v < self.node_count:
            raise InvalidNodeError(f"node {v} not in [0, {self.node_count})")
        lo, hi = int(self.ab_offsets[v]), int(self.ab_offsets[v + 1])
        return self.ab_attrs[lo:hi], self.ab_begins[lo:hi], self.ab_ends[lo:hi]

    @property
    def max_pin_degree(self) -> int:
        if self._max_pin_degree is None:
            if self.pin_count == 0:
                deg = 0
            else:
                degs = self.offsets[1:self.pin_count + 1] - self.offsets[:self.pin_count]
                deg = int(degs.max())
            self._max_pin_degree = deg
        return self._max_pin_degree

    # -- sampling ------------------------------------------------------

    def sample_neighbor_uniform(self, v: int, rng: RandomSource) -> int:
        d = self.degree(v)
        if d == 0:
            raise NoNeighborError(f"node {v} has no neighbors")
        return int(self.edge_vec[int(self.offsets[v]) + rng.next_below(d)])

    def sample_neighbor_biased(self, v: int, user_attrs, beta: float,
                               rng: RandomSource) -> int:
        """Subrange-biased neighbor pick.

        With probability `beta` sample uniformly over the union of this
        node's subranges whose attribute is in `user_attrs`; if that
        union is empty, or with probability 1-beta, fall back to the
        whole slice. The coin is only drawn when beta > 0 and the
        feature set is non-empty, so bias-off sampling consumes the
        same stream as sample_neighbor_uniform.
        """
        d = self.degree(v)
        if d == 0:
            raise NoNeighborError(f"node {v} has no neighbors")
        if beta > 0.0 and user_attrs and rng.next_unit() <= beta:
            attrs, begins, ends = self.attr_ranges(v)
            total = 0
            for a, b, e in zip(attrs, begins, ends):
                if int(a) in user_attrs:
                    total += int(e) - int(b)
            if total > 0:
                r = rng.next_below(total)
                for a, b, e in zip(attrs, begins, ends):
                    if int(a) in user_attrs:
                        span = int(e) - int(b)
                        if r < span:
                            return int(self.edge_vec[int(self.offsets[v]) + int(b) + r])
                        r -= span
        return int(self.edge_vec[int(self.offsets[v]) + rng.next_below(d)])

    # -- validation ----------------------------------------------------

    def validate(self) -> ValidationReport:
        """Structural check; the report lists every violated invariant."""
        rep = ValidationReport()
        n = self.node_count
        m = len(self.edge_vec)

        if len(self.offsets) != n + 1:
            rep.add(f"offsets length {len(self.offsets)} != nodes+1 {n + 1}")
            return rep
        if len(self.node_attr) != n:
            rep.add(f"node_attr length {len(self.node_attr)} != nodes {n}")
            return rep
        if self.offsets[0] != 0:
            rep.add("offsets[0] != 0")
        if np.any(np.diff(self.offsets.astype(np.int64)) < 0):
            rep.add("offsets not non-decreasing")
            return rep
        if int(self.offsets[-1]) != m:
            rep.add(f"offsets[last]={int(self.offsets[-1])} != edge slots {m}")
            return rep

        if m:
            degrees = (self.offsets[1:] - self.offsets[:-1]).astype(np.int64)
            src = np.repeat(np.arange(n, dtype=np.int64), degrees)
            dst = self.edge_vec.astype(np.int64)
            if dst.max(initial=-1) >= n:
                rep.add("edge_vec references node >= node count")
                return rep

            src_is_pin = src < self.pin_count
            dst_is_pin = dst < self.pin_count
            bad = src_is_pin == dst_is_pin
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                kind = "pin-pin" if src_is_pin[i] else "board-board"
                rep.add(f"bipartiteness violated: {kind} edge {int(src[i])}-{int(dst[i])}")

            # symmetry: (pin, board) multiset must match from both sides
            fwd = src[src_is_pin] * np.int64(n) + dst[src_is_pin]
            rev = dst[~src_is_pin] * np.int64(n) + src[~src_is_pin]
            if len(fwd) != len(rev) or not np.array_equal(np.sort(fwd), np.sort(rev)):
                rep.add("adjacency not symmetric between pin and board sides")

            # per-slice sort by (attribute, ID)
            key = (self.node_attr[dst].astype(np.int64) << 32) | dst
            interior = np.ones(m, dtype=bool)
            interior[self.offsets[:-1][degrees > 0].astype(np.int64)] = False
            if np.any(key[interior] < key[np.flatnonzero(interior) - 1]):
                rep.add("slice not sorted by (neighbor attribute, neighbor ID)")

        rep.violations.extend(self._validate_attr_ranges())
        return rep

    def _validate_attr_ranges(self) -> list[str]:
        bad: list[str] = []
        n = self.node_count
        if len(self.ab_offsets) != n + 1 or self.ab_offsets[0] != 0:
            return ["attr-range offsets malformed"]
        if np.any(np.diff(self.ab_offsets.astype(np.int64)) < 0):
            return ["attr-range offsets not non-decreasing"]
        t = len(self.ab_attrs)
        if int(self.ab_offsets[-1]) != t or len(self.ab_begins) != t or len(self.ab_ends) != t:
            return ["attr-range arrays inconsistent lengths"]
        if t == 0:
            if len(self.edge_vec) != 0:
                bad.append("attr ranges missing for non-empty adjacency")
            return bad

        run_counts = (self.ab_offsets[1:] - self.ab_offsets[:-1]).astype(np.int64)
        node_of_run = np.repeat(np.arange(n, dtype=np.int64), run_counts)
        degrees = (self.offsets[1:] - self.offsets[:-1]).astype(np.int64)

        first = np.zeros(t, dtype=bool)
        first[self.ab_offsets[:-1][run_counts > 0].astype(np.int64)] = True
        last = np.zeros(t, dtype=bool)
        last[(self.ab_offsets[1:][run_counts > 0] - 1).astype(np.int64)] = True

        begins = self.ab_begins.astype(np.int64)
        ends = self.ab_ends.astype(np.int64)
        if np.any(begins[first] != 0):
            bad.append("attr subranges do not start at slice begin")
        if np.any(ends[last] != degrees[node_of_run[last]]):
            bad.append("attr subranges do not end at slice end")
        if np.any(begins[~first] != ends[np.flatnonzero(~first) - 1]):
            bad.append("attr subranges do not tile the slice")
        if np.any(ends <= begins):
            bad.append("empty or inverted attr subrange")
        if np.any(self.ab_attrs[~first].astype(np.int64)
                  <= self.ab_attrs[np.flatnonzero(~first) - 1].astype(np.int64)):
            bad.append("attr subranges not strictly increasing by attribute")
        if bad:
            return bad

        # content: every slot's neighbor attribute matches its subrange
        lengths = ends - begins
        expanded = np.repeat(self.ab_attrs, lengths)
        if len(expanded) != len(self.edge_vec):
            bad.append("attr subranges do not cover all edge slots")
        elif np.any(expanded != self.node_attr[self.edge_vec]):
            bad.append("attr subrange attribute mismatch with neighbor attributes")
        return bad

    # -- equality (used by round-trip tests) ---------------------------

    def equals(self, other: "BipartiteGraph") -> bool:
        return (
            self.pin_count == other.pin_count
            and self.board_count == other.board_count
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.edge_vec, other.edge_vec)
            and np.array_equal(self.node_attr, other.node_attr)
            and np.array_equal(self.ab_offsets, other.ab_offsets)
            and np.array_equal(self.ab_attrs, other.ab_attrs)
            and np.array_equal(self.ab_begins, other.ab_begins)
            and np.array_equal(self.ab_ends, other.ab_ends)
        )


# -- binary format ------------------------------------------------------
#
# little-endian:
#   magic "PIXG" | version u32 | pinCount u64 | boardCount u64 | edgeSlots u64
#   offsets   u64 x (nodes+1)
#   edgeVec   u32 x edgeSlots
#   nodeAttr  u16 x nodes
#   per node: count u16, then count x (attr u16, begin u32, end u32)
#   crc32 u32 over all preceding bytes

_TRIPLE_DTYPE = np.dtype([("attr", "<u2"), ("begin", "<u4"), ("end", "<u4")])
_HEADER = struct.Struct("<4sIQQQ")


def save_binary(graph: BipartiteGraph, path) -> None:
    """Write the graph; bytes are a pure function of the graph."""
    n = graph.node_count
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, graph.pin_count,
                           graph.board_count, graph.edge_slots))
    buf.write(graph.offsets.astype("<u8", copy=False).tobytes())
    buf.write(graph.edge_vec.astype("<u4", copy=False).tobytes())
    buf.write(graph.node_attr.astype("<u2", copy=False).tobytes())

    triples = np.empty(len(graph.ab_attrs), dtype=_TRIPLE_DTYPE)
    triples["attr"] = graph.ab_attrs
    triples["begin"] = graph.ab_begins
    triples["end"] = graph.ab_ends
    tbytes = triples.tobytes()
    isz = _TRIPLE_DTYPE.itemsize
    for v in range(n):
        lo, hi = int(graph.ab_offsets[v]), int(graph.ab_offsets[v + 1])
        buf.write(struct.pack("<H", hi - lo))
        buf.write(tbytes[lo * isz:hi * isz])

    payload = buf.getvalue()
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def load_binary(path) -> BipartiteGraph:
    """Load and fully check a graph file (one sequential read)."""
    with open(path, "rb") as f:
        data = f.read()

    if len(data) < 4:
        raise TruncatedFileError(f"{path}: file shorter than magic")
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: truncated header")
    _, version, pin_count, board_count, edge_slots = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: version {version} != {FORMAT_VERSION}")

    n = pin_count + board_count
    if n > MAX_NODES:
        raise InvariantViolationError(f"{path}: node count {n} exceeds capacity")
    pos = _HEADER.size

    def take(count: int, dtype) -> np.ndarray:
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        if pos + nbytes > len(data) - 4:
            raise TruncatedFileError(f"{path}: truncated at byte {pos}")
        out = np.frombuffer(data, dtype=dtype, count=count, offset=pos).copy()
        pos += nbytes
        return out

    offsets = take(n + 1, "<u8")
    edge_vec = take(edge_slots, "<u4")
    node_attr = take(n, "<u2")

    counts = np.empty(n, dtype=np.int64)
    chunks = []
    isz = _TRIPLE_DTYPE.itemsize
    for v in range(n):
        if pos + 2 > len(data) - 4:
            raise TruncatedFileError(f"{path}: truncated attr-range block {v}")
        (c,) = struct.unpack_from("<H", data, pos)
        pos += 2
        counts[v] = c
        if pos + c * isz > len(data) - 4:
            raise TruncatedFileError(f"{path}: truncated attr-range block {v}")
        chunks.append(np.frombuffer(data, dtype=_TRIPLE_DTYPE, count=c, offset=pos))
        pos += c * isz

    if pos != len(data) - 4:
        raise TruncatedFileError(f"{path}: {len(data) - 4 - pos} unexpected trailing bytes")
    (stored_crc,) = struct.unpack_from("<I", data, pos)
    if zlib.crc32(data[:pos]) != stored_crc:
        raise ChecksumError(f"{path}: checksum mismatch")

    ab_offsets = np.zeros(n + 1, dtype=np.uint64)
    np.cumsum(counts, out=ab_offsets[1:])
    triples = (np.concatenate(chunks) if chunks else
               np.empty(0, dtype=_TRIPLE_DTYPE))
    graph = BipartiteGraph(
        pin_count, board_count,
        offsets, edge_vec, node_attr,
        ab_offsets,
        triples["attr"].astype(np.uint16),
        triples["begin"].astype(np.uint32),
        triples["end"].astype(np.uint32),
    )
    report = graph.validate()
    if not report.ok:
        raise InvariantViolationError(f"{path}: {report}")
    return graph
