"""Compiled inner loops for the random walks.

Each kernel mirrors the pure-Python sampling in graph.py / counter.py
one-for-one, including RNG draw order, so a walk stepped from Python
and one run inside a kernel from the same seed visit identical nodes.
RNG is SplitMix64 with the state threaded through and returned.

The walk over the biased-sampling machinery is compiled separately
from the uniform fast path: keeping the subrange scan out of the hot
loop (it is a real call, not inlined) is worth ~5x on uniform walks.
A bias coin is only ever drawn when beta > 0 and the user feature set
is non-empty, so callers can dispatch to the uniform kernel in every
other case without changing the random stream.

Status codes returned by the walk kernels:
  0  completed
  1  dead end (err_node holds the degree-0 node)
  2  visit counter exceeded its load budget
"""

import numpy as np
from numba import njit

U64 = np.uint64
ONE = U64(1)
EMPTY = np.uint32(0xFFFFFFFF)

# golden-ratio constant doubles as the SplitMix64 gamma and the
# multiplicative hash for the visit counter
FIB64 = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53


@njit(inline="always")
def _next(state):
    state = state + FIB64
    z = state
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    z = z ^ (z >> U64(31))
    return state, z


@njit(inline="always")
def _next_unit(state):
    # uniform in (0, 1]
    state, z = _next(state)
    return state, ((z >> U64(11)) + ONE) * _TWO_M53


@njit(inline="always")
def _walk_len(state, alpha, cap):
    # geometric on {1,2,...}: P(L=l) = alpha*(1-alpha)^(l-1), capped
    state, u = _next_unit(state)
    ratio = np.log(u) / np.log1p(-alpha)
    if ratio >= cap - 1:
        return state, np.int64(cap)
    return state, np.int64(1) + np.int64(ratio)


@njit(inline="always")
def _counter_add(keys, vals, shift, mask, half, occupied, k):
    # open addressing, linear probing; returns (new count | -1 if full)
    idx = (U64(k) * FIB64) >> shift
    while True:
        kk = keys[idx]
        if kk == k:
            vals[idx] += 1
            return vals[idx], occupied
        if kk == EMPTY:
            if occupied >= half:
                return np.int64(-1), occupied
            keys[idx] = k
            vals[idx] = np.int64(1)
            return np.int64(1), occupied + 1
        idx = (idx + ONE) & mask


@njit(inline="always")
def _sample_uniform(offsets, edge_vec, v, state):
    off = offsets[v]
    d = offsets[v + 1] - off
    if d == U64(0):
        return state, EMPTY, False
    state, z = _next(state)
    return state, edge_vec[off + z % d], True


@njit
def _sample_subrange(offsets, edge_vec, ab_offsets, ab_attrs, ab_begins,
                     ab_ends, user_attrs, v, state):
    """Uniform pick over the union of subranges matching the user's
    attributes; falls back to the full slice when the union is empty.
    Deliberately not inlined: it only runs on bias-coin success."""
    off = offsets[v]
    lo = ab_offsets[v]
    hi = ab_offsets[v + 1]
    total = U64(0)
    for t in range(lo, hi):
        a = ab_attrs[t]
        for j in range(len(user_attrs)):
            if user_attrs[j] == a:
                total += U64(ab_ends[t]) - U64(ab_begins[t])
                break
    if total > U64(0):
        state, z = _next(state)
        r = z % total
        for t in range(lo, hi):
            a = ab_attrs[t]
            hit = False
            for j in range(len(user_attrs)):
                if user_attrs[j] == a:
                    hit = True
                    break
            if hit:
                span = U64(ab_ends[t]) - U64(ab_begins[t])
                if r < span:
                    return state, edge_vec[off + U64(ab_begins[t]) + r]
                r -= span
    state, z = _next(state)
    d = offsets[v + 1] - off
    return state, edge_vec[off + z % d]


@njit(cache=True, nogil=True)
def basic_walk(offsets, edge_vec, q, alpha, budget, max_len,
               keys, vals, shift, state):
    """Uniform pin->board->pin walk with restarts from q.

    Runs whole segments until the running step total reaches `budget`.
    Returns (state, tot_steps, status, err_node, occupied).
    """
    mask = U64(len(keys) - 1)
    half = np.int64(len(keys) // 2)
    occupied = np.int64(0)
    tot = np.int64(0)
    while True:
        cur = np.uint32(q)
        state, seg = _walk_len(state, alpha, max_len)
        for _ in range(seg):
            state, b, ok = _sample_uniform(offsets, edge_vec, cur, state)
            if not ok:
                return state, tot, np.int64(1), np.int64(cur), occupied
            state, nxt, ok = _sample_uniform(offsets, edge_vec, b, state)
            if not ok:
                return state, tot, np.int64(1), np.int64(b), occupied
            cur = nxt
            c, occupied = _counter_add(keys, vals, shift, mask, half,
                                       occupied, cur)
            if c < 0:
                return state, tot, np.int64(2), np.int64(-1), occupied
        tot += seg
        if tot >= budget:
            return state, tot, np.int64(0), np.int64(-1), occupied


@njit(cache=True, nogil=True)
def pixie_walk_uniform(offsets, edge_vec, q, alpha, budget, n_p, n_v,
                       max_len, keys, vals, shift, state):
    """Early-stopping walk, uniform sampling (bias cannot apply).

    Stops at the first segment boundary where tot >= budget or more
    than n_p pins have reached n_v visits.
    Returns (state, tot_steps, early, status, err_node, occupied).
    """
    mask = U64(len(keys) - 1)
    half = np.int64(len(keys) // 2)
    occupied = np.int64(0)
    tot = np.int64(0)
    n_high = np.int64(0)
    while True:
        cur = np.uint32(q)
        state, seg = _walk_len(state, alpha, max_len)
        for _ in range(seg):
            state, b, ok = _sample_uniform(offsets, edge_vec, cur, state)
            if not ok:
                return state, tot, np.int64(0), np.int64(1), np.int64(cur), occupied
            state, nxt, ok = _sample_uniform(offsets, edge_vec, b, state)
            if not ok:
                return state, tot, np.int64(0), np.int64(1), np.int64(b), occupied
            cur = nxt
            c, occupied = _counter_add(keys, vals, shift, mask, half,
                                       occupied, cur)
            if c < 0:
                return state, tot, np.int64(0), np.int64(2), np.int64(-1), occupied
            if c == n_v:
                n_high += 1
        tot += seg
        if tot >= budget or n_high > n_p:
            early = np.int64(1) if tot < budget else np.int64(0)
            return state, tot, early, np.int64(0), np.int64(-1), occupied


@njit(cache=True, nogil=True)
def pixie_walk_biased(offsets, edge_vec, ab_offsets, ab_attrs, ab_begins,
                      ab_ends, user_attrs, q, alpha, budget, n_p, n_v, beta,
                      max_len, keys, vals, shift, state):
    """Early-stopping walk with attribute-biased edge selection.

    Per hop: one bias coin; on success the neighbor comes from the
    union of subranges matching the user's attributes (if non-empty),
    otherwise from the whole slice.
    Returns (state, tot_steps, early, status, err_node, occupied).
    """
    mask = U64(len(keys) - 1)
    half = np.int64(len(keys) // 2)
    occupied = np.int64(0)
    tot = np.int64(0)
    n_high = np.int64(0)
    while True:
        cur = np.uint32(q)
        state, seg = _walk_len(state, alpha, max_len)
        for _ in range(seg):
            d = offsets[cur + 1] - offsets[cur]
            if d == U64(0):
                return state, tot, np.int64(0), np.int64(1), np.int64(cur), occupied
            state, u = _next_unit(state)
            if u <= beta:
                state, b = _sample_subrange(offsets, edge_vec, ab_offsets,
                                            ab_attrs, ab_begins, ab_ends,
                                            user_attrs, cur, state)
            else:
                state, z = _next(state)
                b = edge_vec[offsets[cur] + z % d]
            d = offsets[b + 1] - offsets[b]
            if d == U64(0):
                return state, tot, np.int64(0), np.int64(1), np.int64(b), occupied
            state, u = _next_unit(state)
            if u <= beta:
                state, nxt = _sample_subrange(offsets, edge_vec, ab_offsets,
                                              ab_attrs, ab_begins, ab_ends,
                                              user_attrs, b, state)
            else:
                state, z = _next(state)
                nxt = edge_vec[offsets[b] + z % d]
            cur = nxt
            c, occupied = _counter_add(keys, vals, shift, mask, half,
                                       occupied, cur)
            if c < 0:
                return state, tot, np.int64(0), np.int64(2), np.int64(-1), occupied
            if c == n_v:
                n_high += 1
        tot += seg
        if tot >= budget or n_high > n_p:
            early = np.int64(1) if tot < budget else np.int64(0)
            return state, tot, early, np.int64(0), np.int64(-1), occupied


@njit(cache=True, nogil=True)
def counter_compact(keys, vals, out_keys, out_vals):
    """Copy occupied slots, in slot order, into the out arrays."""
    n = 0
    for i in range(len(keys)):
        if keys[i] != EMPTY:
            out_keys[n] = keys[i]
            out_vals[n] = vals[i]
            n += 1
    return n


@njit(cache=True)
def sample_walk_lengths(state, alpha, cap, n, out):
    """Batch walk-length draws; test hook for distribution checks."""
    for i in range(n):
        state, L = _walk_len(state, alpha, cap)
        out[i] = L
    return state
