"""JIT-compiled tight loops.

Everything here is a strict sequential fold (or a per-row probe loop) so
results are bit-identical to a scalar reference loop regardless of how the
input is chunked. Do NOT replace the folds with numpy reductions: np.sum and
np.add.reduceat use pairwise summation, which changes float results when
chunk boundaries move.

All kernels are nogil so in-process workers can overlap on multicore hosts.
"""

import numpy as np
from numba import njit

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)
_BYTE_MASK = np.uint64(0xFF)

# bounds-based overflow checks: numba emits nsw arithmetic, so a wrap-and-test
# (t = s + x; t < s) gets optimized away as impossible — never test after adding
_I64_MAX = np.int64(9223372036854775807)
_I64_MIN = np.int64(-9223372036854775807 - 1)


# --- FNV-1a row hashing -----------------------------------------------------

@njit(cache=True, nogil=True)
def fnv_feed_int64(vals_u64, h):
    """Fold the 8 little-endian bytes of each value into each row hash."""
    for r in range(vals_u64.shape[0]):
        x = vals_u64[r]
        hh = h[r]
        for shift in range(0, 64, 8):
            hh = (hh ^ ((x >> np.uint64(shift)) & _BYTE_MASK)) * FNV_PRIME
        h[r] = hh


@njit(cache=True, nogil=True)
def fnv_feed_byte(b, h):
    """Fold one literal byte (column separator) into each row hash."""
    bb = np.uint64(b)
    for r in range(h.shape[0]):
        h[r] = (h[r] ^ bb) * FNV_PRIME


@njit(cache=True, nogil=True)
def fnv_feed_strings(offsets, data, h):
    """Fold each row's raw UTF-8 bytes into each row hash."""
    for r in range(h.shape[0]):
        hh = h[r]
        for j in range(np.int64(offsets[r]), np.int64(offsets[r + 1])):
            hh = (hh ^ np.uint64(data[j])) * FNV_PRIME
        h[r] = hh


# --- sequential folds (bulk reduction) ---------------------------------------

@njit(cache=True, nogil=True)
def fold_sum_f8(arr, s0):
    s = s0
    for i in range(arr.shape[0]):
        s = s + arr[i]
    return s


@njit(cache=True, nogil=True)
def fold_sum_i8(arr, s0):
    """Checked int64 sum. Returns (sum, ok); ok=False on signed overflow."""
    s = s0
    for i in range(arr.shape[0]):
        x = arr[i]
        if x >= 0:
            if s > _I64_MAX - x:
                return s, False
        elif s < _I64_MIN - x:
            return s, False
        s = s + x
    return s, True


@njit(cache=True, nogil=True)
def fold_sumsq_sum_f8(arr, sq0, s0):
    sq = sq0
    s = s0
    for i in range(arr.shape[0]):
        x = arr[i]
        sq = sq + x * x
        s = s + x
    return sq, s


@njit(cache=True, nogil=True)
def fold_min_f8(arr, cur, has):
    """Returns (min, has_value, nan_seen). Stops at the first NaN."""
    for i in range(arr.shape[0]):
        x = arr[i]
        if x != x:
            return cur, has, True
        if not has or x < cur:
            cur = x
            has = True
    return cur, has, False


@njit(cache=True, nogil=True)
def fold_max_f8(arr, cur, has):
    for i in range(arr.shape[0]):
        x = arr[i]
        if x != x:
            return cur, has, True
        if not has or x > cur:
            cur = x
            has = True
    return cur, has, False


@njit(cache=True, nogil=True)
def fold_min_i8(arr, cur, has):
    for i in range(arr.shape[0]):
        x = arr[i]
        if not has or x < cur:
            cur = x
            has = True
    return cur, has


@njit(cache=True, nogil=True)
def fold_max_i8(arr, cur, has):
    for i in range(arr.shape[0]):
        x = arr[i]
        if not has or x > cur:
            cur = x
            has = True
    return cur, has


# --- segmented folds (pipeline group-by run slices) ---------------------------

@njit(cache=True, nogil=True)
def seg_sum_f8(vals, starts, ends, out):
    for g in range(starts.shape[0]):
        s = 0.0
        for i in range(starts[g], ends[g]):
            s = s + vals[i]
        out[g] = s


@njit(cache=True, nogil=True)
def seg_sum_i8(vals, starts, ends, out):
    """Checked per-segment int64 sums; returns False on overflow."""
    for g in range(starts.shape[0]):
        s = np.int64(0)
        for i in range(starts[g], ends[g]):
            x = vals[i]
            if x >= 0:
                if s > _I64_MAX - x:
                    return False
            elif s < _I64_MIN - x:
                return False
            s = s + x
        out[g] = s
    return True


@njit(cache=True, nogil=True)
def seg_sumsq_sum_f8(vals, starts, ends, out_sq, out_s):
    for g in range(starts.shape[0]):
        sq = 0.0
        s = 0.0
        for i in range(starts[g], ends[g]):
            x = vals[i]
            sq = sq + x * x
            s = s + x
        out_sq[g] = sq
        out_s[g] = s


@njit(cache=True, nogil=True)
def seg_min_f8(vals, starts, ends, out):
    """Per-segment minima over non-empty segments; returns True if NaN seen."""
    for g in range(starts.shape[0]):
        m = vals[starts[g]]
        if m != m:
            return True
        for i in range(starts[g] + 1, ends[g]):
            x = vals[i]
            if x != x:
                return True
            if x < m:
                m = x
        out[g] = m
    return False


@njit(cache=True, nogil=True)
def seg_max_f8(vals, starts, ends, out):
    for g in range(starts.shape[0]):
        m = vals[starts[g]]
        if m != m:
            return True
        for i in range(starts[g] + 1, ends[g]):
            x = vals[i]
            if x != x:
                return True
            if x > m:
                m = x
        out[g] = m
    return False


@njit(cache=True, nogil=True)
def seg_min_i8(vals, starts, ends, out):
    for g in range(starts.shape[0]):
        m = vals[starts[g]]
        for i in range(starts[g] + 1, ends[g]):
            if vals[i] < m:
                m = vals[i]
        out[g] = m


@njit(cache=True, nogil=True)
def seg_max_i8(vals, starts, ends, out):
    for g in range(starts.shape[0]):
        m = vals[starts[g]]
        for i in range(starts[g] + 1, ends[g]):
            if vals[i] > m:
                m = vals[i]
        out[g] = m


# --- per-group accumulation ---------------------------------------------------

@njit(cache=True, nogil=True)
def group_sum_i8(vals, gid, acc):
    """Checked int64 row-order accumulation into acc[gid]; False on overflow."""
    for i in range(vals.shape[0]):
        g = gid[i]
        x = vals[i]
        s = acc[g]
        if x >= 0:
            if s > _I64_MAX - x:
                return False
        elif s < _I64_MIN - x:
            return False
        acc[g] = s + x
    return True


# --- open-addressing group-id assignment --------------------------------------

@njit(cache=True, nogil=True)
def group_ids_int_keys(keys, hashes, out_gid):
    """Assign dense group ids in first-occurrence order via linear probing.

    keys: (n, k) int64, C-contiguous. hashes: (n,) uint64 FNV row hashes.
    Table capacity is the next power of two >= 2n (load factor <= 0.5).
    Returns (n_groups, probes, rep_rows) where rep_rows[g] is the first row
    of group g; equal keys share a probe path so the first occurrence wins.
    """
    n = keys.shape[0]
    k = keys.shape[1]
    cap = 16
    while cap < 2 * n:
        cap <<= 1
    mask = np.uint64(cap - 1)
    # int32 slots: rows are bounded by 2^31 and the table is the dominant
    # allocation at large N_P
    slot_row = np.full(cap, -1, np.int32)
    slot_gid = np.zeros(cap, np.int32)
    rep = np.empty(n, np.int64)
    ngroups = 0
    probes = 0
    for r in range(n):
        pos = np.int64(hashes[r] & mask)
        while True:
            probes += 1
            q = np.int64(slot_row[pos])
            if q < 0:
                slot_row[pos] = r
                slot_gid[pos] = ngroups
                rep[ngroups] = r
                out_gid[r] = ngroups
                ngroups += 1
                break
            eq = True
            for c in range(k):
                if keys[r, c] != keys[q, c]:
                    eq = False
                    break
            if eq:
                out_gid[r] = slot_gid[pos]
                break
            pos = np.int64((np.uint64(pos) + np.uint64(1)) & mask)
    return ngroups, probes, rep[:ngroups].copy()


# --- UTF-8 column helpers -----------------------------------------------------

@njit(cache=True, nogil=True)
def gather_strings(offsets, data, idx):
    """Row gather for a string chunk; returns (new_offsets, new_data)."""
    n = idx.shape[0]
    new_off = np.empty(n + 1, np.uint32)
    new_off[0] = 0
    total = np.int64(0)
    for i in range(n):
        r = idx[i]
        total += np.int64(offsets[r + 1]) - np.int64(offsets[r])
        new_off[i + 1] = np.uint32(total)
    out = np.empty(total, np.uint8)
    pos = np.int64(0)
    for i in range(n):
        r = idx[i]
        for j in range(np.int64(offsets[r]), np.int64(offsets[r + 1])):
            out[pos] = data[j]
            pos += 1
    return new_off, out


@njit(cache=True, nogil=True)
def str_adjacent_cmp(offsets, data, out):
    """out[i] = -1/0/1 comparing row i to row i+1 by raw byte order.

    UTF-8 byte order equals code-point order, so this matches str comparison.
    """
    for i in range(out.shape[0]):
        a0 = np.int64(offsets[i])
        a1 = np.int64(offsets[i + 1])
        b1 = np.int64(offsets[i + 2])
        la = a1 - a0
        lb = b1 - a1
        m = la if la < lb else lb
        c = 0
        for j in range(m):
            da = data[a0 + j]
            db = data[a1 + j]
            if da < db:
                c = -1
                break
            if da > db:
                c = 1
                break
        if c == 0:
            if la < lb:
                c = -1
            elif la > lb:
                c = 1
        out[i] = c


def warm():
    """Compile (or cache-load) every kernel specialization the engine uses.

    Numba types arrays per-argument including mutability, and tables freeze
    their buffers, so the reliable way to cover the real signature set is to
    push a miniature workload through the public engine paths themselves.
    Compilation results are disk-cached; later processes only pay cache loads.
    """
    from .agg import AggregateKind, aggregate_column
    from .groupby import (
        EmitMode,
        GroupByRequest,
        Strategy,
        groupby,
        merge_grouped_states,
    )
    from .table import Table, hash_partition, sort_by_keys, take_rows

    t = Table.from_pydict(
        {
            "k": [1, 2, 1, 2],
            "s": ["a", "b", "a", "c"],
            "i": [5, -1, 3, 5],
            "v": [0.5, 1.5, 2.5, 3.5],
        }
    )
    for kind in AggregateKind:
        aggregate_column(t.columns[2], kind)
        aggregate_column(t.columns[3], kind)
    aggregate_column(t.columns[1], AggregateKind.COUNT)
    take_rows(t, [3, 0, 2])
    hash_partition(t, [0, 1], 2)
    aggs = tuple((c, k) for c in (2, 3) for k in AggregateKind)
    for strategy in (Strategy.HASH, Strategy.PIPELINE):
        for emit in (EmitMode.FINALIZED, EmitMode.INTERMEDIATE):
            req = GroupByRequest((0, 1), aggs, emit)
            result = groupby(t, req, strategy)
        merge_grouped_states(result.table, 2, result.layouts, strategy)
    sort_by_keys(t, [0, 1])
