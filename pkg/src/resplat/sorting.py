"""Per-tile depth sorting: from-scratch baseline and incremental reorder.

A tile's sort state is a :class:`GaussianTable` of (id, float32 depth
key, valid bit) entries ordered by the lexicographic (depth_key, id)
relation. Three sorting paths operate on it:

* :func:`full_sort` - conventional from-scratch sort (baseline and the
  first-frame bootstrap), billed at the modeled multi-pass radix cost.
* :func:`dynamic_partial_sort` - one single-pass repair of a nearly
  sorted table: the table is cut into chunk ranges, each range is sorted
  independently, and the cut points shift by half a chunk on alternating
  frames so entries can migrate across chunk boundaries over successive
  frames. Each invocation reads and writes every entry exactly once.
* :func:`merge_update` - one streaming merge pass that simultaneously
  inserts the frame's sorted incoming entries and drops entries whose
  valid bit was cleared by the previous rasterization, without any
  per-deletion shifting.

All comparisons reduce to unsigned 64-bit rank keys (monotone-mapped
float32 bits above the id), so ordering is total, deterministic, and
identical across code paths. Range sorting runs on fixed compare-exchange
networks (16-lane blocks, then pairwise bitonic merges), vectorized
across all ranges of a call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .traffic import CostModel, DEFAULT_COST_MODEL, TrafficLedger, baseline_sort_rw

PAD_RANK = np.uint64(0xFFFFFFFFFFFFFFFF)
_VALID_BIT = np.uint32(0x80000000)


@dataclass(frozen=True)
class ChunkConfig:
    """Chunk geometry: ``chunk`` entries per range, ``sub``-lane sort blocks."""

    chunk: int = 256
    sub: int = 16

    def __post_init__(self):
        if self.chunk < 2 or self.chunk % 2 != 0:
            raise ValueError("chunk size must be an even integer >= 2")
        if self.sub < 2 or (self.sub & (self.sub - 1)) != 0:
            raise ValueError("sub-block width must be a power of two >= 2")
        if self.chunk % self.sub != 0:
            raise ValueError("chunk size must be a multiple of the sub-block width")


DEFAULT_CHUNK_CONFIG = ChunkConfig()


@dataclass
class TableEntry:
    id: int
    depth_key: float
    valid: bool = True

    def order_key(self) -> tuple[float, int]:
        return (self.depth_key, self.id)


@dataclass
class GaussianTable:
    """Depth-ordered (id, key, valid) arrays for one tile."""

    tile_id: int
    ids: np.ndarray                     # (L,) int32
    keys: np.ndarray                    # (L,) float32
    valid: np.ndarray                   # (L,) bool
    fully_sorted: bool = False

    def __post_init__(self):
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        self.keys = np.ascontiguousarray(self.keys, dtype=np.float32)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if not (self.ids.shape == self.keys.shape == self.valid.shape) or self.ids.ndim != 1:
            raise ValueError("ids, keys, valid must be 1-D arrays of equal length")
        if len(self.ids) and self.ids.min() < 0:
            raise ValueError("ids must be non-negative")
        if not np.all(np.isfinite(self.keys)):
            raise ValueError("depth keys must be finite")
        # Canonical +0.0 keeps the packed rank a bijection on (key, id).
        if np.any(self.keys == 0.0):
            self.keys = np.where(self.keys == 0.0, np.float32(0.0), self.keys)

    def __len__(self) -> int:
        return len(self.ids)

    def rank(self) -> np.ndarray:
        return pack_rank(self.keys, self.ids)

    def is_sorted(self) -> bool:
        r = self.rank()
        return bool(np.all(r[1:] > r[:-1]))

    def permuted(self, perm: np.ndarray, fully_sorted: bool = False) -> "GaussianTable":
        return GaussianTable(self.tile_id, self.ids[perm], self.keys[perm],
                             self.valid[perm], fully_sorted=fully_sorted)

    def entries(self) -> list[TableEntry]:
        return [TableEntry(int(i), float(k), bool(v))
                for i, k, v in zip(self.ids, self.keys, self.valid)]

    @classmethod
    def empty(cls, tile_id: int = 0) -> "GaussianTable":
        return cls(tile_id, np.empty(0, np.int32), np.empty(0, np.float32),
                   np.empty(0, bool), fully_sorted=True)

    @classmethod
    def from_entries(cls, entries: list[TableEntry], tile_id: int = 0,
                     fully_sorted: bool = False) -> "GaussianTable":
        return cls(
            tile_id,
            np.array([e.id for e in entries], dtype=np.int32),
            np.array([e.depth_key for e in entries], dtype=np.float32),
            np.array([e.valid for e in entries], dtype=bool),
            fully_sorted=fully_sorted,
        )


def pack_rank(keys: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Total-order uint64 rank: monotone float32 key bits above the id.

    Ascending rank order equals ascending (depth_key, id) order. Negative
    zero keys are canonicalized to +0.0 so equal keys compare equal.
    """
    keys = np.ascontiguousarray(keys, dtype=np.float32)
    if not np.all(np.isfinite(keys)):
        raise ValueError("depth keys must be finite")
    keys = np.where(keys == 0.0, np.float32(0.0), keys)
    u = keys.view(np.uint32)
    mapped = np.where(u & np.uint32(0x80000000), ~u, u | np.uint32(0x80000000))
    return (mapped.astype(np.uint64) << np.uint64(32)) | np.asarray(ids).astype(np.uint64)


def unpack_rank(rank: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack_rank`: (keys float32, ids int32)."""
    rank = np.asarray(rank, dtype=np.uint64)
    mapped = (rank >> np.uint64(32)).astype(np.uint32)
    u = np.where(mapped & np.uint32(0x80000000), mapped ^ np.uint32(0x80000000), ~mapped)
    keys = u.view(np.float32).copy()
    ids = (rank & np.uint64(0xFFFFFFFF)).astype(np.int64).astype(np.int32)
    return keys, ids


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


@lru_cache(maxsize=None)
def _descending_groups(n: int, k: int, j: int) -> np.ndarray | None:
    """Per-group descent mask of the (k, j) sorting-network layer.

    Lanes reshape to (n // (2j), 2, j) groups; group g compares descending
    when lane bit k is set, i.e. when (g * 2j) & k != 0. Returns None when
    every group is ascending.
    """
    desc = (np.arange(n // (2 * j)) * 2 * j) & k != 0
    return desc if desc.any() else None


def _compare_exchange(ranks: np.ndarray, payload: np.ndarray | None, j: int,
                      desc: np.ndarray | None) -> None:
    """One network layer at stride ``j`` over the rows of (B, n) arrays.

    Works on contiguous reshaped views; equal ranks never swap ascending,
    and the only duplicate rank is the pad value, whose payload is also
    identical, so the descending XOR form is order-safe.
    """
    n_rows, width = ranks.shape
    r4 = ranks.reshape(n_rows, width // (2 * j), 2, j)
    a, b = r4[:, :, 0, :], r4[:, :, 1, :]
    swap = a > b
    if desc is not None:
        swap = swap ^ desc[None, :, None]
    lo = np.where(swap, b, a)
    hi = np.where(swap, a, b)
    if payload is not None:
        p4 = payload.reshape(n_rows, width // (2 * j), 2, j)
        pa, pb = p4[:, :, 0, :], p4[:, :, 1, :]
        plo = np.where(swap, pb, pa)
        phi = np.where(swap, pa, pb)
        p4[:, :, 0, :] = plo
        p4[:, :, 1, :] = phi
    r4[:, :, 0, :] = lo
    r4[:, :, 1, :] = hi


def _sort_rows(ranks: np.ndarray, payload: np.ndarray | None) -> None:
    """Full sorting network over each row of contiguous (B, n) arrays."""
    n = ranks.shape[1]
    k = 2
    while k <= n:
        j = k >> 1
        while j >= 1:
            _compare_exchange(ranks, payload, j, _descending_groups(n, k, j))
            j >>= 1
        k <<= 1


def _merge_rows(ranks: np.ndarray, payload: np.ndarray | None) -> None:
    """Bitonic-merge network over each (already bitonic) row."""
    j = ranks.shape[1] >> 1
    while j >= 1:
        _compare_exchange(ranks, payload, j, None)
        j >>= 1


def _sort_spans(ranks: np.ndarray, payload: np.ndarray | None, sub: int) -> None:
    """Fully sort each row of (R, W) rank/payload matrices in place.

    W must be a power-of-two multiple of ``sub``; tails are expected to be
    PAD_RANK, which sorts to the end of each row. Rows are first sorted in
    ``sub``-lane network blocks, then adjacent sorted runs are merged in
    pairwise bitonic rounds of doubling width, all vectorized across rows.
    """
    n_rows, width = ranks.shape
    if width == 0 or n_rows == 0:
        return
    block = min(sub, width)
    _sort_rows(ranks.reshape(-1, block),
               payload.reshape(-1, block) if payload is not None else None)
    run = block
    while run < width:
        r2 = ranks.reshape(-1, 2, run)
        r2[:, 1] = r2[:, 1, ::-1].copy()
        if payload is not None:
            p2 = payload.reshape(-1, 2, run)
            p2[:, 1] = p2[:, 1, ::-1].copy()
        _merge_rows(ranks.reshape(-1, 2 * run),
                    payload.reshape(-1, 2 * run) if payload is not None else None)
        run *= 2


def _sorted_permutation(rank: np.ndarray, sub: int = 16) -> np.ndarray:
    """Permutation fully sorting ``rank`` via the network machinery."""
    n = len(rank)
    if n == 0:
        return np.empty(0, dtype=np.intp)
    width = _next_pow2(max(n, sub))
    mat = np.full((1, width), PAD_RANK, dtype=np.uint64)
    pay = np.full((1, width), -1, dtype=np.intp)
    mat[0, :n] = rank
    pay[0, :n] = np.arange(n, dtype=np.intp)
    _sort_spans(mat, pay, sub)
    return pay[0, :n]


# ---------------------------------------------------------------------------
# Public sorting operations


def chunk_boundaries(length: int, chunk: int, parity: str) -> list[tuple[int, int]]:
    """Half-open sort ranges partitioning [0, length).

    Odd parity cuts at multiples of ``chunk``; even parity starts with a
    half chunk and then cuts at ``chunk`` strides, so the two parities'
    boundaries interleave. The final range is clipped to ``length``.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    if chunk < 2:
        raise ValueError("chunk must be >= 2")
    if parity not in ("odd", "even"):
        raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
    if length == 0:
        return []
    first = chunk if parity == "odd" else chunk // 2
    ranges = [(0, min(first, length))]
    while ranges[-1][1] < length:
        start = ranges[-1][1]
        ranges.append((start, min(start + chunk, length)))
    return ranges


def bitonic_sort16(entries: list[TableEntry]) -> list[TableEntry]:
    """Sort up to 16 entries on the fixed 16-lane compare-exchange network.

    Unused lanes are padded with a rank above every real key; padding
    never appears in the output.
    """
    if len(entries) > 16:
        raise ValueError("bitonic_sort16 takes at most 16 entries")
    if not entries:
        return []
    table = GaussianTable.from_entries(entries)
    mat = np.full((1, 16), PAD_RANK, dtype=np.uint64)
    pay = np.full((1, 16), -1, dtype=np.intp)
    mat[0, :len(entries)] = table.rank()
    pay[0, :len(entries)] = np.arange(len(entries), dtype=np.intp)
    _sort_rows(mat, pay)
    order = pay[0, :len(entries)]
    return [entries[i] for i in order]


def merge_runs(runs: list[list[TableEntry]], verify: bool = False) -> list[TableEntry]:
    """Stable k-way merge of sorted runs under (depth_key, id).

    With ``verify`` set, an unsorted input run raises ValueError. The
    merge is a left fold of streaming two-pointer merges, so equal keys
    keep their concatenation order.
    """
    if verify:
        for i, run in enumerate(runs):
            keys = [e.order_key() for e in run]
            if any(k2 < k1 for k1, k2 in zip(keys, keys[1:])):
                raise ValueError(f"input run {i} is not sorted")
    merged: list[TableEntry] = []
    for run in runs:
        if not merged:
            merged = list(run)
            continue
        out = []
        i = j = 0
        while i < len(merged) and j < len(run):
            if merged[i].order_key() <= run[j].order_key():
                out.append(merged[i])
                i += 1
            else:
                out.append(run[j])
                j += 1
        out.extend(merged[i:])
        out.extend(run[j:])
        merged = out
    return merged


def full_sort(ids: np.ndarray, keys: np.ndarray, valid: np.ndarray | None = None,
              *, tile_id: int = 0, cfg: ChunkConfig = DEFAULT_CHUNK_CONFIG,
              ledger: TrafficLedger | None = None,
              model: CostModel = DEFAULT_COST_MODEL) -> GaussianTable:
    """From-scratch sort of a tile's entries; drops invalid ones.

    Bills the modeled from-scratch cost (duplication write, initial read,
    and the multi-pass radix sweeps) for the given entry count.
    """
    ids = np.ascontiguousarray(ids, dtype=np.int32)
    keys = np.ascontiguousarray(keys, dtype=np.float32)
    n_in = len(ids)
    if len(np.unique(ids)) != n_in:
        raise ValueError("duplicate ids in full_sort input")
    if valid is not None:
        mask = np.ascontiguousarray(valid, dtype=bool)
        ids, keys = ids[mask], keys[mask]
    if ledger is not None:
        read, write = baseline_sort_rw(n_in, model)
        ledger.record("sort_reorder", read, write)
    perm = _sorted_permutation(pack_rank(keys, ids), cfg.sub)
    return GaussianTable(tile_id, ids[perm], keys[perm],
                         np.ones(len(perm), dtype=bool), fully_sorted=True)


def dynamic_partial_sort(table: GaussianTable, frame_index: int,
                         cfg: ChunkConfig = DEFAULT_CHUNK_CONFIG, *,
                         ledger: TrafficLedger | None = None,
                         model: CostModel = DEFAULT_COST_MODEL) -> GaussianTable:
    """Single-pass chunk-range repair of a nearly sorted table.

    The frame index picks the boundary parity (odd frames use full-chunk
    ranges from 0, even frames shift the cuts by half a chunk); each range
    is sorted independently. Exactly one read and one write of every entry
    is billed, whatever the table's disorder.
    """
    return dynamic_partial_sort_many([table], frame_index, cfg,
                                     ledger=ledger, model=model)[0]


def dynamic_partial_sort_many(tables: list[GaussianTable], frame_index: int,
                              cfg: ChunkConfig = DEFAULT_CHUNK_CONFIG, *,
                              ledger: TrafficLedger | None = None,
                              model: CostModel = DEFAULT_COST_MODEL) -> list[GaussianTable]:
    """Apply :func:`dynamic_partial_sort` to equal-length tables at once.

    Identical semantics per table; the compare-exchange networks run
    vectorized across every range of every table, which matters when
    thousands of tables are repaired per step (property sweeps, batch
    experiments).
    """
    if frame_index < 1:
        raise ValueError("frame_index must be >= 1")
    if not tables:
        return []
    length = len(tables[0])
    if any(len(t) != length for t in tables):
        raise ValueError("batched tables must share one length")
    n_tables = len(tables)
    if ledger is not None:
        per = length * model.entry_bytes
        ledger.record("sort_reorder", n_tables * per, n_tables * per)
    if length == 0:
        return [GaussianTable.empty(t.tile_id) for t in tables]
    batch = TableBatch(
        np.array([t.tile_id for t in tables], dtype=np.int64),
        np.stack([t.ids for t in tables]),
        np.stack([t.keys for t in tables]),
        np.stack([t.valid for t in tables]),
    ).partial_sort_pass(frame_index, cfg, ledger=None, model=model)
    return batch.to_tables()


def _span_views(rank_flat: np.ndarray, n_tables: int, length: int,
                ranges: list[tuple[int, int]], width: int):
    """Span matrices (rows = every range of every table, padded to width)."""
    starts = np.array([s for s, _ in ranges], dtype=np.int64)
    ends = np.array([e for _, e in ranges], dtype=np.int64)
    offs = np.arange(n_tables, dtype=np.int64)[:, None] * length
    base = (offs + starts[None, :]).ravel()
    limit = (offs + ends[None, :]).ravel()
    idx = base[:, None] + np.arange(width, dtype=np.int64)[None, :]
    live = idx < limit[:, None]
    safe = np.minimum(idx, n_tables * length - 1)
    mat = np.where(live, rank_flat[safe], PAD_RANK)
    return mat, safe, live


class TableBatch:
    """Equal-length tables held as matrices for batched sort passes.

    Large sweeps (convergence properties, batch experiments) stay in
    matrix form between passes instead of rebuilding table objects; each
    pass is semantically identical to :func:`dynamic_partial_sort` on
    every table. When every entry is valid, the pass runs on rank keys
    alone and ids/keys are recovered from the sorted ranks exactly.
    """

    def __init__(self, tile_ids: np.ndarray, ids: np.ndarray, keys: np.ndarray,
                 valid: np.ndarray, rank: np.ndarray | None = None):
        self.tile_ids = np.asarray(tile_ids, dtype=np.int64)
        self.ids = np.ascontiguousarray(ids, dtype=np.int32)
        self.keys = np.ascontiguousarray(keys, dtype=np.float32)
        if np.any(self.keys == 0.0):
            self.keys = np.where(self.keys == 0.0, np.float32(0.0), self.keys)
        self.valid = np.ascontiguousarray(valid, dtype=bool)
        if (self.ids.ndim != 2 or self.ids.shape != self.keys.shape
                or self.ids.shape != self.valid.shape):
            raise ValueError("ids, keys, valid must share one (B, L) shape")
        self._rank = rank

    @classmethod
    def from_tables(cls, tables: list[GaussianTable]) -> "TableBatch":
        if not tables:
            raise ValueError("need at least one table")
        if any(len(t) != len(tables[0]) for t in tables):
            raise ValueError("batched tables must share one length")
        return cls(np.array([t.tile_id for t in tables], dtype=np.int64),
                   np.stack([t.ids for t in tables]),
                   np.stack([t.keys for t in tables]),
                   np.stack([t.valid for t in tables]))

    @property
    def n_tables(self) -> int:
        return self.ids.shape[0]

    @property
    def length(self) -> int:
        return self.ids.shape[1]

    def rank(self) -> np.ndarray:
        if self._rank is None:
            self._rank = pack_rank(self.keys.ravel(), self.ids.ravel()).reshape(self.ids.shape)
        return self._rank

    def sorted_mask(self) -> np.ndarray:
        r = self.rank()
        return np.all(r[:, 1:] > r[:, :-1], axis=1)

    def partial_sort_pass(self, frame_index: int, cfg: ChunkConfig = DEFAULT_CHUNK_CONFIG, *,
                          ledger: TrafficLedger | None = None,
                          model: CostModel = DEFAULT_COST_MODEL) -> "TableBatch":
        if frame_index < 1:
            raise ValueError("frame_index must be >= 1")
        n_tables, length = self.ids.shape
        if ledger is not None:
            per = length * model.entry_bytes
            ledger.record("sort_reorder", n_tables * per, n_tables * per)
        if length == 0:
            return self
        parity = "odd" if frame_index % 2 == 1 else "even"
        ranges = chunk_boundaries(length, cfg.chunk, parity)
        width = _next_pow2(max(cfg.chunk, cfg.sub))
        rank_flat = self.rank().ravel()
        mat, safe, live = _span_views(rank_flat, n_tables, length, ranges, width)
        if self.valid.all():
            _sort_spans(mat, None, cfg.sub)
            new_rank = mat[live].reshape(n_tables, length)
            keys, ids = unpack_rank(new_rank.ravel())
            return TableBatch(self.tile_ids, ids.reshape(n_tables, length),
                              keys.reshape(n_tables, length), self.valid,
                              rank=new_rank)
        pay = np.where(live, safe, np.int64(-1))
        _sort_spans(mat, pay, cfg.sub)
        perm = (pay[pay >= 0].reshape(n_tables, length)
                - np.arange(n_tables, dtype=np.int64)[:, None] * length)
        return TableBatch(self.tile_ids,
                          np.take_along_axis(self.ids, perm, axis=1),
                          np.take_along_axis(self.keys, perm, axis=1),
                          np.take_along_axis(self.valid, perm, axis=1))

    def to_tables(self) -> list[GaussianTable]:
        flags = self.sorted_mask()
        return [
            GaussianTable(int(self.tile_ids[b]), self.ids[b], self.keys[b], self.valid[b],
                          fully_sorted=bool(flags[b]))
            for b in range(self.n_tables)
        ]


def sort_incoming(ids: np.ndarray, keys: np.ndarray, *,
                  cfg: ChunkConfig = DEFAULT_CHUNK_CONFIG,
                  ledger: TrafficLedger | None = None,
                  model: CostModel = DEFAULT_COST_MODEL) -> tuple[np.ndarray, np.ndarray]:
    """Sort a tile's incoming entries by (depth_key, id).

    Bills one read and one write of the incoming entries only.
    """
    ids = np.ascontiguousarray(ids, dtype=np.int32)
    keys = np.ascontiguousarray(keys, dtype=np.float32)
    if ledger is not None:
        n = len(ids)
        ledger.record("sort_incoming", n * model.entry_bytes, n * model.entry_bytes)
    perm = _sorted_permutation(pack_rank(keys, ids), cfg.sub)
    return ids[perm], keys[perm]


def merge_update(reused: GaussianTable, inc_ids: np.ndarray, inc_keys: np.ndarray, *,
                 ledger: TrafficLedger | None = None,
                 model: CostModel = DEFAULT_COST_MODEL) -> GaussianTable:
    """One streaming merge pass: insert sorted incoming, drop invalid.

    Incoming entries are woven in where the table stream first exceeds
    their rank, and entries with a cleared valid bit are skipped, so
    deletion needs no shifting beyond the merge itself. When the reused
    table is fully sorted this equals the sorted union of its valid
    entries with the incoming entries. An incoming id duplicating a valid
    reused id is an error (a still-valid entry cannot be incoming);
    duplicating an invalid entry simply supersedes it.

    Bills one read and one write per incoming entry; the reused entries'
    single pass is already billed by the reorder stage.
    """
    inc_ids = np.ascontiguousarray(inc_ids, dtype=np.int32)
    inc_keys = np.ascontiguousarray(inc_keys, dtype=np.float32)
    k = len(inc_ids)
    inc_rank = pack_rank(inc_keys, inc_ids)
    if k and not np.all(inc_rank[1:] > inc_rank[:-1]):
        raise ValueError("incoming entries must be sorted by (depth_key, id)")
    if len(np.unique(inc_ids)) != k:
        raise ValueError("duplicate ids within incoming entries")
    keep = reused.valid
    kept_ids, kept_keys = reused.ids[keep], reused.keys[keep]
    if k and len(kept_ids) and np.intersect1d(kept_ids, inc_ids).size:
        raise ValueError("incoming id duplicates a valid reused entry")
    if ledger is not None:
        ledger.record("sort_merge", k * model.entry_bytes, k * model.entry_bytes)
    m = len(kept_ids)
    out_ids = np.empty(m + k, dtype=np.int32)
    out_keys = np.empty(m + k, dtype=np.float32)
    if m == 0:
        out_ids, out_keys = inc_ids.copy(), inc_keys.copy()
    elif k == 0:
        out_ids, out_keys = kept_ids.copy(), kept_keys.copy()
    else:
        kept_rank = pack_rank(kept_keys, kept_ids)
        stream_max = np.maximum.accumulate(kept_rank)
        inc_pos = np.searchsorted(stream_max, inc_rank, side="right")
        inc_out = inc_pos + np.arange(k)
        kept_out = np.arange(m) + np.searchsorted(inc_pos, np.arange(m), side="right")
        out_ids[inc_out], out_keys[inc_out] = inc_ids, inc_keys
        out_ids[kept_out], out_keys[kept_out] = kept_ids, kept_keys
    out = GaussianTable(reused.tile_id, out_ids, out_keys, np.ones(m + k, dtype=bool))
    out.fully_sorted = out.is_sorted()
    return out


# ---------------------------------------------------------------------------
# Table snapshots (versioned binary and JSON forms)

SNAPSHOT_MAGIC = b"GTBL"
SNAPSHOT_VERSION = 1


def dump_table(table: GaussianTable) -> bytes:
    """Serialize one table: the valid bit rides in the id's top bit."""
    header = np.array([int.from_bytes(SNAPSHOT_MAGIC, "little"), SNAPSHOT_VERSION,
                       table.tile_id, len(table)], dtype="<u4")
    packed = table.ids.astype(np.uint32) | np.where(table.valid, _VALID_BIT, np.uint32(0))
    body = np.empty((len(table), 2), dtype="<u4")
    body[:, 0] = packed
    body[:, 1] = table.keys.astype("<f4").view("<u4")
    return header.tobytes() + body.tobytes()


def load_table(data: bytes, offset: int = 0) -> tuple[GaussianTable, int]:
    """Parse one table at ``offset``; returns (table, next offset)."""
    header = np.frombuffer(data, dtype="<u4", count=4, offset=offset)
    if header[0].tobytes() != SNAPSHOT_MAGIC:
        raise ValueError("bad table snapshot magic")
    if header[1] != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported table snapshot version {int(header[1])}")
    tile_id, count = int(np.int32(header[2])), int(header[3])
    body = np.frombuffer(data, dtype="<u4", count=2 * count, offset=offset + 16).reshape(count, 2)
    ids = (body[:, 0] & ~_VALID_BIT).astype(np.int32)
    valid = (body[:, 0] & _VALID_BIT) != 0
    keys = body[:, 1].copy().view("<f4").astype(np.float32)
    table = GaussianTable(tile_id, ids, keys, valid)
    table.fully_sorted = table.is_sorted()
    return table, offset + 16 + 8 * count


def dump_tables(tables: list[GaussianTable]) -> bytes:
    return b"".join(dump_table(t) for t in tables)


def load_tables(data: bytes) -> list[GaussianTable]:
    tables = []
    offset = 0
    while offset < len(data):
        table, offset = load_table(data, offset)
        tables.append(table)
    return tables


def table_to_json(table: GaussianTable) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "tile_id": table.tile_id,
        "ids": table.ids.tolist(),
        "keys": [float(k) for k in table.keys],
        "valid": table.valid.tolist(),
    }


def table_from_json(data: dict) -> GaussianTable:
    if data.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported table JSON version: {data.get('version')!r}")
    table = GaussianTable(
        data["tile_id"],
        np.array(data["ids"], dtype=np.int32),
        np.array(data["keys"], dtype=np.float32),
        np.array(data["valid"], dtype=bool),
    )
    table.fully_sorted = table.is_sorted()
    return table
