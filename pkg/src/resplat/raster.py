"""Subtile rasterization: intersection bitmaps, blending, deferred updates.

Each 64x64 px tile is an 8x8 grid of 8x8 px subtiles. For every table
entry an intersection bitmap is computed on the fly (bit s set iff the
splat's opacity reaches the 1/255 cutoff at some pixel of subtile s), and
per-subtile blending only touches entries whose bit is set. An entry
whose bits OR to zero contributed nothing anywhere in the tile and is
flagged invalid so the next frame's merge drops it.

The intersection test is exact over the subtile's 8x8 pixel lattice: for
each pixel column the quadratic form is minimized in closed form over the
discrete rows, so the test equals a per-pixel brute-force max. Blending
is mathematically and bitwise the classic front-to-back loop (alpha below
1/255 skipped, transmittance frozen once it drops under 1e-4); it is
evaluated with cumulative products/sums, which numpy defines sequentially,
so results are bit-identical to an entry-at-a-time reference.

While features are in hand, the rasterizer also emits one depth/valid
update per table entry; applying them refreshes the table for the next
frame without re-establishing order (the next partial sort does that).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .preprocess import FeatureTable, Gaussian2D, SUBTILE_PX, TILE_PX
from .sorting import GaussianTable
from .traffic import CostModel, DEFAULT_COST_MODEL, TrafficLedger

ALPHA_CUTOFF = 1.0 / 255.0
ALPHA_CAP = 0.99
T_MIN = 1e-4
BLEND_BATCH = 32
# A splat's alpha can reach 1/255 at most this many radii from its mean
# (radius is ceil(3 sigma_max); the cutoff ellipse is sqrt(2 ln 255) sigma).
REACH_SCALE = math.sqrt(2.0 * math.log(255.0)) / 3.0
REACH_MARGIN = 0.5  # px of slack on the prefilter, cheap insurance


def _quad_form(a, b, c, dx, dy):
    """Conic quadratic form; one shared expression keeps all alpha
    evaluations bit-consistent across the bitmap and blending paths."""
    return a * dx * dx + 2.0 * b * dx * dy + c * dy * dy


def eval_alpha(g2d: Gaussian2D, pixel) -> float:
    """Splat opacity at one pixel; values below 1/255 collapse to 0."""
    px, py = float(pixel[0]), float(pixel[1])
    a, b, c = (float(v) for v in g2d.conic)
    q = _quad_form(a, b, c, px - float(g2d.mean2d[0]), py - float(g2d.mean2d[1]))
    alpha = min(ALPHA_CAP, float(g2d.opacity * np.exp(-0.5 * q)))
    return alpha if alpha >= ALPHA_CUTOFF else 0.0


def eval_alpha_batch(mx, my, a, b, c, opacity, px, py) -> np.ndarray:
    """Alphas of n splats over P pixels -> (n, P); sub-cutoff values are 0."""
    dx = px[None, :] - mx[:, None]
    dy = py[None, :] - my[:, None]
    q = _quad_form(a[:, None], b[:, None], c[:, None], dx, dy)
    alpha = np.minimum(ALPHA_CAP, opacity[:, None] * np.exp(-0.5 * q))
    return np.where(alpha < ALPHA_CUTOFF, 0.0, alpha)


# ---------------------------------------------------------------------------
# Intersection bitmaps


def _subtile_hits(mx, my, a, b, c, opacity, radius, sub_ox, sub_oy) -> np.ndarray:
    """(n, S) boolean: does splat i reach the alpha cutoff in subtile s?

    Exact over the pixel lattice: per pixel column, the row minimizing the
    quadratic form is the clamped rounding of the parabola vertex, so the
    column minimum is evaluated in closed form. ``radius`` must obey the
    projection rule (>= 3 sigma_max of the 2D covariance): the rectangle
    prefilter's reach bound derives from it.
    """
    n, n_sub = len(mx), len(sub_ox)
    hi = SUBTILE_PX - 1
    # Prefilter on the distance from the mean to the subtile rectangle.
    cpx = np.clip(mx[:, None], sub_ox[None, :], sub_ox[None, :] + hi)
    cpy = np.clip(my[:, None], sub_oy[None, :], sub_oy[None, :] + hi)
    d2 = (cpx - mx[:, None]) ** 2 + (cpy - my[:, None]) ** 2
    reach = REACH_SCALE * radius + REACH_MARGIN
    cand = d2 <= (reach * reach)[:, None]
    bits = np.zeros((n, n_sub), dtype=bool)
    ei, si = np.nonzero(cand)
    if len(ei) == 0:
        return bits
    cols = sub_ox[si][:, None] + np.arange(SUBTILE_PX, dtype=np.float64)[None, :]
    dx = cols - mx[ei][:, None]
    ystar = my[ei][:, None] - (b[ei] / c[ei])[:, None] * dx
    oy = sub_oy[si][:, None]
    ybest = np.clip(np.round(ystar), oy, oy + hi)
    dy = ybest - my[ei][:, None]
    q = _quad_form(a[ei][:, None], b[ei][:, None], c[ei][:, None], dx, dy)
    qmin = q.min(axis=1)
    alpha = np.minimum(ALPHA_CAP, opacity[ei] * np.exp(-0.5 * qmin))
    bits[ei, si] = alpha >= ALPHA_CUTOFF
    return bits


def _tile_subtile_origins(tile_origin: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.arange((TILE_PX // SUBTILE_PX) ** 2)
    ox = tile_origin[0] + (s % (TILE_PX // SUBTILE_PX)) * SUBTILE_PX
    oy = tile_origin[1] + (s // (TILE_PX // SUBTILE_PX)) * SUBTILE_PX
    return ox.astype(np.float64), oy.astype(np.float64)


def intersect_subtile(g2d: Gaussian2D, rect_origin) -> bool:
    """True iff the splat reaches the alpha cutoff at some pixel of the
    8x8 subtile whose top-left pixel is ``rect_origin``."""
    hits = _subtile_hits(
        np.array([g2d.mean2d[0]]), np.array([g2d.mean2d[1]]),
        np.array([g2d.conic[0]]), np.array([g2d.conic[1]]), np.array([g2d.conic[2]]),
        np.array([g2d.opacity]), np.array([g2d.radius]),
        np.array([float(rect_origin[0])]), np.array([float(rect_origin[1])]))
    return bool(hits[0, 0])


def pack_bitmap(bits: np.ndarray) -> np.ndarray:
    """Pack (..., 64) subtile booleans into uint64 masks, bit s = subtile s."""
    packed = np.packbits(bits.astype(np.uint8), axis=-1, bitorder="little")
    return packed.view(np.uint64).reshape(bits.shape[:-1])


def build_bitmap(g2d: Gaussian2D, tile_origin: tuple[int, int]) -> int:
    """64-bit subtile-intersection mask of one splat over one tile."""
    ox, oy = _tile_subtile_origins(tile_origin)
    hits = _subtile_hits(
        np.array([g2d.mean2d[0]]), np.array([g2d.mean2d[1]]),
        np.array([g2d.conic[0]]), np.array([g2d.conic[1]]), np.array([g2d.conic[2]]),
        np.array([g2d.opacity]), np.array([g2d.radius]), ox, oy)
    return int(pack_bitmap(hits[0]))


# ---------------------------------------------------------------------------
# Blending


def blend_pixels(mx, my, a, b, c, opacity, colors, px, py, background) -> tuple[np.ndarray, np.ndarray, int]:
    """Front-to-back blend of n ordered splats over P pixels.

    Returns (rgb (P, 3) composited over the background, final
    transmittance (P,), number of blended terms). Entries are processed
    in batches with an early stop once every pixel's transmittance has
    fallen below the termination threshold; the chaining is arranged so
    results are bit-identical to the entry-at-a-time loop.
    """
    n, n_px = len(mx), len(px)
    carry_rgb = np.zeros((1, n_px, 3))
    carry_t = np.ones((1, n_px))
    terms = 0
    for start in range(0, n, BLEND_BATCH):
        if not np.any(carry_t[0] >= T_MIN):
            break
        sl = slice(start, min(start + BLEND_BATCH, n))
        alpha = eval_alpha_batch(mx[sl], my[sl], a[sl], b[sl], c[sl], opacity[sl], px, py)
        trans = np.cumprod(np.concatenate([carry_t, 1.0 - alpha], axis=0), axis=0)
        before = trans[:-1]
        active = before >= T_MIN
        weight = alpha * before
        weight = weight * active
        terms += int(np.count_nonzero(active & (alpha > 0.0)))
        contrib = weight[:, :, None] * colors[sl][:, None, :]
        summed = np.cumsum(np.concatenate([carry_rgb, contrib], axis=0), axis=0)
        carry_rgb = summed[-1:]
        # Transmittance freezes at its first sub-threshold value.
        frozen_at = active.sum(axis=0)
        stacked = np.concatenate([before, trans[-1:]], axis=0)
        carry_t = stacked[frozen_at, np.arange(n_px)][None, :]
    rgb = carry_rgb[0] + carry_t[0][:, None] * background[None, :]
    return rgb, carry_t[0], terms


def blend_subtile(order_ids: np.ndarray, features: FeatureTable,
                  subtile_origin: tuple[int, int], background) -> np.ndarray:
    """Blend the given entries (already filtered and ordered) over one
    8x8 subtile; returns its pixels as (8, 8, 3)."""
    order_ids = np.asarray(order_ids, dtype=np.int32)
    rows, present = features.rows_for(order_ids)
    if not np.all(present):
        missing = order_ids[~present][0]
        raise KeyError(f"id {int(missing)} missing from the feature table "
                       "(table/feature desynchronization)")
    ox, oy = float(subtile_origin[0]), float(subtile_origin[1])
    px = ox + np.tile(np.arange(SUBTILE_PX, dtype=np.float64), SUBTILE_PX)
    py = oy + np.repeat(np.arange(SUBTILE_PX, dtype=np.float64), SUBTILE_PX)
    rgb, _, _ = blend_pixels(
        features.mean2d[rows, 0], features.mean2d[rows, 1],
        features.conic[rows, 0], features.conic[rows, 1], features.conic[rows, 2],
        features.opacity[rows], features.color[rows], px, py,
        np.asarray(background, dtype=np.float64))
    return rgb.reshape(SUBTILE_PX, SUBTILE_PX, 3)


# ---------------------------------------------------------------------------
# Tile rasterization and deferred updates


@dataclass
class EntryUpdates:
    """One (new depth, valid) record per table entry, in table order."""

    ids: np.ndarray           # (L,) int32
    new_depth: np.ndarray     # (L,) float32
    valid: np.ndarray         # (L,) bool

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class TileRasterization:
    pixels: np.ndarray        # (TILE_PX, TILE_PX, 3) float64
    updates: EntryUpdates
    bitmaps: np.ndarray       # (L,) uint64 subtile masks
    outgoing: int             # entries flipped valid -> invalid this frame
    stale: int                # entries with no feature record this frame
    blended_terms: int


def rasterize_tile(table: GaussianTable, features: FeatureTable,
                   tile_origin: tuple[int, int], *,
                   assigned_ids: np.ndarray | None = None,
                   background=(0.0, 0.0, 0.0),
                   ledger: TrafficLedger | None = None,
                   model: CostModel = DEFAULT_COST_MODEL) -> TileRasterization:
    """Rasterize one tile in table order and emit its deferred updates.

    Per entry: build the subtile bitmap on the fly; the valid bit for the
    next frame is the OR of its bits (an all-zero bitmap means the splat
    no longer touches the tile), except that entries still assigned to the
    tile this frame (``assigned_ids``, id-sorted) are kept alive so they
    are not forgotten while merely dipping under the alpha cutoff. Stale
    entries (culled this frame, no feature record) go invalid and keep
    their old depth; everything else picks up the current frame's depth.

    Bills one feature read per table entry and one table write-back.
    """
    length = len(table)
    background = np.asarray(background, dtype=np.float64)
    rows, present = features.rows_for(table.ids)
    bits = np.zeros((length, (TILE_PX // SUBTILE_PX) ** 2), dtype=bool)
    if np.any(present):
        sub_ox, sub_oy = _tile_subtile_origins(tile_origin)
        pr = rows[present]
        bits[present] = _subtile_hits(
            features.mean2d[pr, 0], features.mean2d[pr, 1],
            features.conic[pr, 0], features.conic[pr, 1], features.conic[pr, 2],
            features.opacity[pr], features.radius[pr], sub_ox, sub_oy)

    valid_new = bits.any(axis=1)
    if assigned_ids is not None and len(assigned_ids):
        pos = np.searchsorted(assigned_ids, table.ids)
        pos = np.minimum(pos, len(assigned_ids) - 1)
        valid_new |= assigned_ids[pos] == table.ids
    if len(features):
        new_depth = np.where(present, features.depth[rows].astype(np.float32), table.keys)
        mx = features.mean2d[rows, 0]
        my = features.mean2d[rows, 1]
        ca = features.conic[rows, 0]
        cb = features.conic[rows, 1]
        cc = features.conic[rows, 2]
        op = features.opacity[rows]
        col = features.color[rows]
    else:
        new_depth = table.keys.copy()
        mx = my = ca = cb = cc = op = np.zeros(length)
        col = np.zeros((length, 3))

    pixels = np.empty((TILE_PX, TILE_PX, 3))
    terms = 0
    n_sub = TILE_PX // SUBTILE_PX
    local = np.arange(SUBTILE_PX, dtype=np.float64)
    px_local = np.tile(local, SUBTILE_PX)
    py_local = np.repeat(local, SUBTILE_PX)
    for s in range(n_sub * n_sub):
        sy, sx = divmod(s, n_sub)
        ox = tile_origin[0] + sx * SUBTILE_PX
        oy = tile_origin[1] + sy * SUBTILE_PX
        sel = np.nonzero(bits[:, s])[0]
        if len(sel) == 0:
            patch = np.broadcast_to(background, (SUBTILE_PX, SUBTILE_PX, 3)).copy()
        else:
            rgb, _, t = blend_pixels(mx[sel], my[sel], ca[sel], cb[sel], cc[sel],
                                     op[sel], col[sel], ox + px_local, oy + py_local,
                                     background)
            patch = rgb.reshape(SUBTILE_PX, SUBTILE_PX, 3)
            terms += t
        pixels[sy * SUBTILE_PX:(sy + 1) * SUBTILE_PX,
               sx * SUBTILE_PX:(sx + 1) * SUBTILE_PX] = patch

    if ledger is not None:
        ledger.record("raster_feature_read", length * model.feature_bytes, 0)
        ledger.record("raster_writeback", 0, length * model.entry_bytes)

    updates = EntryUpdates(ids=table.ids.copy(), new_depth=new_depth, valid=valid_new)
    outgoing = int(np.count_nonzero(table.valid & ~valid_new))
    return TileRasterization(pixels=pixels, updates=updates, bitmaps=pack_bitmap(bits),
                             outgoing=outgoing, stale=int(np.count_nonzero(~present)),
                             blended_terms=terms)


def apply_updates(table: GaussianTable, updates: EntryUpdates) -> GaussianTable:
    """Overwrite depth keys and valid bits in place of order.

    The table keeps its (now possibly stale) ordering; re-sorting is the
    next frame's job.
    """
    if len(updates) != len(table):
        raise ValueError(f"update count {len(updates)} != table length {len(table)}")
    if not np.array_equal(updates.ids, table.ids):
        raise ValueError("updates are not aligned with the table entries")
    return GaussianTable(table.tile_id, table.ids.copy(), updates.new_depth.copy(),
                         updates.valid.copy(), fully_sorted=False)
