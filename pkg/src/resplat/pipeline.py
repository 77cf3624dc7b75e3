"""Frame orchestration: cull, project, tile, sort, blend, update.

Two modes share the same projection and rasterization stages:

* ``full_sort`` rebuilds every tile's table from scratch each frame and
  is billed at the modeled from-scratch sorting cost. It is the quality
  and traffic baseline.
* ``reuse`` bootstraps frame 0 with the from-scratch path, then carries
  each tile's table across frames: one partial-sort pass repairs the
  order (on depths refreshed during the previous rasterization, hence one
  frame stale), newly assigned entries are sorted and merged in, and
  entries that stopped touching their tile are dropped by the same merge.

Tiles are independent within a frame; with ``workers > 1`` they are
processed by a thread pool and committed in tile order, so images,
reports, and ledgers are identical at any worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .preprocess import (FeatureTable, IncomingTable, TILE_PX, TileGrid,
                         assign_tiles_batch, detect_incoming, project_scene)
from .raster import apply_updates, rasterize_tile
from .scene import Camera, Scene, Trajectory
from .sorting import (ChunkConfig, DEFAULT_CHUNK_CONFIG, GaussianTable,
                      dynamic_partial_sort, full_sort, merge_update, sort_incoming)
from .traffic import CostModel, DEFAULT_COST_MODEL, TrafficLedger

MODES = ("reuse", "full_sort")


@dataclass
class RenderSettings:
    width: int
    height: int
    chunk: ChunkConfig = DEFAULT_CHUNK_CONFIG
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    model: CostModel = DEFAULT_COST_MODEL
    workers: int = 1

    def grid(self) -> TileGrid:
        return TileGrid(self.width, self.height)


@dataclass
class TileState:
    """One tile's carried sort state: table plus valid-id membership."""

    table: GaussianTable
    membership: np.ndarray    # sorted int32 ids of valid entries

    @classmethod
    def empty(cls, tile_id: int) -> "TileState":
        return cls(GaussianTable.empty(tile_id), np.empty(0, dtype=np.int32))


@dataclass
class RenderState:
    tiles: list[TileState]

    @classmethod
    def initial(cls, grid: TileGrid) -> "RenderState":
        return cls([TileState.empty(t) for t in range(grid.n_tiles)])


@dataclass
class TileFrameStats:
    tile_id: int
    presort_len: int
    incoming: int
    outgoing: int
    stale: int
    table_len: int
    sort_reorder_read: int
    sort_reorder_write: int
    fully_sorted: bool
    blended_terms: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class FrameReport:
    frame: int
    mode: str
    projected: int
    culled: int
    dropped_singular: int
    incoming_total: int
    outgoing_total: int
    stale_total: int
    traffic: TrafficLedger
    tiles: list[TileFrameStats]
    image_sha256: str

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "mode": self.mode,
            "projected": self.projected,
            "culled": self.culled,
            "dropped_singular": self.dropped_singular,
            "incoming_total": self.incoming_total,
            "outgoing_total": self.outgoing_total,
            "stale_total": self.stale_total,
            "traffic": self.traffic.as_dict(),
            "tiles": [t.to_dict() for t in self.tiles],
            "image_sha256": self.image_sha256,
        }


def _process_tile(tile_id: int, state: TileState, features: FeatureTable,
                  assigned: np.ndarray, incoming: IncomingTable | None,
                  frame_index: int, mode: str, grid: TileGrid,
                  settings: RenderSettings):
    """Sort + rasterize one tile; pure function of its inputs."""
    ledger = TrafficLedger()
    model = settings.model
    origin = grid.tile_origin(tile_id)

    if mode == "full_sort" or frame_index == 0:
        rows, _ = features.rows_for(assigned)
        keys = features.depth[rows].astype(np.float32)
        table = full_sort(assigned, keys, tile_id=tile_id, cfg=settings.chunk,
                          ledger=ledger, model=model)
        incoming_count = 0
        presort_len = len(assigned)
    else:
        presort_len = len(state.table)
        reordered = dynamic_partial_sort(state.table, frame_index, settings.chunk,
                                         ledger=ledger, model=model)
        inc_ids, inc_keys = sort_incoming(incoming.ids, incoming.keys,
                                          cfg=settings.chunk, ledger=ledger, model=model)
        table = merge_update(reordered, inc_ids, inc_keys, ledger=ledger, model=model)
        incoming_count = len(inc_ids)

    rast = rasterize_tile(table, features, origin, assigned_ids=assigned,
                          background=settings.background, ledger=ledger, model=model)
    new_table = apply_updates(table, rast.updates)
    membership = np.sort(new_table.ids[new_table.valid])

    clip_w = min(origin[0] + TILE_PX, settings.width) - origin[0]
    clip_h = min(origin[1] + TILE_PX, settings.height) - origin[1]
    ledger.record("image_write", 0, clip_w * clip_h * model.pixel_bytes)

    stats = TileFrameStats(
        tile_id=tile_id, presort_len=presort_len, incoming=incoming_count,
        outgoing=rast.outgoing, stale=rast.stale, table_len=len(new_table),
        sort_reorder_read=ledger.read["sort_reorder"],
        sort_reorder_write=ledger.write["sort_reorder"],
        fully_sorted=table.fully_sorted, blended_terms=rast.blended_terms)
    return rast.pixels, TileState(new_table, membership), ledger, stats


def render_frame(scene: Scene, camera: Camera, state: RenderState, frame_index: int,
                 mode: str, settings: RenderSettings) -> tuple[np.ndarray, RenderState, FrameReport]:
    """Render one frame; returns (image, next state, frame report).

    ``state`` must be the previous frame's output (or the initial state at
    frame 0). In reuse mode, frame 0 is the from-scratch bootstrap.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if camera.width != settings.width or camera.height != settings.height:
        raise ValueError("camera resolution differs from render settings")
    grid = settings.grid()
    if len(state.tiles) != grid.n_tiles:
        raise ValueError("state tile count does not match the grid")

    frame_ledger = TrafficLedger()
    proj = project_scene(scene, camera, ledger=frame_ledger, model=settings.model)
    assignments = assign_tiles_batch(proj.features, grid)

    if mode == "reuse" and frame_index > 0:
        incoming = detect_incoming(assignments, [ts.membership for ts in state.tiles],
                                   proj.features, ledger=frame_ledger, model=settings.model)
    else:
        incoming = [None] * grid.n_tiles

    def work(tile_id: int):
        return _process_tile(tile_id, state.tiles[tile_id], proj.features,
                             assignments[tile_id], incoming[tile_id],
                             frame_index, mode, grid, settings)

    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(work, range(grid.n_tiles)))
    else:
        results = [work(t) for t in range(grid.n_tiles)]

    image = np.empty((settings.height, settings.width, 3))
    new_tiles = []
    stats = []
    for tile_id, (pixels, tile_state, tile_ledger, tile_stats) in enumerate(results):
        ox, oy = grid.tile_origin(tile_id)
        w = min(ox + TILE_PX, settings.width) - ox
        h = min(oy + TILE_PX, settings.height) - oy
        image[oy:oy + h, ox:ox + w] = pixels[:h, :w]
        frame_ledger.merge(tile_ledger)
        new_tiles.append(tile_state)
        stats.append(tile_stats)

    report = FrameReport(
        frame=frame_index, mode=mode, projected=len(proj.features),
        culled=proj.culled, dropped_singular=proj.dropped_singular,
        incoming_total=sum(s.incoming for s in stats),
        outgoing_total=sum(s.outgoing for s in stats),
        stale_total=sum(s.stale for s in stats),
        traffic=frame_ledger, tiles=stats,
        image_sha256=hashlib.sha256(image.tobytes()).hexdigest())
    return image, RenderState(new_tiles), report


def render_trajectory(scene: Scene, trajectory: Trajectory, mode: str,
                      settings: RenderSettings):
    """Generator over (frame_index, image, state, report) for a camera path."""
    state = RenderState.initial(settings.grid())
    for i, camera in enumerate(trajectory.frames):
        image, state, report = render_frame(scene, camera, state, i, mode, settings)
        yield i, image, state, report
