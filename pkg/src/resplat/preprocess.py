"""Frustum culling, screen-space projection, tiling, and change detection.

Projection maps each world-space splat to a screen-space footprint: the
2D mean by pinhole projection and the 2D covariance by the first-order
(Jacobian) transform of the 3D covariance, dilated by 0.3 px^2 on the
diagonal before inversion to guard near-singular footprints. A splat
passes the frustum test when its camera depth lies in [near, far] and its
projected mean falls inside the image rectangle dilated by the projected
3-sigma radius.

Tiling duplicates each projected splat to every 64x64 px tile its
axis-aligned 3-sigma square touches. Incoming detection compares the
frame's per-tile assignments against the previous frame's per-tile
membership so later stages only process entries that actually changed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Camera, Gaussian3D, Scene, activate_scene
from .sh import eval_sh_colors
from .traffic import CostModel, DEFAULT_COST_MODEL, TrafficLedger

TILE_PX = 64
SUBTILE_PX = 8
COV_DILATION = 0.3  # px^2, added to the projected covariance diagonal
MIN_CONIC_DET = 1e-12


@dataclass
class Gaussian2D:
    """Projected splat: everything rasterization needs for one frame."""

    id: int
    mean2d: np.ndarray        # (2,) px
    conic: np.ndarray         # (3,) inverse 2D covariance (a, b, c)
    depth: float              # camera-space z
    color: np.ndarray         # (3,) RGB in [0, 1]
    opacity: float
    radius: float             # px, ceil of 3 sigma_max


class FeatureTable:
    """Per-frame id -> projected-splat features, stored as arrays.

    Ids are ascending, so lookups are binary searches; absent ids are
    reported explicitly rather than defaulted.
    """

    def __init__(self, ids, mean2d, conic, depth, color, opacity, radius):
        self.ids = np.ascontiguousarray(ids, dtype=np.int32)
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate id in feature table input")
        order = np.argsort(self.ids, kind="stable")
        self.ids = self.ids[order]
        self.mean2d = np.ascontiguousarray(mean2d, dtype=np.float64)[order]
        self.conic = np.ascontiguousarray(conic, dtype=np.float64)[order]
        self.depth = np.ascontiguousarray(depth, dtype=np.float64)[order]
        self.color = np.ascontiguousarray(color, dtype=np.float64)[order]
        self.opacity = np.ascontiguousarray(opacity, dtype=np.float64)[order]
        self.radius = np.ascontiguousarray(radius, dtype=np.float64)[order]

    def __len__(self) -> int:
        return len(self.ids)

    def rows_for(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(row indices, present mask) for the queried ids; absent rows are 0."""
        ids = np.asarray(ids, dtype=np.int32)
        if len(self.ids) == 0:
            return np.zeros(len(ids), dtype=np.intp), np.zeros(len(ids), dtype=bool)
        pos = np.searchsorted(self.ids, ids)
        pos_safe = np.minimum(pos, len(self.ids) - 1)
        return pos_safe, self.ids[pos_safe] == ids

    def get(self, gid: int) -> Gaussian2D | None:
        rows, present = self.rows_for(np.array([gid], dtype=np.int32))
        if not present[0]:
            return None
        r = rows[0]
        return Gaussian2D(
            id=int(self.ids[r]), mean2d=self.mean2d[r].copy(), conic=self.conic[r].copy(),
            depth=float(self.depth[r]), color=self.color[r].copy(),
            opacity=float(self.opacity[r]), radius=float(self.radius[r]),
        )


@dataclass
class IncomingTable:
    """Entries newly assigned to one tile this frame, id-ascending."""

    tile_id: int
    ids: np.ndarray           # (k,) int32
    keys: np.ndarray          # (k,) float32 current-frame depth keys

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class TileGrid:
    """64 px tile decomposition of a width x height image."""

    width: int
    height: int
    tile_px: int = TILE_PX

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")
        self.tiles_x = -(-self.width // self.tile_px)
        self.tiles_y = -(-self.height // self.tile_px)
        self.n_tiles = self.tiles_x * self.tiles_y

    def tile_origin(self, tile_id: int) -> tuple[int, int]:
        ty, tx = divmod(tile_id, self.tiles_x)
        return tx * self.tile_px, ty * self.tile_px


@dataclass
class ProjectionResult:
    """Frame projection output: features plus culling diagnostics."""

    features: FeatureTable
    visible_ids: np.ndarray
    culled: int
    dropped_singular: int


def _project_arrays(scene: Scene, camera: Camera):
    """Shared projection math; returns per-splat arrays and masks."""
    n = len(scene)
    means = scene.means.astype(np.float64)
    cam_pts = means @ camera.rotation.T + camera.translation
    depth = cam_pts[:, 2]
    depth_ok = (depth >= camera.near) & (depth <= camera.far)

    idx = np.nonzero(depth_ok)[0]
    x, y, z = cam_pts[idx, 0], cam_pts[idx, 1], cam_pts[idx, 2]
    inv_z = 1.0 / z
    mean2d = np.stack([camera.fx * x * inv_z + camera.cx,
                       camera.fy * y * inv_z + camera.cy], axis=1)

    _, _, covs = activate_scene(scene)
    covs = covs[idx]
    # Jacobian of the pinhole map at the camera-space mean.
    jac = np.zeros((len(idx), 2, 3))
    jac[:, 0, 0] = camera.fx * inv_z
    jac[:, 0, 2] = -camera.fx * x * inv_z * inv_z
    jac[:, 1, 1] = camera.fy * inv_z
    jac[:, 1, 2] = -camera.fy * y * inv_z * inv_z
    m = jac @ camera.rotation
    # Degenerate splats overflow to inf/nan here on purpose; the
    # non-finite determinant check below drops and tallies them.
    with np.errstate(over="ignore", invalid="ignore"):
        cov2d = m @ covs @ np.transpose(m, (0, 2, 1))
        cov2d[:, 0, 0] += COV_DILATION
        cov2d[:, 1, 1] += COV_DILATION

        a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
        det = a * c - b * b
        mid = 0.5 * (a + c)
        lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
        radius = np.ceil(3.0 * np.sqrt(np.maximum(lam_max, 0.0)))

        in_rect = (
            (mean2d[:, 0] >= -radius) & (mean2d[:, 0] <= camera.width - 1 + radius)
            & (mean2d[:, 1] >= -radius) & (mean2d[:, 1] <= camera.height - 1 + radius)
        )
    nonsingular = np.isfinite(det) & (det > MIN_CONIC_DET)
    return idx, mean2d, cov2d, det, radius, z, in_rect, nonsingular


def frustum_cull(scene: Scene, camera: Camera) -> np.ndarray:
    """Ids passing the depth-range and dilated image-rectangle tests."""
    idx, _, _, _, _, _, in_rect, _ = _project_arrays(scene, camera)
    return np.asarray(idx[in_rect], dtype=np.int32)


def project_scene(scene: Scene, camera: Camera, *,
                  ledger: TrafficLedger | None = None,
                  model: CostModel = DEFAULT_COST_MODEL) -> ProjectionResult:
    """Project every frustum-visible splat and build the feature table.

    Splats whose dilated 2D covariance is numerically singular are
    dropped and tallied in the diagnostics rather than propagated.
    """
    idx, mean2d, cov2d, det, radius, z, in_rect, nonsingular = _project_arrays(scene, camera)
    keep = in_rect & nonsingular
    # A non-finite footprint cannot be rect-tested; count it as dropped,
    # not culled.
    unknown = ~np.isfinite(det)
    dropped_singular = int(np.count_nonzero((in_rect | unknown) & ~nonsingular))
    culled = len(scene) - int(np.count_nonzero(in_rect | unknown))

    sel = np.nonzero(keep)[0]
    ids = idx[sel].astype(np.int32)
    mean2d, cov2d, det, z = mean2d[sel], cov2d[sel], det[sel], z[sel]
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    cam_center = camera.center
    dirs = scene.means[ids].astype(np.float64) - cam_center
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / norms
    color = eval_sh_colors(scene.sh[ids].astype(np.float64), dirs)
    opacity = 1.0 / (1.0 + np.exp(-scene.opacity_logits[ids].astype(np.float64)))

    features = build_feature_table(
        ids=ids, mean2d=mean2d, conic=conic, depth=z, color=color,
        opacity=opacity, radius=radius[sel], ledger=ledger, model=model)
    return ProjectionResult(features=features, visible_ids=ids,
                            culled=culled, dropped_singular=dropped_singular)


def build_feature_table(*, ids, mean2d, conic, depth, color, opacity, radius,
                        ledger: TrafficLedger | None = None,
                        model: CostModel = DEFAULT_COST_MODEL) -> FeatureTable:
    """Assemble the frame's feature table; bills its write traffic."""
    table = FeatureTable(ids, mean2d, conic, depth, color, opacity, radius)
    if ledger is not None:
        ledger.record("preprocess", 0, len(table) * model.feature_bytes)
    return table


def project_gaussian(g: Gaussian3D, camera: Camera) -> Gaussian2D:
    """Project one splat (errors if it fails the frustum preconditions)."""
    one = Scene(
        means=g.mean[None], log_scales=g.log_scale[None], rotations=g.rotation[None],
        opacity_logits=np.array([g.opacity_logit]), sh=g.sh[None],
    )
    result = project_scene(one, camera)
    if len(result.features) == 0:
        raise ValueError("splat fails the frustum/projection preconditions")
    g2d = result.features.get(int(result.features.ids[0]))
    g2d.id = g.id
    return g2d


def assign_tiles(g2d: Gaussian2D, grid: TileGrid) -> list[int]:
    """Tile ids whose rectangle intersects the splat's 3-sigma square."""
    tx0, tx1, ty0, ty1 = _tile_span(
        np.array([g2d.mean2d[0]]), np.array([g2d.mean2d[1]]),
        np.array([g2d.radius]), grid)
    if tx1[0] < tx0[0] or ty1[0] < ty0[0]:
        return []
    return [ty * grid.tiles_x + tx
            for ty in range(ty0[0], ty1[0] + 1)
            for tx in range(tx0[0], tx1[0] + 1)]


def _tile_span(mx, my, radius, grid: TileGrid):
    """Inclusive tile index ranges of each splat's AABB (may be empty)."""
    t = grid.tile_px
    tx0 = np.floor((mx - radius) / t).astype(np.int64)
    tx1 = np.floor((mx + radius) / t).astype(np.int64)
    ty0 = np.floor((my - radius) / t).astype(np.int64)
    ty1 = np.floor((my + radius) / t).astype(np.int64)
    empty = (tx1 < 0) | (tx0 >= grid.tiles_x) | (ty1 < 0) | (ty0 >= grid.tiles_y)
    tx0, tx1 = np.clip(tx0, 0, grid.tiles_x - 1), np.clip(tx1, 0, grid.tiles_x - 1)
    ty0, ty1 = np.clip(ty0, 0, grid.tiles_y - 1), np.clip(ty1, 0, grid.tiles_y - 1)
    # Collapse empty spans so callers see tx1 < tx0.
    tx1 = np.where(empty, tx0 - 1, tx1)
    return tx0, tx1, ty0, ty1


def assign_tiles_batch(features: FeatureTable, grid: TileGrid) -> list[np.ndarray]:
    """Per-tile id arrays (id-ascending) for every projected splat."""
    per_tile: list[np.ndarray] = [np.empty(0, dtype=np.int32) for _ in range(grid.n_tiles)]
    if len(features) == 0:
        return per_tile
    mx, my = features.mean2d[:, 0], features.mean2d[:, 1]
    tx0, tx1, ty0, ty1 = _tile_span(mx, my, features.radius, grid)
    wx = tx1 - tx0 + 1
    wy = ty1 - ty0 + 1
    counts = np.maximum(wx, 0) * np.maximum(wy, 0)
    total = int(counts.sum())
    if total == 0:
        return per_tile
    owner = np.repeat(np.arange(len(features)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    local_x = offsets % wx[owner]
    local_y = offsets // wx[owner]
    tiles = (ty0[owner] + local_y) * grid.tiles_x + (tx0[owner] + local_x)
    order = np.argsort(tiles, kind="stable")  # stable keeps id order inside tiles
    tiles_sorted = tiles[order]
    ids_sorted = features.ids[owner[order]]
    bounds = np.searchsorted(tiles_sorted, np.arange(grid.n_tiles + 1))
    for t in range(grid.n_tiles):
        per_tile[t] = ids_sorted[bounds[t]:bounds[t + 1]]
    return per_tile


def detect_incoming(assignments: list[np.ndarray], prev_membership: list[np.ndarray],
                    features: FeatureTable, *,
                    ledger: TrafficLedger | None = None,
                    model: CostModel = DEFAULT_COST_MODEL) -> list[IncomingTable]:
    """Per-tile entries assigned this frame but absent from the previous
    frame's membership, paired with their current depth keys.

    Membership arrays must be id-sorted; outputs are id-sorted. The write
    of the incoming tables is billed as preprocessing traffic.
    """
    if len(assignments) != len(prev_membership):
        raise ValueError("assignments and membership must cover the same tiles")
    out = []
    total = 0
    for tile_id, (assigned, members) in enumerate(zip(assignments, prev_membership)):
        if len(members):
            pos = np.searchsorted(members, assigned)
            pos_safe = np.minimum(pos, len(members) - 1)
            fresh = members[pos_safe] != assigned
            inc_ids = assigned[fresh]
        else:
            inc_ids = assigned
        rows, present = features.rows_for(inc_ids)
        if not np.all(present):
            raise ValueError("assigned id missing from the feature table")
        keys = features.depth[rows].astype(np.float32)
        out.append(IncomingTable(tile_id=tile_id, ids=inc_ids.astype(np.int32), keys=keys))
        total += len(inc_ids)
    if ledger is not None:
        ledger.record("preprocess", 0, total * model.entry_bytes)
    return out
