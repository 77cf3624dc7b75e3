"""Image-quality and frame-to-frame similarity metrics.

Similarity is measured on per-tile sort state across consecutive frames:
retention is the fraction of a tile's previous valid ids still present,
and order displacement is the rank shift of shared ids between the two
frames' table orders (ranks taken among shared ids only). Percentiles use
the nearest-rank definition, which is exact on integer displacements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RETENTION_EMPTY_PREV = 1.0  # reported separately, excluded from the CDF


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB of two [0, 1] RGB images.

    Identical images return the +inf sentinel.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def retention_fraction(prev_ids, cur_ids) -> float:
    """|prev intersect cur| / |prev|; empty prev returns 1.0 by convention."""
    prev = np.asarray(prev_ids)
    if len(prev) == 0:
        return RETENTION_EMPTY_PREV
    shared = np.intersect1d(prev, np.asarray(cur_ids), assume_unique=False)
    return len(shared) / len(prev)


def nearest_rank_percentile(values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value."""
    values = np.sort(np.asarray(values))
    if len(values) == 0:
        raise ValueError("percentile of an empty sample")
    rank = max(1, int(np.ceil(pct / 100.0 * len(values))))
    return float(values[rank - 1])


def order_displacements(prev_order, cur_order) -> np.ndarray:
    """Rank shifts |rank_cur - rank_prev| of ids present in both orders.

    Ranks are positions among the shared ids only, so insertions and
    deletions around them do not count as movement.
    """
    prev_order = np.asarray(prev_order)
    cur_order = np.asarray(cur_order)
    prev_shared = prev_order[np.isin(prev_order, cur_order, assume_unique=True)]
    cur_shared = cur_order[np.isin(cur_order, prev_order, assume_unique=True)]
    if len(cur_shared) == 0:
        return np.empty(0, dtype=np.int64)
    sorter = np.argsort(prev_shared)
    prev_rank = sorter[np.searchsorted(prev_shared[sorter], cur_shared)]
    return np.abs(prev_rank.astype(np.int64) - np.arange(len(cur_shared), dtype=np.int64))


def displacement_percentiles(prev_order, cur_order) -> tuple[float, float, float] | None:
    """(p90, p95, p99) of order displacements; None when no ids are shared."""
    disp = order_displacements(prev_order, cur_order)
    if len(disp) == 0:
        return None
    return (nearest_rank_percentile(disp, 90.0),
            nearest_rank_percentile(disp, 95.0),
            nearest_rank_percentile(disp, 99.0))


@dataclass
class SimilarityCollector:
    """Streaming per-frame similarity statistics over a rendered run.

    Feed each frame's per-tile membership (valid ids) and table orders;
    the collector compares against the previous frame and keeps compact
    per-frame summaries plus the pooled retention samples for the CDF.
    """

    retention_threshold: float = 0.78
    _prev_members: list | None = None
    _prev_orders: list | None = None
    frames: list = field(default_factory=list)
    retention_samples: list = field(default_factory=list)
    empty_prev_count: int = 0
    pooled_displacements: list = field(default_factory=list)

    def feed(self, frame_index: int, members: list[np.ndarray], orders: list[np.ndarray]) -> None:
        if self._prev_members is not None:
            retentions = []
            for prev, cur in zip(self._prev_members, members):
                if len(prev) == 0:
                    self.empty_prev_count += 1
                    continue
                retentions.append(retention_fraction(prev, cur))
            disp_all = []
            for prev, cur in zip(self._prev_orders, orders):
                disp = order_displacements(prev, cur)
                if len(disp):
                    disp_all.append(disp)
            disp_pool = np.concatenate(disp_all) if disp_all else np.empty(0, dtype=np.int64)
            self.pooled_displacements.append(disp_pool)
            retentions = np.array(retentions)
            self.retention_samples.append(retentions)
            entry = {
                "frame": frame_index,
                "tiles_measured": int(len(retentions)),
                "retention_mean": float(retentions.mean()) if len(retentions) else None,
                "retention_min": float(retentions.min()) if len(retentions) else None,
                "retention_frac_tiles_above": (
                    float(np.mean(retentions >= self.retention_threshold))
                    if len(retentions) else None),
            }
            if len(disp_pool):
                entry["displacement_p90"] = nearest_rank_percentile(disp_pool, 90.0)
                entry["displacement_p95"] = nearest_rank_percentile(disp_pool, 95.0)
                entry["displacement_p99"] = nearest_rank_percentile(disp_pool, 99.0)
            else:
                entry["displacement_p90"] = None
                entry["displacement_p95"] = None
                entry["displacement_p99"] = None
            self.frames.append(entry)
        self._prev_members = [np.asarray(m) for m in members]
        self._prev_orders = [np.asarray(o) for o in orders]

    def report(self) -> dict:
        """Similarity summary: per-frame rows, retention CDF, percentiles."""
        pooled = (np.concatenate(self.retention_samples)
                  if self.retention_samples else np.empty(0))
        disp = (np.concatenate(self.pooled_displacements)
                if self.pooled_displacements else np.empty(0, dtype=np.int64))
        cdf_values, cdf_cum = retention_cdf(pooled)
        out = {
            "version": 1,
            "retention_threshold": self.retention_threshold,
            "frames": self.frames,
            "empty_prev_tiles": self.empty_prev_count,
            "retention_cdf": {"value": cdf_values, "cum_fraction": cdf_cum},
            "overall": {},
        }
        if len(pooled):
            out["overall"]["retention_mean"] = float(pooled.mean())
            out["overall"]["retention_frac_above"] = float(
                np.mean(pooled >= self.retention_threshold))
        if len(disp):
            out["overall"]["displacement_p90"] = nearest_rank_percentile(disp, 90.0)
            out["overall"]["displacement_p95"] = nearest_rank_percentile(disp, 95.0)
            out["overall"]["displacement_p99"] = nearest_rank_percentile(disp, 99.0)
        return out


def retention_cdf(samples: np.ndarray) -> tuple[list, list]:
    """Empirical CDF sample points (non-decreasing, ending at 1.0)."""
    samples = np.sort(np.asarray(samples, dtype=np.float64))
    if len(samples) == 0:
        return [], []
    values, counts = np.unique(samples, return_counts=True)
    cum = np.cumsum(counts) / len(samples)
    return [float(v) for v in values], [float(c) for c in cum]
