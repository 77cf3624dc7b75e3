"""Simulated off-chip (DRAM) byte accounting for the rendering pipeline.

Every pipeline stage reports the bytes it would move to and from off-chip
memory into a :class:`TrafficLedger`. The model is a byte ledger, not a
timing simulator: it counts logical reads and writes per stage so that
incremental-sorting runs can be compared against from-scratch runs under
one consistent, auditable cost model.

What the model counts (see :class:`CostModel` for the byte constants):

* ``preprocess``        - feature-table writes and incoming-table writes.
* ``sort_reorder``      - the single read+write pass over each tile's
                          reused table (incremental mode), or the modeled
                          multi-pass radix sort (from-scratch mode).
* ``sort_incoming``     - one read and one write of each tile's incoming
                          entries while they are sorted.
* ``sort_merge``        - the incremental bytes of weaving sorted incoming
                          entries into the table stream: one read and one
                          write per incoming entry. The reused entries'
                          traffic is already counted by ``sort_reorder``.
* ``raster_feature_read`` - one feature fetch per table entry rasterized.
* ``raster_writeback``  - the per-entry depth/valid write-back.
* ``image_write``       - final pixel bytes.

Not modeled: caches, scene-parameter reads, and any DRAM timing effects.
"""

from __future__ import annotations

from dataclasses import dataclass


STAGES = (
    "preprocess",
    "sort_reorder",
    "sort_incoming",
    "sort_merge",
    "raster_feature_read",
    "raster_writeback",
    "image_write",
)

SORT_STAGES = ("sort_reorder", "sort_incoming", "sort_merge")


@dataclass(frozen=True)
class CostModel:
    """Byte constants behind every ledger entry.

    entry_bytes: one table entry, 4-byte id (valid bit packed in the top
        bit when serialized) plus a 4-byte float32 depth key.
    feature_bytes: one serialized feature-table record.
    baseline_radix_passes: passes of the modeled from-scratch radix sort
        (8-bit digits over a 32-bit key); each pass reads and writes every
        key-value pair.
    pixel_bytes: one output pixel (8-bit RGB).
    """

    entry_bytes: int = 8
    feature_bytes: int = 48
    baseline_radix_passes: int = 4
    pixel_bytes: int = 3

    def __post_init__(self):
        for name in ("entry_bytes", "feature_bytes", "baseline_radix_passes", "pixel_bytes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_COST_MODEL = CostModel()


class TrafficLedger:
    """Per-stage read/write byte counters.

    Counters only grow; merging two ledgers is plain addition, so merges
    commute and associate and the totals do not depend on the order in
    which parallel workers are combined.
    """

    __slots__ = ("read", "write")

    def __init__(self):
        self.read = dict.fromkeys(STAGES, 0)
        self.write = dict.fromkeys(STAGES, 0)

    def record(self, stage: str, read_bytes: int = 0, write_bytes: int = 0) -> None:
        if stage not in self.read:
            raise ValueError(f"unknown traffic stage: {stage!r}")
        if read_bytes < 0 or write_bytes < 0:
            raise ValueError("byte counts must be non-negative")
        self.read[stage] += int(read_bytes)
        self.write[stage] += int(write_bytes)

    def merge(self, other: "TrafficLedger") -> "TrafficLedger":
        for stage in STAGES:
            self.read[stage] += other.read[stage]
            self.write[stage] += other.write[stage]
        return self

    def copy(self) -> "TrafficLedger":
        out = TrafficLedger()
        out.merge(self)
        return out

    def stage_total(self, stage: str) -> int:
        return self.read[stage] + self.write[stage]

    def total(self) -> int:
        return sum(self.read.values()) + sum(self.write.values())

    def sorting_total(self) -> int:
        return sum(self.stage_total(s) for s in SORT_STAGES)

    def as_dict(self) -> dict:
        return {
            stage: {"read": self.read[stage], "write": self.write[stage]}
            for stage in STAGES
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrafficLedger":
        out = cls()
        for stage, rw in data.items():
            out.record(stage, rw["read"], rw["write"])
        return out

    def __eq__(self, other):
        if not isinstance(other, TrafficLedger):
            return NotImplemented
        return self.read == other.read and self.write == other.write


def baseline_sort_rw(n_entries: int, model: CostModel = DEFAULT_COST_MODEL) -> tuple[int, int]:
    """Read/write bytes of the modeled from-scratch sort of ``n_entries``.

    The model charges one duplication write and one initial read of every
    entry, plus ``baseline_radix_passes`` full read+write passes.
    """
    if n_entries < 0:
        raise ValueError("entry count must be non-negative")
    per_pass = n_entries * model.entry_bytes
    read = per_pass * model.baseline_radix_passes + per_pass
    write = per_pass * model.baseline_radix_passes + per_pass
    return read, write


def baseline_sort_traffic(n_entries: int, model: CostModel = DEFAULT_COST_MODEL) -> int:
    """Total bytes of the modeled from-scratch sort of ``n_entries``."""
    read, write = baseline_sort_rw(n_entries, model)
    return read + write


def summarize(frame_ledgers: list[TrafficLedger], baseline_ledgers: list[TrafficLedger] | None = None) -> dict:
    """Aggregate per-frame ledgers into a traffic summary.

    Returns per-stage totals, per-frame averages, the sorting-stage share
    of all traffic, and, when ``baseline_ledgers`` is given, the sorting
    reduction percentage relative to the baseline run.
    """
    if not frame_ledgers:
        raise ValueError("need at least one frame ledger")
    total = TrafficLedger()
    for ledger in frame_ledgers:
        total.merge(ledger)
    n = len(frame_ledgers)
    grand = total.total()
    summary = {
        "version": 1,
        "frames": n,
        "stages": {
            stage: {
                "read": total.read[stage],
                "write": total.write[stage],
                "total": total.stage_total(stage),
            }
            for stage in STAGES
        },
        "per_frame_avg": {stage: total.stage_total(stage) / n for stage in STAGES},
        "total_bytes": grand,
        "sorting_bytes": total.sorting_total(),
        "sorting_share": (total.sorting_total() / grand) if grand else 0.0,
    }
    if baseline_ledgers is not None:
        base_total = TrafficLedger()
        for ledger in baseline_ledgers:
            base_total.merge(ledger)
        base_sort = base_total.sorting_total()
        summary["baseline_sorting_bytes"] = base_sort
        summary["baseline_total_bytes"] = base_total.total()
        if base_sort:
            summary["sorting_reduction_pct"] = 100.0 * (1.0 - total.sorting_total() / base_sort)
        if base_total.total():
            summary["total_reduction_pct"] = 100.0 * (1.0 - grand / base_total.total())
    return summary


def traffic_csv_rows(frame_ledgers: list[TrafficLedger]) -> list[tuple[int, str, int, int]]:
    """Flatten per-frame ledgers to (frame, stage, read, write) rows."""
    rows = []
    for i, ledger in enumerate(frame_ledgers):
        for stage in STAGES:
            rows.append((i, stage, ledger.read[stage], ledger.write[stage]))
    return rows
