"""Run configuration and artifact-producing entry points.

A run renders one camera path in one or both modes and writes everything
needed to audit it: per-frame images (PPM, optionally 16-bit PNG),
per-frame JSON reports, traffic summaries and CSV time series, similarity
reports, per-frame PSNR between modes, and (optionally) binary per-frame
table snapshots from which the reports can be recomputed.

All outputs are deterministic functions of the configuration: rerunning
the same config produces byte-identical artifact trees at any worker
count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .imageio import write_png16, write_ppm
from .metrics import SimilarityCollector, psnr
from .pipeline import RenderSettings, render_trajectory
from .ply import load_ply_file
from .scene import Scene, Trajectory, synth_scene, synth_trajectory
from .sorting import ChunkConfig, dump_tables, load_tables
from .traffic import TrafficLedger, summarize, traffic_csv_rows

RUN_CONFIG_VERSION = 1


@dataclass
class RunConfig:
    out_dir: str
    mode: str = "both"                 # reuse | full_sort | both
    width: int = 512
    height: int = 512
    ply_path: str | None = None        # when unset, a synthetic scene is used
    synth_n: int = 20000
    synth_extent: float = 10.0
    seed: int = 0
    trajectory: str = "orbit"          # orbit | dolly
    frames: int = 60
    speed_multiplier: float = 1.0
    base_step_deg: float = 0.4
    hold_frames: int = 0
    fov_deg: float = 60.0
    chunk: int = 256
    sub: int = 16
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    workers: int = 1
    write_png: bool = False
    dump_state: bool = False

    def __post_init__(self):
        if self.mode not in ("reuse", "full_sort", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trajectory not in ("orbit", "dolly"):
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        self.background = tuple(float(v) for v in self.background)

    def settings(self) -> RenderSettings:
        return RenderSettings(width=self.width, height=self.height,
                              chunk=ChunkConfig(chunk=self.chunk, sub=self.sub),
                              background=self.background, workers=self.workers)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        data = dict(data)
        version = data.pop("version", RUN_CONFIG_VERSION)
        if version != RUN_CONFIG_VERSION:
            raise ValueError(f"unsupported run config version {version!r}")
        return cls(**data)

    def to_json(self) -> dict:
        out = asdict(self)
        out["background"] = list(self.background)
        out["version"] = RUN_CONFIG_VERSION
        return out


def scene_extent(scene: Scene) -> float:
    """Largest axis span of the splat means (path framing for loaded scenes)."""
    if len(scene) == 0:
        return 1.0
    return float(np.ptp(scene.means.astype(np.float64), axis=0).max()) or 1.0


def load_run_scene(config: RunConfig) -> tuple[Scene, float]:
    if config.ply_path is not None:
        scene = load_ply_file(config.ply_path)
        return scene, scene_extent(scene)
    return synth_scene(config.synth_n, config.synth_extent, config.seed), config.synth_extent


def build_trajectory(config: RunConfig, extent: float) -> Trajectory:
    return synth_trajectory(
        config.trajectory, config.frames, config.speed_multiplier, config.seed,
        extent=extent, width=config.width, height=config.height,
        fov_deg=config.fov_deg, base_step_deg=config.base_step_deg,
        hold_frames=config.hold_frames)


def _json_dump(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(value):
    """JSON-safe copy; non-finite floats become string sentinels."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def _render_mode(scene: Scene, trajectory: Trajectory, mode: str,
                 config: RunConfig, out: Path) -> dict:
    """Render one mode, writing frames/reports/state; returns summaries."""
    settings = config.settings()
    frames_dir = out / f"frames_{mode}"
    reports_dir = out / f"reports_{mode}"
    frames_dir.mkdir(parents=True, exist_ok=True)
    reports_dir.mkdir(parents=True, exist_ok=True)
    state_dir = out / f"state_{mode}"
    if config.dump_state:
        state_dir.mkdir(parents=True, exist_ok=True)

    collector = SimilarityCollector()
    ledgers: list[TrafficLedger] = []
    images = []
    for i, image, state, report in render_trajectory(scene, trajectory, mode, settings):
        name = f"frame_{i:04d}"
        (frames_dir / f"{name}.ppm").write_bytes(write_ppm(image))
        if config.write_png:
            (frames_dir / f"{name}.png").write_bytes(write_png16(image))
        _json_dump(reports_dir / f"{name}.json", report.to_dict())
        if config.dump_state:
            (state_dir / f"{name}.tables").write_bytes(
                dump_tables([ts.table for ts in state.tiles]))
        collector.feed(i, [ts.membership for ts in state.tiles],
                       [ts.table.ids for ts in state.tiles])
        ledgers.append(report.traffic)
        images.append(image)

    _json_dump(out / f"similarity_{mode}.json", collector.report())
    with open(out / f"traffic_{mode}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "stage", "read_bytes", "write_bytes"])
        writer.writerows(traffic_csv_rows(ledgers))
    return {"ledgers": ledgers, "images": images}


def run(config: RunConfig) -> dict:
    """Execute a run per its config; returns the summary also written to disk."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene, extent = load_run_scene(config)
    trajectory = build_trajectory(config, extent)
    _json_dump(out / "config.json", config.to_json())

    modes = ["full_sort", "reuse"] if config.mode == "both" else [config.mode]
    results = {mode: _render_mode(scene, trajectory, mode, config, out) for mode in modes}

    summary: dict = {"version": 1, "modes": modes, "frames": config.frames + config.hold_frames}
    if config.mode == "both":
        base = results["full_sort"]["ledgers"]
        _json_dump(out / "traffic_full_sort.json", summarize(base))
        _json_dump(out / "traffic_reuse.json", summarize(results["reuse"]["ledgers"], base))
        per_frame = [psnr(r, f) for r, f in
                     zip(results["reuse"]["images"], results["full_sort"]["images"])]
        finite = [v for v in per_frame if math.isfinite(v)]
        psnr_payload = {
            "version": 1,
            "per_frame_db": per_frame,
            "median_db": float(np.median(finite)) if finite else float("inf"),
            "min_db": min(per_frame),
        }
        _json_dump(out / "psnr.json", psnr_payload)
        summary["psnr"] = psnr_payload
        summary["traffic_reuse"] = summarize(results["reuse"]["ledgers"], base)
    else:
        only = results[modes[0]]["ledgers"]
        _json_dump(out / f"traffic_{modes[0]}.json", summarize(only))
        summary[f"traffic_{modes[0]}"] = summarize(only)
    _json_dump(out / "summary.json", summary)
    return summary


def compare_runs(dir_a: str, dir_b: str, pattern: str = "*.ppm") -> dict:
    """Per-frame PSNR between two frame directories (matched by filename)."""
    from .imageio import read_ppm

    a_files = sorted(Path(dir_a).glob(pattern))
    b_by_name = {p.name: p for p in Path(dir_b).glob(pattern)}
    rows = []
    for pa in a_files:
        pb = b_by_name.get(pa.name)
        if pb is None:
            continue
        rows.append({"frame": pa.name,
                     "psnr_db": psnr(read_ppm(pa.read_bytes()), read_ppm(pb.read_bytes()))})
    if not rows:
        raise ValueError("no matching frame files to compare")
    finite = [r["psnr_db"] for r in rows if math.isfinite(r["psnr_db"])]
    return {
        "version": 1,
        "frames": rows,
        "median_db": float(np.median(finite)) if finite else float("inf"),
        "min_db": min(r["psnr_db"] for r in rows),
    }


def similarity_from_state(state_dir: str) -> dict:
    """Recompute the similarity report from dumped per-frame table snapshots."""
    files = sorted(Path(state_dir).glob("frame_*.tables"))
    if not files:
        raise ValueError(f"no table snapshots under {state_dir}")
    collector = SimilarityCollector()
    for i, path in enumerate(files):
        tables = load_tables(path.read_bytes())
        members = [np.sort(t.ids[t.valid]) for t in tables]
        orders = [t.ids for t in tables]
        collector.feed(i, members, orders)
    return collector.report()


def traffic_from_reports(reports_dir: str) -> dict:
    """Recompute the traffic summary from per-frame report JSON files."""
    files = sorted(Path(reports_dir).glob("frame_*.json"))
    if not files:
        raise ValueError(f"no frame reports under {reports_dir}")
    ledgers = []
    for path in files:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        ledgers.append(TrafficLedger.from_dict(data["traffic"]))
    return summarize(ledgers)
