"""Command-line interface.

Subcommands:
  render              render a camera path (reuse, full_sort, or both)
  compare             per-frame PSNR between two frame directories
  analyze-similarity  recompute similarity from dumped table snapshots
  traffic-report      recompute traffic totals from per-frame reports
  synth-scene         write a deterministic synthetic scene as PLY

`render` takes an optional JSON config file; flags override its fields.
"""

from __future__ import annotations

import argparse
import json
import sys

from .ply import save_ply_file
from .runner import (RunConfig, compare_runs, run, similarity_from_state,
                     traffic_from_reports, _json_dump, _jsonable)
from .scene import synth_scene


def _add_render_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config file; flags override its fields")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--mode", choices=["reuse", "full_sort", "both"])
    p.add_argument("--ply", dest="ply_path", help="trained splat PLY to render")
    p.add_argument("--n", dest="synth_n", type=int, help="synthetic scene splat count")
    p.add_argument("--extent", dest="synth_extent", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--trajectory", choices=["orbit", "dolly"])
    p.add_argument("--frames", type=int)
    p.add_argument("--speed", dest="speed_multiplier", type=float,
                   help="path speed multiplier (2 visits every 2nd base pose)")
    p.add_argument("--hold-frames", dest="hold_frames", type=int,
                   help="static frames appended after the moving path")
    p.add_argument("--chunk", type=int, help="sort chunk size (entries)")
    p.add_argument("--sub", type=int, help="sort network block width")
    p.add_argument("--background", nargs=3, type=float, metavar=("R", "G", "B"))
    p.add_argument("--workers", type=int)
    p.add_argument("--png", dest="write_png", action="store_true", default=None,
                   help="also write 16-bit PNG frames")
    p.add_argument("--dump-state", dest="dump_state", action="store_true", default=None,
                   help="dump per-frame table snapshots for auditing")


def _render_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    overrides = {
        k: v for k, v in vars(args).items()
        if k not in ("config", "command", "func") and v is not None
    }
    data.update(overrides)
    if "out_dir" not in data or data["out_dir"] is None:
        raise SystemExit("error: an output directory is required (--out or config out_dir)")
    return RunConfig.from_json(data)


def _cmd_render(args: argparse.Namespace) -> int:
    config = _render_config(args)
    summary = run(config)
    if "psnr" in summary:
        med = summary["psnr"]["median_db"]
        mn = summary["psnr"]["min_db"]
        red = summary["traffic_reuse"].get("sorting_reduction_pct")
        print(f"rendered {summary['frames']} frames (both modes): "
              f"psnr median {med:.2f} dB, min {mn:.2f} dB, "
              f"sorting traffic reduction {red:.1f}%")
    else:
        print(f"rendered {summary['frames']} frames ({summary['modes'][0]})")
    print(f"artifacts: {config.out_dir}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    result = compare_runs(args.dir_a, args.dir_b)
    if args.out:
        _json_dump(args.out, result)
    print(json.dumps(_jsonable({k: v for k, v in result.items() if k != "frames"}), indent=2))
    return 0


def _cmd_similarity(args: argparse.Namespace) -> int:
    report = similarity_from_state(args.state_dir)
    if args.out:
        _json_dump(args.out, report)
    else:
        print(json.dumps(_jsonable(report["overall"]), indent=2, sort_keys=True))
    return 0


def _cmd_traffic(args: argparse.Namespace) -> int:
    report = traffic_from_reports(args.reports_dir)
    if args.out:
        _json_dump(args.out, report)
    else:
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return 0


def _cmd_synth_scene(args: argparse.Namespace) -> int:
    scene = synth_scene(args.n, args.extent, args.seed)
    save_ply_file(scene, args.out)
    print(f"wrote {len(scene)} splats to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resplat", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a camera path")
    _add_render_args(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("compare", help="per-frame PSNR between two frame directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--out", help="write the comparison JSON here")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("analyze-similarity",
                       help="recompute similarity from dumped table snapshots")
    p.add_argument("state_dir")
    p.add_argument("--out", help="write the similarity JSON here")
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("traffic-report",
                       help="recompute traffic totals from per-frame reports")
    p.add_argument("reports_dir")
    p.add_argument("--out", help="write the traffic JSON here")
    p.set_defaults(func=_cmd_traffic)

    p = sub.add_parser("synth-scene", help="write a synthetic scene as PLY")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--extent", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_scene)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
