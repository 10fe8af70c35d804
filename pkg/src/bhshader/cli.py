"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, SceneConfig, load_config, override

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scene file with 'key = value' lines")
    group = p.add_argument_group("scene overrides (same names as the scene file keys)")
    for f in fields(SceneConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                               default=None)
        else:
            kind = {"int": int, "float": float, "str": str}[f.type]
            group.add_argument(flag, dest=f.name, type=kind, default=None, metavar=f.type.upper())


def _scene_config(args) -> SceneConfig:
    config = load_config(args.config) if args.config else SceneConfig().validate()
    pairs = {f.name: getattr(args, f.name) for f in fields(SceneConfig)}
    return override(config, pairs, Path.cwd())


def _frame_path(output: str, frame: int, many: bool) -> Path:
    path = Path(output)
    if "{" in output:
        return Path(output.format(frame=frame))
    if many:
        return path.with_name(f"{path.stem}_{frame:04d}{path.suffix or '.png'}")
    return path


def cmd_precompute(args) -> int:
    from . import shading, tables

    start = time.perf_counter()
    tb = tables.precompute(args.epsilon, (args.d_size, args.d_size), (args.u_width, args.u_height))
    elapsed = time.perf_counter() - start
    tables.save(tb, args.output)
    print(f"geodesic tables: {args.output} ({elapsed:.1f} s, epsilon={args.epsilon:g})")
    if args.color_output:
        start = time.perf_counter()
        ct = shading.precompute_color_table()
        shading.save_color_table(ct, args.color_output)
        print(f"color table: {args.color_output} ({time.perf_counter() - start:.1f} s)")
    return EXIT_OK


def _render_frames(args, frames) -> int:
    from .render import camera_snapshots, load_scene, post_process, render_frame, write_image

    config = _scene_config(args)
    scene = load_scene(config, log=_log)
    snapshots = camera_snapshots(config)
    many = frames > 1
    count = 0
    for frame, snap in snapshots:
        start = time.perf_counter()
        fb = render_frame(scene, snap)
        image = post_process(fb, config)
        path = _frame_path(config.output, frame, many)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_image(image, config.exposure, path, hdr_sidecar=config.hdr)
        extra = f", {fb.failures} failed pixels" if fb.failures else ""
        print(f"frame {frame}: {path} ({time.perf_counter() - start:.2f} s{extra})")
        count += 1
        if count >= frames:
            break
    return EXIT_OK


def cmd_render(args) -> int:
    return _render_frames(args, 1)


def cmd_animate(args) -> int:
    config = _scene_config(args)
    return _render_frames(args, config.frame_end - config.frame_start)


def cmd_verify(args) -> int:
    from . import report, tables

    if args.tables:
        if not Path(args.tables).exists():
            raise ConfigError(f"tables file {args.tables} does not exist")
        tb = tables.load(args.tables)
    else:
        _log(f"precomputing tables at epsilon={args.epsilon:g}")
        tb = tables.precompute(args.epsilon, (args.d_size, args.d_size),
                               (args.u_width, args.u_height))
    rep = report.verify(tb, args.rays, args.seed, out_dir=args.out_dir)
    print("\n".join(rep.lines()))
    for path in rep.files:
        print(f"wrote {path}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_bench(args) -> int:
    from . import report
    from .render import camera_snapshots, load_scene

    config = _scene_config(args)
    scene = load_scene(config, log=_log)
    _, snap = next(camera_snapshots(config))
    rep = report.benchmark(scene, snap, frames=args.frames,
                           march_steps=tuple(args.steps), out_dir=args.out_dir)
    print("\n".join(rep.lines()))
    for path in rep.files:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_gen_catalog(args) -> int:
    from . import starfield

    catalog = starfield.generate_catalog(args.seed, args.count, args.slope)
    starfield.save_catalog(catalog, args.output)
    print(f"{len(catalog)} stars -> {args.output}")
    return EXIT_OK


def _add_table_flags(p):
    p.add_argument("--epsilon", type=float, default=1e-5, help="integration step")
    p.add_argument("--d-size", type=int, default=512, help="deflection table side")
    p.add_argument("--u-width", type=int, default=64, help="inverse-radius table width")
    p.add_argument("--u-height", type=int, default=32, help="inverse-radius table height")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhshader",
                                     description="Black hole renderer with precomputed geodesic tables.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompute", help="compute the geodesic and color tables")
    _add_table_flags(p)
    p.add_argument("-o", "--output", default="tables.bht", help="geodesic table file")
    p.add_argument("--color-output", default="colors.bct",
                   help="color table file (empty string to skip)")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("render", help="render one frame")
    _add_scene_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("animate", help="render the configured frame range")
    _add_scene_flags(p)
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("verify", help="compare the table tracer with the reference integrator")
    _add_table_flags(p)
    p.add_argument("--tables", help="use this table file instead of precomputing")
    p.add_argument("--rays", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="verify_out", help="CSV and figure directory")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time tables against ray-march baselines")
    _add_scene_flags(p)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--steps", type=int, nargs="+", default=[1000, 25],
                   help="ray-march step counts")
    p.add_argument("--out-dir", default="bench_out", help="CSV and figure directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-catalog", help="write a procedural star catalog")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=100000)
    p.add_argument("--slope", type=float, default=2.5, help="power-law slope of intensities")
    p.add_argument("-o", "--output", default="catalog.txt")
    p.set_defaults(func=cmd_gen_catalog)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        # Malformed input files (tables, catalogs) are configuration problems too.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
