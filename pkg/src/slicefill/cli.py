"""Command-line front door.

    slicefill serve   -- run the HTTP gateway until interrupted
    slicefill run     -- inpaint one image/mask PNG pair to a result PNG
    slicefill volume  -- end-to-end batch: NRRD in, patched NRRD out
    slicefill bench   -- timing decomposition over loopback requests

Exit codes: 0 success, 1 startup failure (serve), 2 validation problem,
3 engine failure. Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from pathlib import Path

from . import bench as bench_mod
from . import nrrd
from .edgemap import render_edge_map
from .errors import (
    BadOutput,
    EmptyMask,
    EngineFailed,
    EngineTimeout,
    FullMask,
    SliceFillError,
)
from .gateway import DEFAULT_LEVEL, DEFAULT_WINDOW, GatewayConfig, GatewayServer
from .inpaint import EngineConfig, ExternalConfig, run_pipeline
from .maskproc import binarize_mask, reduce_grayscale, validate_pair
from .raster import BinaryMask, GrayImage, PixelBuffer, decode_png, encode_png, window_level

EXIT_OK = 0
EXIT_STARTUP = 1
EXIT_VALIDATION = 2
EXIT_ENGINE = 3

_ENGINE_CHOICES = ("diffusion", "fmm", "external")
_ENGINE_KINDS = {"diffusion": "diffusion", "fmm": "fast_marching", "external": "external"}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _roi(text: str) -> tuple[int, int]:
    try:
        x0, y0 = (int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ROI must look like 'x0,y0', got {text!r}")
    return x0, y0


def _load_gray(path: Path) -> GrayImage:
    decoded = decode_png(path.read_bytes())
    if isinstance(decoded, PixelBuffer):
        gray, _ = reduce_grayscale(decoded)
        return gray
    return decoded


def _load_mask(path: Path) -> BinaryMask:
    decoded = decode_png(path.read_bytes())
    if isinstance(decoded, PixelBuffer):
        return binarize_mask(decoded)
    return BinaryMask.from_bool(decoded.pixels != 0)


def _engine_config(args) -> EngineConfig:
    kind = _ENGINE_KINDS[args.engine]
    external = None
    if kind == "external":
        if not args.external_cmd:
            raise SystemExit2("--external-cmd required with --engine external")
        external = ExternalConfig(
            command=tuple(shlex.split(args.external_cmd)),
            working_dir=Path(args.workdir),
            timeout=args.external_timeout,
        )
    return EngineConfig(kind=kind, external=external)


class SystemExit2(Exception):
    """Validation failure destined for exit code 2."""


def cmd_serve(args) -> int:
    config = GatewayConfig(
        host=args.host,
        port=args.port,
        working_dir=Path(args.workdir),
        default_engine=args.engine,
        external_command=tuple(shlex.split(args.external_cmd)) if args.external_cmd else None,
        external_timeout=args.external_timeout,
        session_ttl=args.session_ttl,
        session_cap=args.session_cap,
        static_dir=Path(args.static_dir) if args.static_dir else None,
    )
    try:
        server = GatewayServer(config)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_STARTUP
    print(f"listening on http://{server.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down", file=sys.stderr)
    finally:
        server.close()  # waits for in-flight handler threads
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        image_path, mask_path = Path(args.image), Path(args.mask)
        if not image_path.is_file():
            raise SystemExit2(f"image file not found: {image_path}")
        if not mask_path.is_file():
            raise SystemExit2(f"mask file not found: {mask_path}")
        try:
            img = _load_gray(image_path)
            mask = _load_mask(mask_path)
        except SliceFillError as exc:
            raise SystemExit2(f"cannot read inputs: {exc}")
        report = validate_pair(img, mask)
        if not (report.image_size_ok and report.mask_size_ok):
            raise SystemExit2(
                f"inputs must be 100x100: image {img.width}x{img.height}, "
                f"mask {mask.width}x{mask.height}"
            )
        if report.mask_empty:
            raise SystemExit2("mask selects no pixels")
        if report.mask_full:
            raise SystemExit2("mask covers the whole image; no context")
        cfg = _engine_config(args)
    except SystemExit2 as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION

    try:
        result = run_pipeline(img, mask, cfg)
    except (EngineFailed, EngineTimeout, BadOutput) as exc:
        print(f"engine failure: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except (EmptyMask, FullMask) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION

    Path(args.out).write_bytes(encode_png(result.image))
    if args.debug_edges and result.edge_map is not None:
        Path(args.debug_edges).write_bytes(encode_png(render_edge_map(result.edge_map)))
    print(args.out)
    return EXIT_OK


def cmd_volume(args) -> int:
    try:
        vol_path = Path(args.volume)
        if not vol_path.is_file():
            raise SystemExit2(f"volume file not found: {vol_path}")
        try:
            volume = nrrd.parse_nrrd(vol_path.read_bytes())
        except SliceFillError as exc:
            raise SystemExit2(f"cannot parse volume: {exc}")
        nx, ny, nz = volume.dims
        k = args.slice
        if not 0 <= k < nz:
            raise SystemExit2(f"slice {k} outside 0..{nz - 1}")
        x0, y0 = args.roi
        if not (0 <= x0 and x0 + 100 <= nx and 0 <= y0 and y0 + 100 <= ny):
            raise SystemExit2(f"ROI ({x0},{y0}) does not fit a 100x100 patch in {nx}x{ny}")
        try:
            mask = _load_mask(Path(args.mask))
        except (SliceFillError, OSError) as exc:
            raise SystemExit2(f"cannot read mask: {exc}")
        if (mask.width, mask.height) != (100, 100):
            raise SystemExit2(f"mask must be 100x100, got {mask.width}x{mask.height}")
        if not mask.as_bool.any():
            raise SystemExit2("mask selects no pixels")
        if mask.as_bool.all():
            raise SystemExit2("mask covers the whole patch")
        cfg = _engine_config(args)
    except SystemExit2 as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION

    slc = nrrd.extract_axial_slice(volume, k)
    gray_full = window_level(slc.values, args.window, args.level)
    patch_in = GrayImage(gray_full.pixels[y0:y0 + 100, x0:x0 + 100].copy())

    try:
        result = run_pipeline(patch_in, mask, cfg)
    except (EngineFailed, EngineTimeout, BadOutput) as exc:
        print(f"engine failure: {exc}", file=sys.stderr)
        return EXIT_ENGINE

    patch = nrrd.SliceImage(values=result.image.pixels, slice_index=k)
    updated = nrrd.apply_axial_patch(volume, k, (x0, y0), patch)
    Path(args.out).write_bytes(nrrd.write_nrrd(updated))
    print(args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    external_command = tuple(shlex.split(args.external_cmd)) if args.external_cmd else None
    if args.engine == "external" and external_command is None:
        print("--external-cmd required with --engine external", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        result = bench_mod.run_bench(
            args.runs,
            engine=args.engine,
            external_command=external_command,
            external_timeout=args.external_timeout,
        )
    except (EngineFailed, EngineTimeout, BadOutput, RuntimeError) as exc:
        print(f"bench failed: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    if args.format == "tsv":
        print(bench_mod.format_tsv(result))
    else:
        print(bench_mod.format_table(result))
    if args.report_dir:
        written = bench_mod.write_report(result, Path(args.report_dir))
        for path in written:
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicefill",
        description="Inpainting service and batch tools for volumetric scan slices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_engine_flags(p, include_workdir=True):
        p.add_argument("--engine", choices=_ENGINE_CHOICES, default="diffusion",
                       help="fill engine (default: diffusion)")
        p.add_argument("--external-cmd", default=os.environ.get("SLICEFILL_EXTERNAL_CMD"),
                       help="external engine command line (shell-quoted)")
        p.add_argument("--external-timeout", type=float,
                       default=float(os.environ.get("SLICEFILL_EXTERNAL_TIMEOUT", "30")),
                       help="external engine timeout in seconds")
        if include_workdir:
            p.add_argument("--workdir", default=os.environ.get("SLICEFILL_WORKDIR", "/tmp/slicefill-work"),
                           help="directory for uid-scoped engine temp files")

    p_serve = sub.add_parser("serve", help="run the HTTP gateway")
    p_serve.add_argument("--host", default=os.environ.get("SLICEFILL_HOST", "127.0.0.1"))
    p_serve.add_argument("--port", type=int,
                         default=int(os.environ.get("SLICEFILL_PORT", "8080")),
                         help="0 picks a free port")
    p_serve.add_argument("--session-ttl", type=float, default=7200.0,
                         help="volume session lifetime in seconds")
    p_serve.add_argument("--session-cap", type=int, default=32,
                         help="max volumes held in memory")
    p_serve.add_argument("--static-dir", default=None,
                         help="serve a front-end bundle from this directory")
    add_engine_flags(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    p_run = sub.add_parser("run", help="inpaint a 100x100 PNG pair")
    p_run.add_argument("image", help="100x100 grayscale PNG")
    p_run.add_argument("mask", help="100x100 mask PNG (nonzero red = hole)")
    p_run.add_argument("--out", default="result.png")
    p_run.add_argument("--debug-edges", default=None,
                       help="also write the stage-one edge map PNG here")
    add_engine_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_vol = sub.add_parser("volume", help="inpaint inside a NRRD volume")
    p_vol.add_argument("volume", help="input NRRD file")
    p_vol.add_argument("mask", help="100x100 mask PNG")
    p_vol.add_argument("--slice", type=int, required=True, help="axial z index")
    p_vol.add_argument("--roi", type=_roi, required=True, help="patch origin 'x0,y0'")
    p_vol.add_argument("--out", default="inpainted.nrrd")
    p_vol.add_argument("--window", type=float, default=DEFAULT_WINDOW)
    p_vol.add_argument("--level", type=float, default=DEFAULT_LEVEL)
    add_engine_flags(p_vol)
    p_vol.set_defaults(func=cmd_volume)

    p_bench = sub.add_parser("bench", help="timing decomposition over loopback HTTP")
    p_bench.add_argument("-n", "--runs", type=_positive_int, default=5)
    p_bench.add_argument("--format", choices=("table", "tsv"), default="table")
    p_bench.add_argument("--report-dir", default=None,
                         help="write bench.tsv and figures into this directory")
    add_engine_flags(p_bench, include_workdir=False)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
