"""Command-line workflow: simulate -> analyze -> fit, and full sweeps.

Failures print one JSON line ``{"error": <category>, "message": ...}`` to
stderr and exit with the category's code (2 usage, 3 config, 4 geometry,
5 integrity/scaling, 6 analysis, 7 fit).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import frameio
from .analysis import Region, analyze_frame
from .config import read_config
from .errors import FitError, PDCError
from .fitting import FITTERS, CurveData
from .simulator import simulate_frames
from .sweep import FIT_COLUMNS, _fit_row, run_sweep

ANALYZE_COLUMNS = ["file", "mean_counts", "radius_px", "c12_peak", "c12_peak_dy",
                   "c12_peak_dx", "sigma2", "sigma2_norm", "diagnostic"]
DEFAULT_COLUMNS = {
    "sinh2": ("power_MW", "mean_counts"),
    "linear": ("power_MW", "radius_px"),
    "powerlaw": ("diameter_mm", "radius_px"),
}


def cmd_simulate(args) -> int:
    cfg = read_config(args.config)
    n = args.frames if args.frames is not None else cfg.frames
    seed = args.seed if args.seed is not None else cfg.fidelity.rng_seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = simulate_frames(cfg, n, seed, args.workers or cfg.workers, block_px=cfg.block_px)
    for k, fr in enumerate(frames):
        fr.metadata["config_hash"] = cfg.hash
        frameio.write_frame(out / f"frame_{k:04d}.pgm", fr, cfg.hash)
    (out / "config.txt").write_text(f"# config_hash = {cfg.hash}\n" + cfg.echo_text())
    return 0


def cmd_analyze(args) -> int:
    paths = frameio.frame_paths(args.frames)
    if not paths:
        raise PDCError(f"no frames found in {args.frames}")
    rows = []
    for p in paths:
        fr = frameio.read_frame(p)
        r1 = r2 = None
        if args.r1:
            r1 = Region.parse(args.r1)
            r1 = Region(r1.x0, r1.y0, r1.width, r1.height, "signal", tuple(fr.symmetry_center))
            if args.r2 and args.r2 != "mirror":
                r2 = Region.parse(args.r2, role="idler")
            else:
                r2 = r1.mirror()
        res = analyze_frame(fr, r1, r2)
        res["file"] = p.name
        rows.append(res)
    frameio.write_csv(args.out, rows, ANALYZE_COLUMNS)
    return 0


def cmd_fit(args) -> int:
    rows = frameio.read_csv(args.input)
    if not rows:
        raise FitError(f"{args.input} has no data rows")
    cols = list(rows[0].keys())
    dx, dy = DEFAULT_COLUMNS[args.model]
    xcol = args.x or (dx if dx in cols else cols[0])
    ycol = args.y or (dy if dy in cols else cols[1])
    for c in (xcol, ycol):
        if c not in cols:
            raise FitError(f"column {c!r} not in {args.input}")
    if args.yerr:
        xs, ys = frameio.column(rows, xcol), frameio.column(rows, ycol)
        res = FITTERS[args.model](CurveData(xs, ys, frameio.column(rows, args.yerr)))
        row = {"model": args.model, "x_column": xcol, "y_column": ycol,
               "n_points": res.n_points, "residual_rms": res.residual_rms, "diagnostic": ""}
        for n, (name, val) in enumerate(res.params.items(), start=1):
            row[f"param{n}"], row[f"value{n}"] = name, val
            row[f"stderr{n}"] = res.param_errs[name]
    else:
        row, res = _fit_row(args.model, xcol, ycol, rows, FITTERS[args.model], "")
        if res is None:
            raise FitError(row["diagnostic"])
    frameio.write_csv(args.out, [row], FIT_COLUMNS)
    return 0


def cmd_sweep(args) -> int:
    cfg = read_config(args.config)
    run_sweep(cfg, args.out, args.workers)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdcspeckle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate detected frames")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="correlation, radius and sigma^2 per frame")
    a.add_argument("--frames", required=True, help="directory of frames")
    a.add_argument("--r1", help="signal region x,y,w,h (default: whole signal block)")
    a.add_argument("--r2", help="idler region x,y,w,h or 'mirror' (default)")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fit", help="fit a curve from a CSV table")
    f.add_argument("--model", required=True, choices=sorted(FITTERS))
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--x")
    f.add_argument("--y")
    f.add_argument("--yerr")
    f.set_defaults(func=cmd_fit)

    w = sub.add_parser("sweep", help="power or diameter sweep with fits")
    w.add_argument("--config", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--workers", type=int)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PDCError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 8


if __name__ == "__main__":
    sys.exit(main())
