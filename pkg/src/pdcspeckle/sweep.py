"""Power and diameter sweeps: simulate, analyze, average, fit.

Every output is a deterministic function of the configuration (including
its master seed); point k uses a seed derived from (master, k).
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import frameio
from .analysis import Region, analyze_frame
from .config import ExperimentConfig
from .errors import PDCError
from .fitting import CurveData, fit_linear_shifted, fit_power_law, fit_sinh2
from .simulator import simulate_frames

SWEEP_COLUMNS = [
    "index", "power_MW", "diameter_mm", "gain", "waist_mm",
    "mean_counts", "mean_counts_se", "radius_px", "radius_px_se",
    "c12_peak", "c12_peak_se", "sigma2", "sigma2_se", "sigma2_norm", "sigma2_norm_se",
    "frames", "failed", "seed", "config_hash", "diagnostic",
]
FIT_COLUMNS = [
    "model", "x_column", "y_column", "param1", "value1", "stderr1",
    "param2", "value2", "stderr2", "residual_rms", "n_points", "config_hash", "diagnostic",
]
_STATS = ("mean_counts", "radius_px", "c12_peak", "sigma2", "sigma2_norm")


def point_seed(master: int, index: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def point_config(config: ExperimentConfig, index: int) -> ExperimentConfig:
    sw = config.sweep
    value = sw.values[index]
    if sw.kind == "power":
        return config.with_power(value).with_gain(sw.gain_at_power(value))
    if sw.kind == "diameter":
        g = sw.gain_at_diameter(value, config.crystal.gain)
        return config.with_waist(value / 2).with_gain(g)
    raise PDCError("configuration has no sweep")


def _mean_se(vals):
    v = np.asarray([x for x in vals if np.isfinite(x)])
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def run_point(config: ExperimentConfig, index: int, workers: int | None = None) -> dict:
    cfg = point_config(config, index)
    seed = point_seed(config.fidelity.rng_seed, index)
    row = {
        "index": index,
        "power_MW": cfg.pump.peak_power / 1e6,
        "diameter_mm": 2 * cfg.pump.waist * 1e3,
        "gain": cfg.crystal.gain,
        "waist_mm": cfg.pump.waist * 1e3,
        "frames": config.frames,
        "failed": 0,
        "seed": seed,
        "config_hash": config.hash,
        "diagnostic": "",
    }
    try:
        frames = simulate_frames(cfg, config.frames, seed, workers or config.workers,
                                 block_px=config.block_px)
        results = []
        notes = []
        for fr in frames:
            r1 = r2 = None
            if config.region_r1 is not None:
                x, y, w, h = config.region_r1
                r1 = Region(x, y, w, h, "signal", fr.symmetry_center)
                r2 = r1.mirror()
            res = analyze_frame(fr, r1, r2)
            if res["diagnostic"]:
                notes.append(res["diagnostic"])
            results.append(res)
        for key in _STATS:
            row[key], row[key + "_se"] = _mean_se([r[key] for r in results])
        row["failed"] = sum(1 for r in results if not np.isfinite(r["radius_px"]))
        if notes:
            row["diagnostic"] = f"{len(notes)} frame(s): {notes[0]}"
    except PDCError as exc:
        for key in _STATS:
            row[key] = row[key + "_se"] = math.nan
        row["failed"] = config.frames
        row["diagnostic"] = f"{exc.category}: {exc}"
    return row


def _fit_row(model, xcol, ycol, rows, fitter, config_hash):
    xs = frameio.column(rows, xcol)
    ys = frameio.column(rows, ycol)
    ok = np.isfinite(xs) & np.isfinite(ys)
    out = {"model": model, "x_column": xcol, "y_column": ycol,
           "config_hash": config_hash, "n_points": int(ok.sum()), "diagnostic": ""}
    try:
        res = fitter(CurveData(xs[ok], ys[ok]))
    except PDCError as exc:
        out["diagnostic"] = f"{exc.category}: {exc}"
        return out, None
    for n, (name, val) in enumerate(res.params.items(), start=1):
        out[f"param{n}"] = name
        out[f"value{n}"] = val
        out[f"stderr{n}"] = res.param_errs[name]
    out["residual_rms"] = res.residual_rms
    return out, res


def fit_sweep(config: ExperimentConfig, rows: list[dict]) -> list[dict]:
    h = config.hash
    if config.sweep.kind == "power":
        specs = [("sinh2", "power_MW", "mean_counts", fit_sinh2),
                 ("linear", "power_MW", "radius_px", fit_linear_shifted)]
    else:
        specs = [("powerlaw", "diameter_mm", "radius_px", fit_power_law)]
    return [_fit_row(m, x, y, rows, f, h)[0] for m, x, y, f in specs]


def run_sweep(config: ExperimentConfig, out_dir=None, workers: int | None = None
              ) -> tuple[list[dict], list[dict]]:
    """Rows in sweep order, then fit rows; written as CSV when ``out_dir`` is given."""
    if config.sweep.kind == "none":
        raise PDCError("configuration has no sweep (sweep_kind = none)")
    rows = [run_point(config, k, workers) for k in range(len(config.sweep.values))]
    fits = fit_sweep(config, rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        frameio.write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
        frameio.write_csv(out / "fits.csv", fits, FIT_COLUMNS)
        (out / "config.txt").write_text(
            f"# config_hash = {config.hash}\n" + config.echo_text())
    return rows, fits
