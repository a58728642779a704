"""Experiment configuration: a flat ``key = value`` file with unit-suffixed keys.

Dimensional keys carry their unit in the name, e.g. ``wp_mm = 0.65`` or
``pump_wavelength_nm = 355``; the same quantity may be given in any unit
of its dimension (``wp_um = 650``). Lists are comma separated. ``#`` starts
a comment. Unknown keys, duplicate keys and wrong-dimension units are
rejected with the offending key and line number.

Keys and defaults (SI after conversion)::

    crystal_length_<len>     1 cm        crystal length l
    refractive_index         1.66        degenerate signal/idler index
    gain                     1.5         parametric gain g at beam center
    wp_<len>                 required    pump amplitude radius w_p
    pump_wavelength_<len>    355 nm
    pump_power_<pow>         0.78 MW     per-pulse peak power
    signal_wavelength_<len>  2 x pump    detected (degenerate) wavelength
    detuning                 ideal       ideal | paraxial
    theta_<ang>              0.05 rad    emission angle for the sinc HWHM
    delta_k0_per_m           0           collinear detuning offset
    model                    diagonal    diagonal | split-step (needed for speckle geometry)
    ordering                 symmetric   symmetric | normal
    z_steps                  40
    temporal_modes           100
    seed                     0
    power_jitter             0.2         RMS relative power fluctuation per shot
    quantum_efficiency       0.8
    read_noise_e             5           RMS electrons per pixel
    integerize               round       round | poisson | none (analog)
    ccd_width_px             1340
    ccd_height_px            400
    pixel_pitch_<len>        20 um
    focal_length_<len>       10 cm
    grid_nx, grid_ny         128
    oversample               1           simulation cells per pixel (odd)
    block_px                 (auto)      odd pixel size of each beam block
    region_r1_px             (auto)      x, y, w, h of the signal region
    frames                   30          frames per sweep point
    workers                  1
    sweep_kind               none        none | power | diameter
    sweep_power_<pow>        -           list, power sweep points
    sweep_diameter_<len>     -           list, pump diameters (w_p = d / 2)
    gain_sigma               1.91        g = sigma sqrt(P / 1 MW)
    gain_ref_diameter_<len>  (unset)     diameter sweeps: g = gain d_ref / d if set,
                                         else g = gain at every diameter
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeometryError
from .kernel import CrystalParams, DetuningModel, ModeGrid, PumpParams
from .simulator import DetectorParams, SimFidelity

UNITS = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "power": {"W": 1.0, "kW": 1e3, "MW": 1e6},
    "angle": {"rad": 1.0, "deg": np.pi / 180},
    "wavenumber": {"per_m": 1.0},
    "electrons": {"e": 1.0},
    "pixels": {"px": 1.0},
}

# base name -> (kind, default); kind is a unit dimension, "float", "int", "str"
# or "<dimension>-list"
KEYS: dict[str, tuple[str, object]] = {
    "crystal_length": ("length", 1e-2),
    "refractive_index": ("float", 1.66),
    "gain": ("float", 1.5),
    "wp": ("length", None),
    "pump_wavelength": ("length", 355e-9),
    "pump_power": ("power", 0.78e6),
    "signal_wavelength": ("length", None),
    "detuning": ("str", "ideal"),
    "theta": ("angle", 0.05),
    "delta_k0": ("wavenumber", 0.0),
    "model": ("str", "diagonal"),
    "ordering": ("str", "symmetric"),
    "z_steps": ("int", 40),
    "temporal_modes": ("int", 100),
    "seed": ("int", 0),
    "power_jitter": ("float", 0.2),
    "quantum_efficiency": ("float", 0.8),
    "read_noise": ("electrons", 5.0),
    "integerize": ("str", "round"),
    "ccd_width": ("pixels", 1340),
    "ccd_height": ("pixels", 400),
    "pixel_pitch": ("length", 20e-6),
    "focal_length": ("length", 0.1),
    "grid_nx": ("int", 128),
    "grid_ny": ("int", 128),
    "oversample": ("int", 1),
    "block": ("pixels-list", None),
    "region_r1": ("pixels-list", None),
    "frames": ("int", 30),
    "workers": ("int", 1),
    "sweep_kind": ("str", "none"),
    "sweep_power": ("power-list", None),
    "sweep_diameter": ("length-list", None),
    "gain_sigma": ("float", 1.91),
    "gain_ref_diameter": ("length", None),
}
REQUIRED = ("wp",)


@dataclass(frozen=True)
class SweepSpec:
    kind: str = "none"
    values: tuple[float, ...] = ()     # watts or meters (diameter)
    gain_sigma: float = 1.91
    gain_ref_diameter: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "power", "diameter"):
            raise ConfigError(f"unknown sweep kind {self.kind!r}", key="sweep_kind")
        if self.kind != "none" and not self.values:
            raise ConfigError("sweep has no points", key=f"sweep_{self.kind}")
        if any(v <= 0 for v in self.values):
            raise ConfigError("sweep values must be > 0", key=f"sweep_{self.kind}")

    def gain_at_power(self, power_w: float) -> float:
        return self.gain_sigma * np.sqrt(power_w / 1e6)

    def gain_at_diameter(self, diameter_m: float, gain: float) -> float:
        """``gain`` is the configured gain, held fixed unless a reference diameter is set."""
        if self.gain_ref_diameter is None:
            return gain
        return gain * self.gain_ref_diameter / diameter_m


@dataclass(frozen=True)
class ExperimentConfig:
    crystal: CrystalParams
    pump: PumpParams
    detuning: DetuningModel
    fidelity: SimFidelity
    detector: DetectorParams
    grid: ModeGrid
    frames: int = 30
    workers: int = 1
    block_px: tuple[int, int] | None = None
    region_r1: tuple[int, int, int, int] | None = None
    sweep: SweepSpec = SweepSpec()

    def __post_init__(self):
        if self.frames < 1:
            raise ConfigError("frames must be >= 1", key="frames")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="workers")
        if abs(self.detector.pixel_pitch - self.grid.pixel_pitch) > 1e-15:
            raise ConfigError("grid and detector pixel pitch differ", key="pixel_pitch")
        if self.block_px is not None and any(b % 2 == 0 or b < 1 for b in self.block_px):
            raise ConfigError("block sizes must be odd and positive", key="block_px")

    @classmethod
    def default(cls, waist: float = 0.65e-3, **overrides) -> "ExperimentConfig":
        """Apparatus values of the reference setup, everything else at the documented defaults."""
        return from_mapping({"wp": waist, **overrides})

    def with_gain(self, g: float) -> "ExperimentConfig":
        return replace(self, crystal=replace(self.crystal, gain=float(g)))

    def with_waist(self, waist: float) -> "ExperimentConfig":
        return replace(self, pump=replace(self.pump, waist=float(waist)))

    def with_power(self, power_w: float) -> "ExperimentConfig":
        return replace(self, pump=replace(self.pump, peak_power=float(power_w)))

    def with_fidelity(self, **kw) -> "ExperimentConfig":
        return replace(self, fidelity=replace(self.fidelity, **kw))

    def with_detector(self, **kw) -> "ExperimentConfig":
        return replace(self, detector=replace(self.detector, **kw))

    def echo(self) -> dict[str, object]:
        """Resolved configuration in canonical file keys (SI-derived units)."""
        c, p, d, f, det, g = (self.crystal, self.pump, self.detuning, self.fidelity,
                              self.detector, self.grid)
        out = {
            "crystal_length_m": c.length,
            "refractive_index": c.refractive_index,
            "gain": c.gain,
            "wp_m": p.waist,
            "pump_wavelength_m": p.wavelength,
            "pump_power_W": p.peak_power,
            "signal_wavelength_m": g.wavelength,
            "detuning": d.variant,
            "theta_rad": d.theta,
            "delta_k0_per_m": d.delta_k0,
            "model": f.model,
            "ordering": f.ordering,
            "z_steps": f.n_z_steps,
            "temporal_modes": f.temporal_modes,
            "seed": f.rng_seed,
            "power_jitter": f.power_jitter,
            "quantum_efficiency": det.quantum_efficiency,
            "read_noise_e": det.read_noise,
            "integerize": det.integerize,
            "ccd_width_px": det.ccd_shape[1],
            "ccd_height_px": det.ccd_shape[0],
            "pixel_pitch_m": det.pixel_pitch,
            "focal_length_m": g.focal_f,
            "grid_nx": g.n_x,
            "grid_ny": g.n_y,
            "oversample": g.oversample,
            "frames": self.frames,
            "workers": self.workers,
            "sweep_kind": self.sweep.kind,
            "gain_sigma": self.sweep.gain_sigma,
        }
        if self.block_px is not None:
            out["block_px"] = ",".join(map(str, self.block_px))
        if self.region_r1 is not None:
            out["region_r1_px"] = ",".join(map(str, self.region_r1))
        if self.sweep.kind == "power":
            out["sweep_power_W"] = ",".join(repr(v) for v in self.sweep.values)
        elif self.sweep.kind == "diameter":
            out["sweep_diameter_m"] = ",".join(repr(v) for v in self.sweep.values)
        if self.sweep.gain_ref_diameter is not None:
            out["gain_ref_diameter_m"] = self.sweep.gain_ref_diameter
        return out

    def echo_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.echo().items())

    @property
    def hash(self) -> str:
        # workers does not influence results
        text = "".join(line for line in self.echo_text().splitlines(True)
                       if not line.startswith("workers "))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _split_key(key: str, line: int | None):
    """Return (base, unit) for a file key, validating the unit's dimension."""
    if key in KEYS:
        kind = KEYS[key][0].removesuffix("-list")
        if kind in UNITS:
            raise ConfigError("dimensional key needs a unit suffix", key=key, line=line)
        return key, None
    for dim_units in UNITS.values():
        for unit in dim_units:
            suffix = "_" + unit
            if key.endswith(suffix):
                base = key[: -len(suffix)]
                if base not in KEYS:
                    continue
                kind = KEYS[base][0].removesuffix("-list")
                if kind not in UNITS:
                    raise ConfigError(f"{base} takes no unit", key=key, line=line)
                if unit not in UNITS[kind]:
                    raise ConfigError(
                        f"unit {unit!r} is not a {kind} unit", key=key, line=line)
                return base, unit
    raise ConfigError("unknown key", key=key, line=line)


def _convert(base: str, unit: str | None, raw: str, key: str, line: int | None):
    kind = KEYS[base][0]
    is_list = kind.endswith("-list")
    kind = kind.removesuffix("-list")
    try:
        if kind == "str":
            return raw.strip().lower()
        if kind == "int":
            return int(raw)
        if is_list:
            parts = [p for p in raw.replace(" ", "").split(",") if p]
            vals = tuple(float(p) * UNITS[kind][unit] for p in parts)
            if kind == "pixels":
                vals = tuple(int(round(v)) for v in vals)
            return vals
        v = float(raw)
        if kind == "float":
            return v
        v *= UNITS[kind][unit]
        return int(round(v)) if kind == "pixels" else v
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {raw!r}: {exc}", key=key, line=line) from None


def parse_config_text(text: str) -> tuple[dict[str, object], dict[str, int]]:
    """Parse to ``{base: SI value}`` plus ``{base: line number}``."""
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, val = (s.strip() for s in body.split("=", 1))
        base, unit = _split_key(key, lineno)
        if base in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        values[base] = _convert(base, unit, val, key, lineno)
        lines[base] = lineno
    return values, lines


def from_mapping(values: dict[str, object], lines: dict[str, int] | None = None
                 ) -> ExperimentConfig:
    """Build a config from ``{base key: SI value}``; missing keys get defaults."""
    lines = lines or {}
    for k in values:
        if k not in KEYS:
            raise ConfigError("unknown key", key=k)
    for k in REQUIRED:
        if values.get(k) is None:
            raise ConfigError("missing required key", key=f"{k}_<unit>")
    v = {k: values.get(k, default) for k, (_, default) in KEYS.items()}

    try:
        crystal = CrystalParams(v["crystal_length"], v["refractive_index"], v["gain"])
        pump = PumpParams(v["wp"], v["pump_wavelength"], v["pump_power"])
        detuning = DetuningModel(v["detuning"], v["theta"], v["delta_k0"])
        fidelity = SimFidelity(v["model"], v["z_steps"], v["temporal_modes"], v["seed"],
                               v["ordering"], v["power_jitter"])
        detector = DetectorParams(v["quantum_efficiency"], v["read_noise"],
                                  (int(v["ccd_height"]), int(v["ccd_width"])),
                                  v["pixel_pitch"], v["integerize"])
        wavelength = v["signal_wavelength"] or 2 * pump.wavelength
        try:
            grid = ModeGrid.from_detector(
                v["grid_nx"], v["grid_ny"], focal_f=v["focal_length"],
                pixel_pitch=v["pixel_pitch"], wavelength=wavelength,
                oversample=v["oversample"])
        except GeometryError as exc:
            raise ConfigError(str(exc), key="grid_nx") from None
        if not v["focal_length"] > 0:
            raise ConfigError("focal length must be > 0", key="focal_length")
        if v["oversample"] < 1 or v["oversample"] % 2 == 0:
            raise ConfigError("oversample must be an odd positive integer", key="oversample")
        kind = v["sweep_kind"]
        sweep_vals = ()
        if kind == "power":
            sweep_vals = v["sweep_power"] or ()
        elif kind == "diameter":
            sweep_vals = v["sweep_diameter"] or ()
        sweep = SweepSpec(kind, tuple(sweep_vals), v["gain_sigma"], v["gain_ref_diameter"])
        block = v["block"]
        if block is not None:
            block = tuple(block) * 2 if len(block) == 1 else tuple(block)
            if len(block) != 2:
                raise ConfigError("block_px takes one or two sizes", key="block")
        region = v["region_r1"]
        if region is not None and len(region) != 4:
            raise ConfigError("region_r1_px takes x, y, w, h", key="region_r1")
        return ExperimentConfig(crystal, pump, detuning, fidelity, detector, grid,
                                v["frames"], v["workers"], block, region, sweep)
    except ConfigError as exc:
        if exc.line is None and exc.key in lines:
            msg = str(exc).rsplit(" (", 1)[0]
            raise ConfigError(msg, key=exc.key, line=lines[exc.key]) from None
        raise


def read_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values, lines = parse_config_text(path.read_text())
    return from_mapping(values, lines)
