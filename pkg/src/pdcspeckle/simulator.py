"""Stochastic generation of far-field twin-beam frames.

Vacuum input is sampled as complex Gaussian noise of variance 1/2 per mode
(symmetric ordering), amplified either mode-by-mode (``diagonal``) or by
split-step propagation through the Gaussian-pumped crystal (``split-step``),
then detected by a CCD model.

With ``ordering="normal"`` only the generated part of each output field is
kept, rescaled to unit-variance seeds. That reproduces the normally ordered
single-beam statistics exactly (mean photon number and intensity
correlations, with no vacuum term), which is what makes speckle visible at
low gain. Signal/idler cross-statistics are not represented in that mode.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from .errors import ConfigError, GeometryError
from .kernel import ModeGrid, degenerate_wavenumber, delta_k, sinc

MAX_STEP_GAIN = 0.2
_CHUNK = 32

# spawn-key tags below the frame index
_MODES, _JITTER, _DETECT = 0, 1, 2


@dataclass
class ComplexField:
    grid: ModeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise GeometryError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class SimFidelity:
    model: Literal["diagonal", "split-step"] = "diagonal"
    n_z_steps: int = 40
    temporal_modes: int = 100
    rng_seed: int = 0
    ordering: Literal["symmetric", "normal"] = "symmetric"
    power_jitter: float = 0.2

    def __post_init__(self):
        if self.model not in ("diagonal", "split-step"):
            raise ConfigError(f"unknown model {self.model!r}", key="model")
        if self.ordering not in ("symmetric", "normal"):
            raise ConfigError(f"unknown ordering {self.ordering!r}", key="ordering")
        if self.n_z_steps < 1:
            raise ConfigError("n_z_steps must be >= 1", key="z_steps")
        if self.temporal_modes < 1:
            raise ConfigError("temporal_modes must be >= 1", key="temporal_modes")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng seed must be a 64-bit unsigned integer", key="seed")
        if self.power_jitter < 0:
            raise ConfigError("power jitter must be >= 0", key="power_jitter")


@dataclass(frozen=True)
class DetectorParams:
    quantum_efficiency: float = 0.8
    read_noise: float = 5.0
    ccd_shape: tuple[int, int] = (400, 1340)   # rows, columns
    pixel_pitch: float = 20e-6
    # "none" keeps analog photon numbers (loss as a scale factor): an ideal
    # noiseless readout for studying the field statistics themselves
    integerize: Literal["round", "poisson", "none"] = "round"

    def __post_init__(self):
        if not 0 <= self.quantum_efficiency <= 1:
            raise ConfigError("quantum efficiency must lie in [0, 1]", key="quantum_efficiency")
        if self.read_noise < 0:
            raise ConfigError("read noise must be >= 0", key="read_noise")
        if self.integerize not in ("round", "poisson", "none"):
            raise ConfigError(f"unknown integerization {self.integerize!r}", key="integerize")


@dataclass
class Frame:
    """One detected shot: signal block on top, idler block below.

    ``symmetry_center`` is the (row, col) point through which signal pixel
    ``x`` maps onto its twin idler pixel ``2c - x``.
    """

    counts: np.ndarray
    grid: ModeGrid
    symmetry_center: tuple[float, float]
    block_shape: tuple[int, int]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        h, w = self.block_shape
        if self.counts.shape != (2 * h, w):
            raise GeometryError(
                f"counts shape {self.counts.shape} inconsistent with block {self.block_shape}")

    @property
    def signal(self) -> np.ndarray:
        return self.counts[: self.block_shape[0]]

    @property
    def idler(self) -> np.ndarray:
        return self.counts[self.block_shape[0]:]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (np.array_equal(self.counts, other.counts)
                and self.counts.dtype == other.counts.dtype
                and self.grid == other.grid
                and tuple(self.symmetry_center) == tuple(other.symmetry_center)
                and tuple(self.block_shape) == tuple(other.block_shape)
                and self.metadata == other.metadata)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_seq(seed, *key) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def sample_vacuum(grid: ModeGrid, seed) -> tuple[ComplexField, ComplexField]:
    """Independent complex-Gaussian vacuum amplitudes, <|a|^2> = 1/2 per mode."""
    rng = _rng(seed)
    z = rng.standard_normal((2, 2) + grid.shape) * 0.5
    a = z[:, 0] + 1j * z[:, 1]
    return ComplexField(grid, a[0]), ComplexField(grid, a[1])


def bogoliubov_pair(a_s, a_i, g_eff):
    """Two-mode parametric amplifier: a_s -> cosh g a_s + sinh g a_i*."""
    g_eff = np.asarray(g_eff, dtype=float)
    if np.any(g_eff < 0):
        raise ValueError("g_eff must be >= 0")
    ch, sh = np.cosh(g_eff), np.sinh(g_eff)
    return ch * a_s + sh * np.conj(a_i), ch * a_i + sh * np.conj(a_s)


def _mirror(arr: np.ndarray) -> np.ndarray:
    """Map a centered q array onto -q along the last two axes."""
    ny, nx = arr.shape[-2:]
    my = (ny - np.arange(ny)) % ny
    mx = (nx - np.arange(nx)) % nx
    return arr[..., my, :][..., mx]


def diagonal_gain(config, g: float | None = None) -> np.ndarray:
    """g_eff(q) = g sinc(dk(q, -q) l / 2) on the centered grid."""
    g = config.crystal.gain if g is None else g
    qy, qx = config.grid.q_mesh()
    q = np.stack([qy, qx], axis=-1)
    dk = delta_k(q, -q, config.detuning, config.crystal, config.pump)
    # a negative sinc lobe only flips the coupling phase
    return g * np.abs(sinc(dk * config.crystal.length / 2))


def _batch_vacuum(grid, seqs):
    a_s = np.empty((len(seqs),) + grid.shape, complex)
    a_i = np.empty_like(a_s)
    for n, ss in enumerate(seqs):
        s, i = sample_vacuum(grid, np.random.default_rng(ss))
        a_s[n], a_i[n] = s.values, i.values
    return a_s, a_i


def _diagonal_fields(config, a_s, a_i, g):
    g_eff = diagonal_gain(config, g)
    ch, sh = np.cosh(g_eff), np.sinh(g_eff)
    out_s = ch * a_s + sh * np.conj(_mirror(a_i))
    out_i = ch * a_i + sh * np.conj(_mirror(a_s))
    return out_s, out_i


def _split_step_fields(config, fidelity, a_s, a_i, g):
    grid = config.grid
    n = fidelity.n_z_steps
    if g / n > MAX_STEP_GAIN + 1e-12:
        raise ConfigError(
            f"per-step gain {g / n:.3g} exceeds {MAX_STEP_GAIN}; raise z_steps", key="z_steps")
    length = config.crystal.length
    dz = length / n
    ry, rx = grid.rho_mesh()
    profile = np.fft.ifftshift(np.exp(-(ry**2 + rx**2) / config.pump.waist**2))
    axes = (-2, -1)

    def to_rho(a):
        return np.fft.ifft2(np.fft.ifftshift(a, axes=axes), norm="ortho")

    def to_q(e):
        return np.fft.fftshift(np.fft.fft2(e, norm="ortho"), axes=axes)

    if config.detuning.variant == "ideal":
        # no diffraction phase: the local rotations commute and sum exactly
        gl = g * profile
        ch, sh = np.cosh(gl), np.sinh(gl)
        es, ei = to_rho(a_s), to_rho(a_i)
        return to_q(ch * es + sh * np.conj(ei)), to_q(ch * ei + sh * np.conj(es))

    k_deg = degenerate_wavenumber(config.crystal, config.pump)
    grid.check_light_cone(k_deg)
    qy, qx = grid.q_mesh()
    rate = np.fft.ifftshift((qy**2 + qx**2) / (2 * k_deg) - config.detuning.delta_k0 / 2)
    half = np.exp(-1j * rate * dz / 2)
    full = half * half
    gl = g / length * profile * dz
    ch, sh = np.cosh(gl), np.sinh(gl)

    ks = np.fft.ifftshift(a_s, axes=axes) * half
    ki = np.fft.ifftshift(a_i, axes=axes) * half
    for step in range(n):
        es = np.fft.ifft2(ks, norm="ortho")
        ei = np.fft.ifft2(ki, norm="ortho")
        es, ei = ch * es + sh * np.conj(ei), ch * ei + sh * np.conj(es)
        phase = half if step == n - 1 else full
        ks = np.fft.fft2(es, norm="ortho") * phase
        ki = np.fft.fft2(ei, norm="ortho") * phase
    return np.fft.fftshift(ks, axes=axes), np.fft.fftshift(ki, axes=axes)


def _propagate(config, fidelity, a_s, a_i, g):
    if fidelity.model == "diagonal":
        return _diagonal_fields(config, a_s, a_i, g)
    return _split_step_fields(config, fidelity, a_s, a_i, g)


def _intensities(config, fidelity, a_s, a_i, g):
    """Per-mode photon-number estimates for a batch of vacuum inputs."""
    if fidelity.ordering == "symmetric":
        out_s, out_i = _propagate(config, fidelity, a_s, a_i, g)
        return np.abs(out_s) ** 2 - 0.5, np.abs(out_i) ** 2 - 0.5
    # the map is real-linear, out(a) = U a + V a*, so
    # V a* = (out(a) + i out(i a)) / 2; sqrt(2) restores unit seed variance
    b = len(a_s)
    out_s, out_i = _propagate(config, fidelity,
                              np.concatenate([a_s, 1j * a_s]),
                              np.concatenate([a_i, 1j * a_i]), g)
    gen_s = (out_s[:b] + 1j * out_s[b:]) / np.sqrt(2)
    gen_i = (out_i[:b] + 1j * out_i[b:]) / np.sqrt(2)
    return np.abs(gen_s) ** 2, np.abs(gen_i) ** 2


def _single_mode(config, fidelity, seed, model):
    a_s, a_i = sample_vacuum(config.grid, seed)
    fid = fidelity if fidelity.model == model else _replace(fidelity, model=model)
    i_s, i_i = _intensities(config, fid, a_s.values[None], a_i.values[None],
                            config.crystal.gain)
    return i_s[0], i_i[0]


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def simulate_diagonal(config, fidelity: SimFidelity, seed):
    """One temporal mode of the mode-by-mode (q, -q) amplifier."""
    if fidelity.model != "diagonal":
        raise ConfigError("simulate_diagonal requires model = diagonal", key="model")
    return _single_mode(config, fidelity, seed, "diagonal")


def simulate_split_step(config, fidelity: SimFidelity, seed):
    """One temporal mode propagated through the Gaussian-pumped crystal."""
    if fidelity.model != "split-step":
        raise ConfigError("simulate_split_step requires model = split-step", key="model")
    return _single_mode(config, fidelity, seed, "split-step")


def temporal_mode_stack(config, fidelity: SimFidelity, seed, g: float | None = None,
                        n_modes: int | None = None, summed: bool = True):
    """Intensities of ``n_modes`` independent temporal modes.

    Mode ``m`` draws its vacuum from the seed sequence with spawn key
    ``(..., 0, m)``, so results do not depend on how modes are batched.
    Returns per-cell sums over modes if ``summed`` else (M, ny, nx) stacks.
    """
    g = config.crystal.gain if g is None else g
    n_modes = fidelity.temporal_modes if n_modes is None else n_modes
    shape = config.grid.shape
    if summed:
        tot_s, tot_i = np.zeros(shape), np.zeros(shape)
    else:
        tot_s, tot_i = np.empty((n_modes,) + shape), np.empty((n_modes,) + shape)
    for start in range(0, n_modes, _CHUNK):
        idx = range(start, min(start + _CHUNK, n_modes))
        seqs = [_seed_seq(seed, _MODES, m) for m in idx]
        a_s, a_i = _batch_vacuum(config.grid, seqs)
        i_s, i_i = _intensities(config, fidelity, a_s, a_i, g)
        if summed:
            tot_s += i_s.sum(axis=0)
            tot_i += i_i.sum(axis=0)
        else:
            tot_s[idx.start:idx.stop], tot_i[idx.start:idx.stop] = i_s, i_i
    return tot_s, tot_i


def pixel_block(grid: ModeGrid) -> tuple[int, int]:
    """Largest (rows, cols) pixel block centered on q = 0 that the grid covers."""
    o = grid.oversample
    h = (o - 1) // 2
    return tuple(2 * ((n // 2 - 1 - h) // o) + 1 for n in grid.shape)


def bin_to_pixels(cells: np.ndarray, grid: ModeGrid, block: tuple[int, int]) -> np.ndarray:
    """Sum o x o cells into pixels; pixel 0 is centered on q = 0."""
    o = grid.oversample
    h = (o - 1) // 2
    out_shape = []
    slices = []
    for n, size in zip(grid.shape, block):
        p = (size - 1) // 2
        lo = n // 2 - o * p - h
        hi = n // 2 + o * p + h + 1
        if size % 2 == 0 or lo < 0 or hi > n:
            raise GeometryError(f"grid of {n} cells cannot cover {size} pixels")
        slices.append(slice(lo, hi))
        out_shape.append(size)
    sub = cells[..., slices[0], slices[1]]
    lead = sub.shape[:-2]
    sub = sub.reshape(lead + (out_shape[0], o, out_shape[1], o))
    return sub.sum(axis=(-3, -1))


def detect(intensity_s, intensity_i, grid: ModeGrid, detector: DetectorParams, seed,
           block_px: tuple[int, int] | None = None, clamp: bool = True,
           metadata: dict | None = None) -> Frame:
    """CCD model: mode sum, pixel binning, integerization, loss, read noise.

    ``intensity_*`` are (M, ny, nx) stacks or already-summed (ny, nx) arrays.
    """
    i_s = np.asarray(intensity_s, dtype=float)
    i_i = np.asarray(intensity_i, dtype=float)
    if i_s.ndim == 3:
        i_s, i_i = i_s.sum(axis=0), i_i.sum(axis=0)
    if i_s.shape != grid.shape or i_i.shape != grid.shape:
        raise GeometryError("intensity arrays do not match the grid")
    if abs(detector.pixel_pitch - grid.pixel_pitch) > 1e-12:
        raise GeometryError("detector pitch differs from the grid's pixel pitch")
    if block_px is None:
        block_px = pixel_block(grid)
    block_px = tuple(int(b) for b in block_px)
    if 2 * block_px[0] > detector.ccd_shape[0] or block_px[1] > detector.ccd_shape[1]:
        raise GeometryError(
            f"frame {2 * block_px[0]}x{block_px[1]} exceeds CCD {detector.ccd_shape}")
    photons = np.concatenate([bin_to_pixels(i_s, grid, block_px),
                              bin_to_pixels(i_i, grid, block_px)])

    rng = _rng(seed)
    h, w = block_px
    center = (h - 0.5, (w - 1) / 2)
    if detector.integerize == "none":
        x = photons * detector.quantum_efficiency
        if detector.read_noise > 0:
            x = x + rng.normal(0.0, detector.read_noise, x.shape)
        if clamp:
            x = np.clip(x, 0, None)
        return Frame(x, grid, center, (h, w), dict(metadata or {}))
    if detector.integerize == "poisson":
        n = rng.poisson(np.clip(photons, 0, None))
    else:
        n = np.clip(np.rint(photons), 0, None).astype(np.int64)
    eta = detector.quantum_efficiency
    if eta < 1:
        n = rng.binomial(n, eta)
    n = n.astype(np.int64)
    if detector.read_noise > 0:
        n = n + np.rint(rng.normal(0.0, detector.read_noise, n.shape)).astype(np.int64)
    if clamp:
        n = np.clip(n, 0, None)
    return Frame(n, grid, center, (h, w), dict(metadata or {}))


def frame_gain(config, frame_index: int, seed) -> float:
    """Per-shot gain, with pulse-to-pulse power jitter if enabled."""
    g = config.crystal.gain
    j = config.fidelity.power_jitter
    if j == 0:
        return g
    z = np.random.default_rng(_seed_seq(seed, frame_index, _JITTER)).standard_normal()
    return g * np.sqrt(max(1.0 + j * z, 0.0))


def simulate_frame(config, frame_index: int = 0, seed: int | None = None,
                   block_px=None) -> Frame:
    """Full shot: M temporal modes, then detection. Deterministic in (config, seed, index)."""
    fid = config.fidelity
    seed = fid.rng_seed if seed is None else seed
    g = frame_gain(config, frame_index, seed)
    mode_seed = _seed_seq(seed, frame_index)
    i_s, i_i = temporal_mode_stack(config, fid, mode_seed, g=g)
    meta = {
        "gain": float(g),
        "gain_nominal": float(config.crystal.gain),
        "waist_m": float(config.pump.waist),
        "power_w": float(config.pump.peak_power),
        "seed": int(seed),
        "frame_index": int(frame_index),
        "model": fid.model,
        "ordering": fid.ordering,
        "temporal_modes": int(fid.temporal_modes),
    }
    det_rng = np.random.default_rng(_seed_seq(seed, frame_index, _DETECT))
    return detect(i_s, i_i, config.grid, config.detector, det_rng,
                  block_px=block_px, metadata=meta)


def simulate_frames(config, n_frames: int, seed: int | None = None,
                    workers: int = 1, block_px=None) -> list[Frame]:
    """Frames 0..n-1; output order and content independent of ``workers``."""
    def one(k):
        return simulate_frame(config, k, seed, block_px)

    if workers <= 1:
        return [one(k) for k in range(n_frames)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_frames)))


def photon_number_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Correlation coefficient of photon numbers from symmetric-ordered samples.

    Wigner samples of distinct modes give exact covariances, but each
    variance carries an extra 1/4 from symmetrization; it is removed here.
    """
    x = np.asarray(x, float).ravel()
    y = np.asarray(y, float).ravel()
    cov = np.mean((x - x.mean()) * (y - y.mean()))
    vx = x.var() - 0.25
    vy = y.var() - 0.25
    return float(cov / np.sqrt(vx * vy))
