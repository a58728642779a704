"""Intensity-fluctuation estimators on detected frames.

Correlations use overlap-only averaging: at each discrete displacement the
numerator and both variances are summed over the pixels where the two
shifted regions overlap, so no wrap-around or zero padding enters.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import signal

from .errors import AnalysisError, GeometryError, NormalizationError, RegionTooSmallError
from .simulator import Frame


@dataclass(frozen=True)
class Region:
    """Rectangular pixel region; ``x0``/``y0`` are column/row of the origin."""

    x0: int
    y0: int
    width: int
    height: int
    role: Literal["signal", "idler"] = "signal"
    symmetry_center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise AnalysisError("empty region")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def extract(self, counts: np.ndarray) -> np.ndarray:
        h, w = counts.shape[-2:]
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.width > w or self.y0 + self.height > h:
            raise GeometryError(f"region {self} does not fit in a {h}x{w} frame")
        return counts[..., self.y0:self.y0 + self.height, self.x0:self.x0 + self.width]

    def mirror(self, center: tuple[float, float] | None = None) -> "Region":
        """Point reflection through ``center`` (row, col)."""
        cy, cx = center if center is not None else self.symmetry_center
        y0 = 2 * cy - self.y0 - (self.height - 1)
        x0 = 2 * cx - self.x0 - (self.width - 1)
        if abs(y0 - round(y0)) > 1e-9 or abs(x0 - round(x0)) > 1e-9:
            raise GeometryError("mirror of region does not fall on the pixel lattice")
        role = "idler" if self.role == "signal" else "signal"
        return Region(int(round(x0)), int(round(y0)), self.width, self.height, role, (cy, cx))

    def shifted(self, dy: int, dx: int) -> "Region":
        return Region(self.x0 + dx, self.y0 + dy, self.width, self.height, self.role,
                      self.symmetry_center)

    @classmethod
    def parse(cls, spec: str, role="signal") -> "Region":
        """``"x,y,w,h"`` in pixels."""
        try:
            x, y, w, h = (int(p) for p in spec.split(","))
        except ValueError:
            raise AnalysisError(f"region spec must be 'x,y,w,h', got {spec!r}") from None
        return cls(x, y, w, h, role)


@dataclass
class CorrelationMap:
    """Correlation over displacements; ``values[Ly + dy, Lx + dx]`` is C(dy, dx)."""

    values: np.ndarray
    kind: Literal["auto", "cross"]

    @property
    def max_lag(self) -> tuple[int, int]:
        h, w = self.values.shape
        return ((h - 1) // 2, (w - 1) // 2)

    @property
    def peak_index(self) -> tuple[int, int]:
        return np.unravel_index(np.nanargmax(self.values), self.values.shape)

    @property
    def peak_value(self) -> float:
        return float(self.values[self.peak_index])

    @property
    def peak_location(self) -> tuple[int, int]:
        iy, ix = self.peak_index
        ly, lx = self.max_lag
        return (int(iy - ly), int(ix - lx))

    def at(self, dy: int, dx: int) -> float:
        ly, lx = self.max_lag
        return float(self.values[ly + dy, lx + dx])


FrameLike = Frame | np.ndarray


def _stack(frames) -> np.ndarray:
    """One or many frames -> float array (F, H, W)."""
    if isinstance(frames, Frame):
        return frames.counts[None].astype(float)
    if isinstance(frames, np.ndarray):
        arr = frames.astype(float)
        return arr[None] if arr.ndim == 2 else arr
    return np.stack([_stack(f)[0] for f in frames])


def fluctuations(frame, region: Region, mean: Literal["spatial", "ensemble"] = "spatial"
                 ) -> np.ndarray:
    """N_R(x) minus its mean.

    ``spatial`` subtracts the single-region pixel average of each frame;
    ``ensemble`` subtracts the per-pixel average over a stack of frames.
    Returns (H, W) for a single frame, (F, H, W) for a stack.
    """
    data = region.extract(_stack(frame))
    if data.size == 0:
        raise AnalysisError("empty region")
    if mean == "spatial":
        out = data - data.mean(axis=(-2, -1), keepdims=True)
    elif mean == "ensemble":
        out = data - data.mean(axis=0, keepdims=True)
    else:
        raise ValueError(f"unknown mean mode {mean!r}")
    if isinstance(frame, (Frame, np.ndarray)) and _stack(frame).shape[0] == 1:
        return out[0]
    return out


def _window_sums(sq: np.ndarray, ly: int, lx: int, shifted: bool) -> np.ndarray:
    """Sums of ``sq`` over the overlap rectangle for every lag (dy, dx).

    For ``shifted=False`` the rectangle holds x with x + lag inside the
    region; for ``shifted=True`` it holds x + lag itself.
    """
    h, w = sq.shape
    table = np.zeros((h + 1, w + 1))
    table[1:, 1:] = sq.cumsum(0).cumsum(1)
    dy = np.arange(-ly, ly + 1)[:, None]
    dx = np.arange(-lx, lx + 1)[None, :]
    if shifted:
        y0, y1 = np.maximum(0, dy), np.minimum(h, h + dy)
        x0, x1 = np.maximum(0, dx), np.minimum(w, w + dx)
    else:
        y0, y1 = np.maximum(0, -dy), np.minimum(h, h - dy)
        x0, x1 = np.maximum(0, -dx), np.minimum(w, w - dx)
    return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]


def _normalized_correlation(a: np.ndarray, b: np.ndarray, max_lag) -> np.ndarray:
    """sum a(x) b(x+xi) / sqrt(sum a(x)^2 sum b(x+xi)^2) over overlaps, pooled over frames.

    ``a``, ``b`` are (F, H, W) fluctuation stacks.
    """
    _, h, w = a.shape
    ly, lx = max_lag
    if not (0 <= ly < h and 0 <= lx < w):
        raise AnalysisError(f"max lag {max_lag} does not fit a {h}x{w} region")
    num = np.zeros((2 * ly + 1, 2 * lx + 1))
    saa = np.zeros_like(num)
    sbb = np.zeros_like(num)
    num0 = saa0 = sbb0 = 0.0
    for af, bf in zip(a, b):
        full = signal.correlate(bf, af, mode="full", method="fft")
        num += full[h - 1 - ly:h + ly, w - 1 - lx:w + lx]
        saa += _window_sums(af * af, ly, lx, shifted=False)
        sbb += _window_sums(bf * bf, ly, lx, shifted=True)
        num0 += np.sum(af * bf)
        saa0 += np.sum(af * af)
        sbb0 += np.sum(bf * bf)
    if saa0 == 0 or sbb0 == 0:
        raise NormalizationError("zero-variance region")
    # zero lag summed directly so an exact copy gives exactly 1
    num[ly, lx], saa[ly, lx], sbb[ly, lx] = num0, saa0, sbb0
    den = np.sqrt(saa * sbb)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(den > 0, num / den, 0.0)
    # FFT roundoff can push |C| past 1 by ~1e-15 for perfectly correlated data
    return np.clip(c, -1.0, 1.0)


def _default_lag(shape, max_lag):
    h, w = shape[-2:]
    if max_lag is None:
        return (h // 2, w // 2)
    if np.isscalar(max_lag):
        return (min(int(max_lag), h - 1), min(int(max_lag), w - 1))
    return tuple(int(m) for m in max_lag)


def auto_correlation(frame, region: Region, max_lag=None,
                     mean: Literal["spatial", "ensemble"] = "spatial") -> CorrelationMap:
    d = fluctuations(frame, region, mean)
    d = d[None] if d.ndim == 2 else d
    values = _normalized_correlation(d, d, _default_lag(d.shape, max_lag))
    return CorrelationMap(values, "auto")


def cross_correlation(frame, r1: Region, r2: Region, max_lag=None,
                      mean: Literal["spatial", "ensemble"] = "spatial") -> CorrelationMap:
    """C12(xi): delta N_R1(x) against delta N_R2(-x + xi) about the pair's mirror point.

    ``r2`` is read back-to-front so that pixel x of ``r1`` lines up with its
    point reflection; xi = 0 is the reflection implied by the two regions.
    """
    if r1.shape != r2.shape:
        raise AnalysisError("regions must be congruent")
    d1 = fluctuations(frame, r1, mean)
    d2 = fluctuations(frame, r2, mean)
    d1 = d1[None] if d1.ndim == 2 else d1
    d2 = d2[None] if d2.ndim == 2 else d2
    mirrored = d2[:, ::-1, ::-1]
    values = _normalized_correlation(d1, mirrored, _default_lag(d1.shape, max_lag))
    # correlating against the reversed region measures -xi
    return CorrelationMap(values[::-1, ::-1].copy(), "cross")


def radial_profile(cmap: CorrelationMap, bin_width: float = 0.5,
                   center: tuple[int, int] | None = None):
    """Mean correlation in annuli of ``bin_width`` px about ``center`` (default: peak).

    Returns (mean radius of members, mean value) per non-empty bin.
    """
    ly, lx = cmap.max_lag
    cy, cx = cmap.peak_location if center is None else center
    dy = np.arange(-ly, ly + 1)[:, None] - cy
    dx = np.arange(-lx, lx + 1)[None, :] - cx
    r = np.hypot(dy, dx).ravel()
    v = cmap.values.ravel()
    bins = np.floor(r / bin_width + 0.5).astype(int)
    # only annuli fully inside the map
    rmax = min(ly - abs(cy), lx - abs(cx))
    keep = r <= rmax
    bins, r, v = bins[keep], r[keep], v[keep]
    count = np.bincount(bins)
    ok = count > 0
    rs = np.bincount(bins, weights=r)[ok] / count[ok]
    vs = np.bincount(bins, weights=v)[ok] / count[ok]
    return rs, vs


def speckle_radius(cmap: CorrelationMap, bin_width: float = 0.5) -> float:
    """Radius (px) where the radial profile first falls to half the peak value."""
    peak = cmap.peak_value
    if not peak > 0.2:
        raise AnalysisError(f"correlation peak {peak:.3f} too weak for a radius")
    rs, vs = radial_profile(cmap, bin_width)
    half = 0.5 * peak
    below = np.nonzero(vs < half)[0]
    if below.size == 0:
        raise RegionTooSmallError("profile never reaches half maximum inside the map")
    k = below[0]
    r0, r1, v0, v1 = rs[k - 1], rs[k], vs[k - 1], vs[k]
    return float(r0 + (v0 - half) * (r1 - r0) / (v0 - v1))


def ssn_sigma(frame, r1: Region, r2: Region) -> tuple[float, float]:
    """Difference variance over mirrored pixel pairs, raw and over <N1 + N2>."""
    if r1.shape != r2.shape:
        raise AnalysisError("regions must be congruent")
    stack = _stack(frame)
    n1 = r1.extract(stack)
    n2 = r2.extract(stack)[:, ::-1, ::-1]
    if n1.size == 0:
        raise AnalysisError("empty regions")
    diff = (n1 - n2).ravel()
    sigma2 = float(np.mean(diff**2) - np.mean(diff) ** 2)
    total = float(np.mean(n1 + n2))
    normalized = sigma2 / total if total > 0 else float("inf")
    return sigma2, normalized


def default_regions(frame: Frame) -> tuple[Region, Region]:
    """Whole signal block and its point reflection (the idler block)."""
    h, w = frame.block_shape
    r1 = Region(0, 0, w, h, "signal", tuple(frame.symmetry_center))
    return r1, r1.mirror()


def find_symmetry_center(frame, r1: Region, center: tuple[float, float], search: int = 10
                         ) -> tuple[tuple[float, float], float]:
    """Refine the mirror point by the C12 peak over shifts within +-``search`` px.

    Returns the corrected center (row, col) and the C12 peak value there.
    """
    r2 = r1.mirror(center)
    cmap = cross_correlation(frame, r1, r2, max_lag=search)
    dy, dx = cmap.peak_location
    # twin of x sits at m(x) + xi, so the true center moves by xi / 2
    return (center[0] + dy / 2, center[1] + dx / 2), cmap.peak_value


def analyze_frame(frame: Frame, r1: Region | None = None, r2: Region | None = None,
                  max_lag=None) -> dict:
    """Per-frame summary: mean counts, speckle radius, C12 peak, sigma^2."""
    if r1 is None:
        r1, r2 = default_regions(frame)
    elif r2 is None:
        r2 = r1.mirror(frame.symmetry_center)
    out = {"mean_counts": float(r1.extract(frame.counts).mean()), "diagnostic": ""}
    try:
        out["radius_px"] = speckle_radius(auto_correlation(frame, r1, max_lag))
    except AnalysisError as exc:
        out["radius_px"] = float("nan")
        out["diagnostic"] = f"{exc.category}: {exc}"
    try:
        c12 = cross_correlation(frame, r1, r2, max_lag=max_lag or 5)
        out["c12_peak"] = c12.peak_value
        out["c12_peak_dy"], out["c12_peak_dx"] = c12.peak_location
    except AnalysisError as exc:
        out["c12_peak"] = float("nan")
        out["c12_peak_dy"] = out["c12_peak_dx"] = 0
        out["diagnostic"] = f"{exc.category}: {exc}"
    out["sigma2"], out["sigma2_norm"] = ssn_sigma(frame, r1, r2)
    return out
