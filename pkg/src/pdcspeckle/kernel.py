"""Closed-form physics of the two-photon amplitude.

Phase-matching detuning, the pump-Gaussian / sinc envelope of the
two-photon amplitude, mean photon number per mode, and the analytic
coherence-area predictors. Everything here is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import ConfigError, EvanescentModeError, GeometryError

SQRT_2LN2 = np.sqrt(2.0 * np.log(2.0))
SINC_HWHM_CONSTANT = 2.78


@dataclass(frozen=True)
class CrystalParams:
    length: float = 1e-2
    refractive_index: float = 1.66
    gain: float = 1.5

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError("crystal length must be > 0", key="crystal_length")
        if not self.refractive_index >= 1:
            raise ConfigError("refractive index must be >= 1", key="refractive_index")
        if not self.gain >= 0:
            raise ConfigError("parametric gain must be >= 0", key="gain")


@dataclass(frozen=True)
class PumpParams:
    waist: float = 0.65e-3
    wavelength: float = 355e-9
    peak_power: float = 0.78e6

    def __post_init__(self):
        for name, key in (("waist", "wp"), ("wavelength", "pump_wavelength"),
                          ("peak_power", "pump_power")):
            if not getattr(self, name) > 0:
                raise ConfigError(f"pump {name} must be > 0", key=key)

    @property
    def omega(self) -> float:
        return 2 * np.pi * SPEED_OF_LIGHT / self.wavelength

    @property
    def degenerate_wavelength(self) -> float:
        return 2 * self.wavelength


@dataclass(frozen=True)
class DetuningModel:
    """Longitudinal detuning model.

    ``ideal`` sets the detuning to zero everywhere. ``paraxial`` uses the
    degenerate paraxial expansion ``(|q1|^2 + |q2|^2) / (2 k_deg) - dk0``.
    ``theta`` is the emission angle fed to the sinc HWHM predictor.
    """

    variant: Literal["ideal", "paraxial"] = "ideal"
    theta: float = 0.05
    delta_k0: float = 0.0

    def __post_init__(self):
        if self.variant not in ("ideal", "paraxial"):
            raise ConfigError(f"unknown detuning variant {self.variant!r}", key="detuning")
        if not 0 < self.theta < np.pi / 2:
            raise ConfigError("emission angle must lie in (0, pi/2)", key="theta")


def degenerate_wavenumber(crystal: CrystalParams, pump: PumpParams) -> float:
    """Wave number of the degenerate signal/idler inside the crystal."""
    return 2 * np.pi * crystal.refractive_index / pump.degenerate_wavelength


@dataclass(frozen=True)
class ModeGrid:
    """Transverse-momentum grid tied to the far-field detector.

    Cell ``(iy, ix)`` holds ``q = ((ix - n_x/2) dq, (iy - n_y/2) dq)`` so q = 0
    is a node. A detector pixel spans ``oversample`` cells per axis, where
    ``oversample = pixel_dq / dq`` must be an odd integer so that pixel
    boundaries are symmetric about q = 0.
    """

    n_x: int
    n_y: int
    dq: float
    focal_f: float = 0.1
    pixel_pitch: float = 20e-6
    wavelength: float = 710e-9

    def __post_init__(self):
        for n in (self.n_x, self.n_y):
            if n < 2 or n % 2:
                raise GeometryError(f"grid sizes must be even and >= 2, got {n}")
        if not self.dq > 0:
            raise GeometryError("dq must be > 0")
        ratio = self.pixel_dq / self.dq
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) % 2 == 0:
            raise GeometryError(
                f"pixel q-step / dq = {ratio:.6g} is not an odd integer")

    @classmethod
    def from_detector(cls, n_x, n_y, *, focal_f=0.1, pixel_pitch=20e-6,
                      wavelength=710e-9, oversample=1) -> "ModeGrid":
        pixel_dq = 2 * np.pi * pixel_pitch / (wavelength * focal_f)
        return cls(n_x, n_y, pixel_dq / oversample, focal_f, pixel_pitch, wavelength)

    @property
    def pixel_dq(self) -> float:
        """q increment across one detector pixel, 2 pi pitch / (lambda f)."""
        return 2 * np.pi * self.pixel_pitch / (self.wavelength * self.focal_f)

    @property
    def oversample(self) -> int:
        return int(round(self.pixel_dq / self.dq))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def window(self) -> tuple[float, float]:
        """Periodic transverse window (y, x) in the crystal plane, meters."""
        return (2 * np.pi / self.dq, 2 * np.pi / self.dq)

    def q_axes(self) -> tuple[np.ndarray, np.ndarray]:
        qy = (np.arange(self.n_y) - self.n_y // 2) * self.dq
        qx = (np.arange(self.n_x) - self.n_x // 2) * self.dq
        return qy, qx

    def q_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        qy, qx = self.q_axes()
        return np.meshgrid(qy, qx, indexing="ij")

    def rho_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Crystal-plane coordinates conjugate to the q grid."""
        dy = 2 * np.pi / (self.n_y * self.dq)
        dx = 2 * np.pi / (self.n_x * self.dq)
        y = (np.arange(self.n_y) - self.n_y // 2) * dy
        x = (np.arange(self.n_x) - self.n_x // 2) * dx
        return np.meshgrid(y, x, indexing="ij")

    def x_of_q(self, q):
        return self.wavelength * self.focal_f / (2 * np.pi) * np.asarray(q)

    def q_of_x(self, x):
        return 2 * np.pi / (self.wavelength * self.focal_f) * np.asarray(x)

    def mirror_index(self, axis_len: int) -> np.ndarray:
        """Index map i -> index of -q on a centered axis (Nyquist maps to itself)."""
        return (axis_len - np.arange(axis_len)) % axis_len

    def check_light_cone(self, k: float) -> None:
        qy, qx = self.q_axes()
        qmax = np.hypot(np.abs(qy).max(), np.abs(qx).max())
        if qmax > k:
            raise EvanescentModeError(
                f"grid reaches |q| = {qmax:.4g} beyond the light cone k = {k:.4g}")


def k_longitudinal(q, omega, n):
    """Longitudinal wave number sqrt(k^2 - q^2) with k = omega n / c."""
    k = omega * n / SPEED_OF_LIGHT
    q = np.abs(np.asarray(q, dtype=float))
    if np.any(q > k):
        raise EvanescentModeError(f"|q| = {q.max():.6g} exceeds k = {k:.6g}")
    return np.sqrt(k * k - q * q)


def _sq_norm(q):
    q = np.asarray(q, dtype=float)
    if q.ndim and q.shape[-1] == 2:
        return np.sum(q * q, axis=-1)
    return q * q


def delta_k(q1, q2, model: DetuningModel, crystal: CrystalParams, pump: PumpParams):
    """Longitudinal detuning for a pair of transverse momenta.

    ``q1``, ``q2`` are vectors with a trailing axis of length 2 (or scalars
    interpreted as magnitudes).
    """
    k_deg = degenerate_wavenumber(crystal, pump)
    s1, s2 = _sq_norm(q1), _sq_norm(q2)
    if np.any(s1 > k_deg**2) or np.any(s2 > k_deg**2):
        raise EvanescentModeError("transverse momentum outside the light cone")
    if model.variant == "ideal":
        return np.zeros(np.broadcast(s1, s2).shape)
    return (s1 + s2) / (2 * k_deg) - model.delta_k0


def sinc(u):
    """Unnormalized sinc, sin(u)/u with sinc(0) = 1."""
    return np.sinc(np.asarray(u) / np.pi)


def two_photon_amplitude(q1, q2, crystal: CrystalParams, pump: PumpParams,
                         model: DetuningModel = DetuningModel()):
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    dk = delta_k(q1, q2, model, crystal, pump)
    u2 = _sq_norm(q1 + q2)
    amp = crystal.gain * sinc(dk * crystal.length / 2) * np.exp(-u2 * pump.waist**2 / 4)
    return amp.astype(complex)


def predicted_hwhm_sinc(crystal: CrystalParams, theta: float) -> float:
    if not 0 < theta < np.pi / 2:
        raise ValueError("theta must lie in (0, pi/2)")
    return SINC_HWHM_CONSTANT / (crystal.length * np.tan(theta))


def predicted_hwhm_pump(pump: PumpParams) -> float:
    return SQRT_2LN2 / pump.waist


def regime_ratio(crystal: CrystalParams, pump: PumpParams, theta: float) -> float:
    """delta_q / Delta_q; below 1 the pump waist sets the coherence area."""
    return predicted_hwhm_pump(pump) / predicted_hwhm_sinc(crystal, theta)


def predicted_hwhm(crystal: CrystalParams, pump: PumpParams, theta: float) -> float:
    """Narrower of the two envelopes dominates the product."""
    return min(predicted_hwhm_pump(pump), predicted_hwhm_sinc(crystal, theta))


def mean_photons_per_mode(g):
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("gain must be >= 0")
    return np.sinh(g) ** 2
