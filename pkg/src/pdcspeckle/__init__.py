"""Speckle structure of high-gain parametric down-conversion: simulation and analysis."""

from .analysis import (CorrelationMap, Region, analyze_frame, auto_correlation,
                       cross_correlation, default_regions, find_symmetry_center,
                       fluctuations, speckle_radius, ssn_sigma)
from .config import ExperimentConfig, SweepSpec, read_config
from .fitting import (CurveData, FitResult, fit_linear_shifted, fit_power_law,
                      fit_sinh2)
from .frameio import read_frame, write_frame
from .kernel import (CrystalParams, DetuningModel, ModeGrid, PumpParams, delta_k,
                     k_longitudinal, mean_photons_per_mode, predicted_hwhm_pump,
                     predicted_hwhm_sinc, two_photon_amplitude)
from .simulator import (ComplexField, DetectorParams, Frame, SimFidelity,
                        bogoliubov_pair, detect, sample_vacuum, simulate_diagonal,
                        simulate_frame, simulate_frames, simulate_split_step)
from .sweep import run_sweep

__version__ = "0.1.0"

__all__ = [
    "CorrelationMap", "Region", "analyze_frame", "auto_correlation", "cross_correlation",
    "default_regions", "find_symmetry_center", "fluctuations", "speckle_radius",
    "ssn_sigma", "ExperimentConfig", "SweepSpec", "read_config", "CurveData", "FitResult",
    "fit_linear_shifted", "fit_power_law", "fit_sinh2", "read_frame", "write_frame",
    "CrystalParams", "DetuningModel", "ModeGrid", "PumpParams", "delta_k", "k_longitudinal",
    "mean_photons_per_mode", "predicted_hwhm_pump", "predicted_hwhm_sinc",
    "two_photon_amplitude", "ComplexField", "DetectorParams", "Frame", "SimFidelity",
    "bogoliubov_pair", "detect", "sample_vacuum", "simulate_diagonal", "simulate_frame",
    "simulate_frames", "simulate_split_step", "run_sweep",
]
