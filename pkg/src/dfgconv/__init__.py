"""Simulation of visible-to-telecom conversion of one photon of an entangled pair."""

__version__ = "0.1.0"

from .config import load_config
from .conversion import ConversionParams, amplitudes, efficiency, noise_singles_rate, optimize_pump, snr
from .detection import DetectorSpec, GaussianPeakFitter, TdcConfig, fit_gaussian, simulate_tdc
from .experiment import ExperimentConfig, predict_rates, run_tomography_counts
from .tomography import (CountTable, LinearInversionTomography, MaximumLikelihoodTomography,
                         bootstrap_metrics, linear_inversion, mle_reconstruct)

__all__ = [
    "load_config",
    "ConversionParams", "amplitudes", "efficiency", "noise_singles_rate", "optimize_pump", "snr",
    "DetectorSpec", "GaussianPeakFitter", "TdcConfig", "fit_gaussian", "simulate_tdc",
    "ExperimentConfig", "predict_rates", "run_tomography_counts",
    "CountTable", "LinearInversionTomography", "MaximumLikelihoodTomography",
    "bootstrap_metrics", "linear_inversion", "mle_reconstruct",
]
