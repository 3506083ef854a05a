"""Detector timing jitter, TDC histograms, Gaussian peak fitting and
coincidence-window arithmetic. Times are in picoseconds, rates in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import erf
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateInputError, DomainError, FitError, ValidationError

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
PS = 1e-12


@dataclass(frozen=True)
class DetectorSpec:
    label: str
    efficiency: float
    dark_rate: float
    jitter_fwhm: float

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValidationError(f"{self.label}: efficiency must be in [0, 1], got {self.efficiency!r}")
        if not self.dark_rate >= 0:
            raise ValidationError(f"{self.label}: dark_rate must be >= 0, got {self.dark_rate!r}")
        if not self.jitter_fwhm > 0:
            raise ValidationError(f"{self.label}: jitter_fwhm must be > 0, got {self.jitter_fwhm!r}")


@dataclass(frozen=True)
class TdcConfig:
    bin_width: float = 100.0
    window_width: float = 200.0
    window_center: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValidationError(f"bin_width must be > 0, got {self.bin_width!r}")
        if not self.window_width >= 0:
            raise ValidationError(f"window_width must be >= 0, got {self.window_width!r}")


@dataclass(frozen=True)
class TdcHistogram:
    edges: np.ndarray
    counts: np.ndarray
    acquisition_time: float

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or counts.shape != (edges.size - 1,):
            raise ValidationError("counts length must equal the number of bins")
        if np.any(counts < 0):
            raise ValidationError("histogram counts must be nonnegative")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)


@dataclass(frozen=True)
class GaussianFit:
    """Background plus Gaussian peak. ``amplitude`` is the peak area in counts."""

    amplitude: float
    center: float
    fwhm: float
    background: float
    residual: float
    converged: bool = True
    amplitude_err: float = float("nan")

    def as_record(self):
        return {"amplitude": self.amplitude, "center_ps": self.center,
                "fwhm_ps": self.fwhm, "background_per_bin": self.background,
                "residual": self.residual, "converged": self.converged}


def pair_jitter_fwhm(d1, d2):
    """FWHM of the start-stop delay for two independent Gaussian jitters."""
    return math.hypot(_fwhm(d1), _fwhm(d2))


def _fwhm(d):
    return d.jitter_fwhm if isinstance(d, DetectorSpec) else float(d)


def calibrate_jitters(fwhm_apd_apd, fwhm_apd_sspd, fwhm_sspd_sspd):
    """Per-detector jitters from three measured pair FWHMs.

    The pairings are (Si-APD, InGaAs-APD), (Si-APD, SSPD) and (SSPD, SSPD).
    With four detectors and three equations the two SSPDs are taken to be
    identical. Returns a dict with keys ``sspd``, ``si_apd``, ``ingaas_apd``.
    """
    sspd = fwhm_sspd_sspd / math.sqrt(2.0)
    si_sq = fwhm_apd_sspd ** 2 - sspd ** 2
    if si_sq <= 0:
        raise DomainError("APD+SSPD pair FWHM must exceed a single SSPD jitter")
    si = math.sqrt(si_sq)
    ingaas_sq = fwhm_apd_apd ** 2 - si_sq
    if ingaas_sq <= 0:
        raise DomainError("APD+APD pair FWHM must exceed the Si-APD jitter")
    return {"sspd": sspd, "si_apd": si, "ingaas_apd": math.sqrt(ingaas_sq)}


def window_acceptance(pair_fwhm, window):
    """Fraction of a centered Gaussian delay distribution inside ``window``."""
    if not pair_fwhm > 0:
        raise DomainError(f"pair_fwhm must be > 0, got {pair_fwhm!r}")
    if window < 0:
        raise DomainError(f"window must be >= 0, got {window!r}")
    if math.isinf(window):
        return 1.0
    sigma = pair_fwhm / FWHM_PER_SIGMA
    return float(erf(window / (2.0 * sigma * math.sqrt(2.0))))


def coincidence_noise_rate(start_rate, stop_noise_rate, cfg):
    """Accidental coincidences between a start train and uniform stop noise."""
    if start_rate < 0 or stop_noise_rate < 0:
        raise DomainError("rates must be >= 0")
    return start_rate * stop_noise_rate * cfg.window_width * PS


def histogram_edges(pair_fwhm, cfg, span_fwhms=6.0):
    """Bin edges covering +-``span_fwhms`` pair FWHMs, a bin centered on the window."""
    k = int(math.ceil(span_fwhms * pair_fwhm / cfg.bin_width))
    return cfg.window_center + (np.arange(-k, k + 2) - 0.5) * cfg.bin_width


def _gauss_bin_mass(edges, center, sigma):
    z = (np.asarray(edges) - center) / (sigma * math.sqrt(2.0))
    return 0.5 * np.diff(erf(z))


def expected_tdc_counts(signal_rate, noise_rate, pair_fwhm, edges, center, duration):
    sigma = pair_fwhm / FWHM_PER_SIGMA
    span = edges[-1] - edges[0]
    flat = noise_rate * duration * np.diff(edges) / span
    return signal_rate * duration * _gauss_bin_mass(edges, center, sigma) + flat


def simulate_tdc(signal_rate, noise_rate, d1, d2, cfg, duration, seed=None):
    """Poisson-sampled start-stop delay histogram.

    The signal peak has area ``signal_rate * duration`` and the combined jitter
    of ``d1`` and ``d2``; ``noise_rate * duration`` counts are spread evenly
    over the histogram span.
    """
    if signal_rate < 0 or noise_rate < 0:
        raise DomainError("rates must be >= 0")
    if not duration > 0:
        raise DomainError(f"duration must be > 0, got {duration!r}")
    fwhm = pair_jitter_fwhm(d1, d2)
    edges = histogram_edges(fwhm, cfg)
    mean = expected_tdc_counts(signal_rate, noise_rate, fwhm, edges, cfg.window_center, duration)
    rng = np.random.default_rng(seed)
    return TdcHistogram(edges, rng.poisson(mean), float(duration))


def _initial_guess(centers, counts, width):
    i = int(np.argmax(counts))
    floor = float(np.min(counts))
    half = floor + 0.5 * (counts[i] - floor)
    above = np.flatnonzero(counts >= half)
    fwhm0 = max(width, (above.max() - above.min() + 1) * width) if above.size else width
    return centers[i], fwhm0


def fit_gaussian(hist, max_iter=2000):
    """Fit a bin-integrated Gaussian after subtracting a flat background.

    The background level is the mean of bins more than three initial FWHM
    guesses from the peak. Raises DegenerateInputError on an all-zero histogram
    and FitError (with ``partial``) when least squares does not converge.
    """
    counts = np.asarray(hist.counts, dtype=float)
    if counts.size < 6:
        raise DomainError(f"need at least 6 bins, got {counts.size}")
    if not np.any(counts > 0):
        raise DegenerateInputError("histogram has no counts")
    edges, centers = hist.edges, hist.centers
    width = float(np.median(hist.widths))
    c0, fwhm0 = _initial_guess(centers, counts, width)
    far = np.abs(centers - c0) > 3.0 * fwhm0
    if far.sum() >= 2:
        bg = float(counts[far].mean())
    else:
        bg = float(np.mean(np.sort(counts)[: max(1, counts.size // 4)]))
    y = counts - bg
    sigma_y = np.sqrt(np.maximum(counts, 1.0))

    def model(_x, area, center, sigma):
        return area * _gauss_bin_mass(edges, center, sigma)

    area0 = max(float(y.sum()), 1.0)
    p0 = [area0, c0, fwhm0 / FWHM_PER_SIGMA]
    lower = [0.0, edges[0], width / 50.0]
    upper = [np.inf, edges[-1], edges[-1] - edges[0]]
    try:
        popt, pcov, info, msg, ier = curve_fit(
            model, centers, y, p0=p0, sigma=sigma_y, absolute_sigma=True,
            bounds=(lower, upper), max_nfev=max_iter, full_output=True)
    except (RuntimeError, ValueError) as exc:
        partial = GaussianFit(p0[0], p0[1], fwhm0, bg, float("nan"), converged=False)
        raise FitError(f"Gaussian fit did not converge: {exc}", partial) from exc
    resid = (y - model(centers, *popt)) / sigma_y
    dof = max(1, counts.size - 3)
    err = float(np.sqrt(pcov[0, 0])) if np.all(np.isfinite(pcov)) else float("nan")
    return GaussianFit(
        amplitude=float(popt[0]), center=float(popt[1]),
        fwhm=float(popt[2] * FWHM_PER_SIGMA), background=bg,
        residual=float(np.sum(resid ** 2) / dof), converged=ier in (1, 2, 3, 4),
        amplitude_err=err)


class GaussianPeakFitter(BaseEstimator):
    """Estimator wrapper around ``fit_gaussian``.

    ``fit`` takes a TdcHistogram; fitted attributes are ``amplitude_``,
    ``center_``, ``fwhm_``, ``background_`` and ``fit_`` (the full record).
    ``predict`` evaluates the fitted mean counts on arbitrary bin edges.
    """

    def __init__(self, max_iter=2000):
        self.max_iter = max_iter

    def fit(self, hist, y=None):
        self.fit_ = fit_gaussian(hist, max_iter=self.max_iter)
        self.amplitude_ = self.fit_.amplitude
        self.center_ = self.fit_.center
        self.fwhm_ = self.fit_.fwhm
        self.background_ = self.fit_.background
        return self

    def predict(self, edges):
        check_is_fitted(self, "fit_")
        edges = np.asarray(edges, dtype=float)
        peak = self.amplitude_ * _gauss_bin_mass(edges, self.center_, self.fwhm_ / FWHM_PER_SIGMA)
        return peak + self.background_
