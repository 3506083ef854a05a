"""Difference-frequency conversion model, background noise and pump optimization.

A strong pump of power P couples the signal and converted modes with strength
sqrt(eta P); after the crystal transit time tau the converted-mode operator is

    a_c,out = exp(-i phi) sin(sqrt(eta P) tau) a_s + cos(sqrt(eta P) tau) a_c

Only the product ``eta * tau**2`` enters, so it is carried as a single
parameter (units 1/W). Noise singles at the telecom detector grow as b P + d
(Raman scattering plus dark counts).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DegenerateInputError, DomainError, ValidationError


@dataclass(frozen=True)
class ConversionParams:
    """Conversion and noise constants; SI units (W, Hz, Hz/W)."""

    eta_tau_sq: float
    pump_power: float
    pump_phase: float = 0.0
    raman_coeff: float = 0.0
    dark_rate: float = 0.0
    signal_scale: float = 1.0

    def __post_init__(self):
        if not self.eta_tau_sq > 0:
            raise ValidationError(f"eta_tau_sq must be > 0, got {self.eta_tau_sq!r}")
        if not self.pump_power >= 0:
            raise ValidationError(f"pump_power must be >= 0, got {self.pump_power!r}")
        if not self.raman_coeff >= 0:
            raise ValidationError(f"raman_coeff must be >= 0, got {self.raman_coeff!r}")
        if not self.dark_rate >= 0:
            raise ValidationError(f"dark_rate must be >= 0, got {self.dark_rate!r}")
        if not self.signal_scale > 0:
            raise ValidationError(f"signal_scale must be > 0, got {self.signal_scale!r}")

    def with_power(self, pump_power):
        return replace(self, pump_power=pump_power)

    @property
    def full_conversion_power(self):
        """Smallest pump power giving unit conversion probability."""
        return (math.pi / 2) ** 2 / self.eta_tau_sq


@dataclass(frozen=True)
class ConversionAmplitudes:
    convert_amp: complex
    retain_amp: float

    @property
    def conversion_prob(self):
        return abs(self.convert_amp) ** 2


def coupling_phase(params):
    """Accumulated coupling angle sqrt(eta P) tau."""
    return math.sqrt(params.eta_tau_sq * params.pump_power)


def amplitudes(params):
    theta = coupling_phase(params)
    return ConversionAmplitudes(
        convert_amp=complex(np.exp(-1j * params.pump_phase) * math.sin(theta)),
        retain_amp=math.cos(theta),
    )


def efficiency(params):
    return math.sin(coupling_phase(params)) ** 2


def noise_singles_rate(params):
    return params.raman_coeff * params.pump_power + params.dark_rate


def snr(params):
    noise = noise_singles_rate(params)
    if noise <= 0:
        raise DegenerateInputError("noise rate b*P + d is zero; SNR undefined")
    return params.signal_scale * efficiency(params) / noise


def _snr_vec(params, powers):
    powers = np.asarray(powers, dtype=float)
    num = params.signal_scale * np.sin(np.sqrt(params.eta_tau_sq * powers)) ** 2
    return num / (params.raman_coeff * powers + params.dark_rate)


def sweep(params, powers):
    """Efficiency, noise rate and SNR on a grid of pump powers (W).

    Returns a dict of equal-length arrays keyed by ``P_W``, ``efficiency``,
    ``noise_Hz`` and ``snr``.
    """
    powers = np.asarray(powers, dtype=float)
    eff = np.sin(np.sqrt(params.eta_tau_sq * powers)) ** 2
    noise = params.raman_coeff * powers + params.dark_rate
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(noise > 0, params.signal_scale * eff / np.where(noise > 0, noise, 1.0), np.nan)
    return {"P_W": powers, "efficiency": eff, "noise_Hz": noise, "snr": s}


def golden_section_max(f, lo, hi, tol=1e-7, max_iter=200):
    """Maximize a unimodal ``f`` on [lo, hi]; returns the abscissa."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2


def optimize_pump(params, p_min, p_max, coarse_step=1e-3, tol=1e-7):
    """Pump power in [p_min, p_max] maximizing the SNR.

    A 1 mW grid brackets the maximum, golden-section search refines it
    inside the neighbouring grid cells. Returns ``(P_opt, snr_opt)``.
    """
    if not (0 <= p_min < p_max) or not math.isfinite(p_max):
        raise DomainError(f"need 0 <= p_min < p_max, got [{p_min!r}, {p_max!r}]")
    if params.raman_coeff == 0 and params.dark_rate == 0:
        raise DegenerateInputError("noise rate b*P + d is zero; SNR undefined")
    n = max(2, int(math.ceil((p_max - p_min) / coarse_step)) + 1)
    grid = np.linspace(p_min, p_max, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = _snr_vec(params, grid)
    vals = np.nan_to_num(vals, nan=-np.inf)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]

    def f(p):
        return float(_snr_vec(params, p)) if params.raman_coeff * p + params.dark_rate > 0 else -np.inf

    p_opt = golden_section_max(f, lo, hi, tol=tol)
    candidates = [(f(p_opt), p_opt), (vals[i], grid[i])]
    best_val, best_p = max(candidates)
    return float(best_p), float(best_val)


def dense_grid_optimum(params, p_min, p_max, step=1e-5):
    """Brute-force SNR maximum on a fine grid (0.01 mW by default)."""
    n = int(round((p_max - p_min) / step)) + 1
    grid = np.linspace(p_min, p_max, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.nan_to_num(_snr_vec(params, grid), nan=-np.inf)
    i = int(np.argmax(vals))
    return float(grid[i]), float(vals[i])


def signal_scale_from_rates(params, signal_rate, noise_rate):
    """Constant ``a`` for which the SNR at ``params.pump_power`` equals signal/noise."""
    eff = efficiency(params)
    if eff <= 0 or noise_rate <= 0:
        raise DegenerateInputError("calibration needs nonzero efficiency and noise rate")
    return signal_rate / noise_rate * noise_singles_rate(params) / eff
