"""End-to-end model of the conversion experiment.

Photon B of a polarization-entangled pair is mapped to a time-bin qubit
(H -> S1 after a polarization flip, V -> L1), frequency-converted, then
decoded by an unbalanced interferometer whose central time slot
(S1-L2 or L1-S2) restores polarization entanglement between A and C'.
Rates are combined with detector models into signal and accidental
coincidence rates, and those into tomography count tables.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from . import conversion as cv
from . import detection as det
from . import quantum as qc
from .exceptions import ValidationError
from .tomography import CountTable

POLARIZATION_BASIS = ("HH", "HV", "VH", "VV")
TIMEBIN_BASIS = ("H,S1", "H,L1", "V,S1", "V,L1")


@dataclass(frozen=True)
class ModeState:
    """Two-photon density matrix together with the labels of its basis."""

    rho: np.ndarray
    basis: tuple = POLARIZATION_BASIS


@dataclass(frozen=True)
class SourceSpec:
    rep_rate: float
    pair_coincidence_rate: float
    initial_state: np.ndarray
    initial_detection_rate: float = 444.0
    visible_flux: float = 0.0

    def __post_init__(self):
        if not 0 < self.pair_coincidence_rate < self.rep_rate:
            raise ValidationError("need 0 < pair_coincidence_rate < rep_rate")
        if self.visible_flux < 0 or self.initial_detection_rate < 0:
            raise ValidationError("source rates must be >= 0")
        qc.check_density(self.initial_state)


@dataclass(frozen=True)
class InterferometerSpec:
    delay: float = 700.0
    postselect_success: float = 0.5

    def __post_init__(self):
        if not self.delay > 0:
            raise ValidationError(f"interferometer delay must be > 0, got {self.delay!r}")
        if not 0 < self.postselect_success <= 1:
            raise ValidationError("postselect_success must be in (0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """One detector scenario. ``conversion=None`` describes the unconverted
    reference measurement of the source state."""

    source: SourceSpec
    det_visible: det.DetectorSpec
    det_telecom: det.DetectorSpec
    conversion: cv.ConversionParams = None
    encoder: InterferometerSpec = InterferometerSpec()
    decoder: InterferometerSpec = InterferometerSpec()
    tdc: det.TdcConfig = det.TdcConfig()
    throughput_visible: float = 1.0
    throughput_telecom: float = 1.0
    name: str = ""

    def __post_init__(self):
        for label in ("throughput_visible", "throughput_telecom"):
            val = getattr(self, label)
            if not 0 < val <= 1:
                raise ValidationError(f"{label} must be in (0, 1], got {val!r}")

    @property
    def pair_fwhm(self):
        return det.pair_jitter_fwhm(self.det_visible, self.det_telecom)


@dataclass(frozen=True)
class RatePrediction:
    signal_coincidence_rate: float
    noise_coincidence_rate: float
    effective_state: np.ndarray
    signal_state: np.ndarray = None

    @property
    def total_rate(self):
        return self.signal_coincidence_rate + self.noise_coincidence_rate

    @property
    def noise_fraction(self):
        total = self.total_rate
        return self.noise_coincidence_rate / total if total > 0 else 0.0


def encode_timebin(state):
    """Relabel photon B's polarization as a time bin: H -> S1, V -> L1."""
    rho = qc.check_density(state.rho if isinstance(state, ModeState) else state)
    return ModeState(rho, TIMEBIN_BASIS)


def apply_conversion(state, amps):
    """Heralded-on-conversion state and its probability.

    Both time bins see the same coupling amplitude and pump phase, so the
    operator on the converted photon is ``convert_amp * I`` and the state is
    unchanged after renormalization.
    """
    rho = state.rho if isinstance(state, ModeState) else state
    basis = state.basis if isinstance(state, ModeState) else TIMEBIN_BASIS
    k = np.kron(np.eye(2), amps.convert_amp * np.eye(2))
    out = k @ rho @ k.conj().T
    prob = float(np.real(np.trace(out)))
    if prob <= 0:
        return ModeState(rho, basis), 0.0
    return ModeState(out / prob, basis), prob


def decoder_kraus(postselect_success=0.5):
    """Kraus operators of the S2/L2 decoder for the early, central and late slots.

    Acting on photon C's time bin (S1, L1) and returning its polarization
    (H, V): the long arm flips V to H, so the central slot maps S1 -> H
    (via L2) and L1 -> V (via S2).
    """
    a = np.sqrt(postselect_success)
    b = np.sqrt(1.0 - postselect_success)
    early = b * np.array([[0, 0], [1, 0]], dtype=complex)   # S1-S2, V polarized
    central = a * np.eye(2, dtype=complex)                  # S1-L2 -> H, L1-S2 -> V
    late = b * np.array([[0, 1], [0, 0]], dtype=complex)    # L1-L2, H polarized
    return {"early": early, "central": central, "late": late}


def decode_timebin(state, postselect_success=0.5):
    """Keep the central time slot; return (polarization state, its probability)."""
    rho = state.rho if isinstance(state, ModeState) else qc.check_density(state)
    k = np.kron(np.eye(2), decoder_kraus(postselect_success)["central"])
    out = k @ rho @ k.conj().T
    prob = float(np.real(np.trace(out)))
    return ModeState(out / prob, POLARIZATION_BASIS), prob


def visible_singles_rate(cfg):
    return (cfg.source.visible_flux * cfg.throughput_visible * cfg.det_visible.efficiency
            + cfg.det_visible.dark_rate)


def predict_rates(cfg):
    """Signal and accidental coincidence rates and the resulting detected state."""
    src = cfg.source
    if cfg.conversion is None:
        rho = qc.check_density(src.initial_state)
        return RatePrediction(src.initial_detection_rate, 0.0, rho, rho)
    encoded = encode_timebin(src.initial_state)
    converted, p_conv = apply_conversion(encoded, cv.amplitudes(cfg.conversion))
    decoded, p_post = decode_timebin(converted, cfg.decoder.postselect_success)
    acc = det.window_acceptance(cfg.pair_fwhm, cfg.tdc.window_width)
    signal = (src.pair_coincidence_rate
              * cfg.throughput_visible * cfg.det_visible.efficiency
              * p_conv * p_post
              * cfg.throughput_telecom * cfg.det_telecom.efficiency
              * acc)
    # b P + d is the noise rate as registered by the telecom detector
    noise = det.coincidence_noise_rate(visible_singles_rate(cfg),
                                       cv.noise_singles_rate(cfg.conversion), cfg.tdc)
    total = signal + noise
    lam = noise / total if total > 0 else 0.0
    return RatePrediction(signal, noise, qc.mix_with_white_noise(decoded.rho, lam), decoded.rho)


def signal_scale(cfg):
    """Constant ``a`` making ``a sin^2 / (bP + d)`` the coincidence SNR of ``cfg``."""
    if cfg.conversion is None:
        raise ValidationError("scenario has no conversion stage")
    pred = predict_rates(cfg)
    return cv.signal_scale_from_rates(cfg.conversion, pred.signal_coincidence_rate,
                                      pred.noise_coincidence_rate)


def _setting_counts(rates, seed_seq, duration):
    rng = np.random.default_rng(seed_seq)
    return rng.poisson(rates * duration)


def expected_setting_rates(pred, settings):
    """Per-setting outcome rates: signal Born-rule part plus uniform noise."""
    rows = []
    for sa, sc in settings:
        born = qc.born_probabilities(pred.signal_state, sa.projector(), sc.projector())
        rows.append(pred.signal_coincidence_rate * born + pred.noise_coincidence_rate / 4.0)
    return np.array(rows)


def run_tomography_counts(cfg, settings, duration_per_setting, seed=None, n_jobs=1):
    """Poisson-sampled coincidence counts for every setting pair.

    Setting ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``,
    so the table is identical for any ``n_jobs``.
    """
    settings = list(settings)
    if not settings:
        raise ValidationError("settings list is empty")
    if duration_per_setting < 0:
        raise ValidationError("duration must be >= 0")
    pred = predict_rates(cfg)
    rates = expected_setting_rates(pred, settings)
    children = np.random.SeedSequence(seed).spawn(len(settings))
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_setting_counts)(rates[i], children[i], duration_per_setting)
        for i in range(len(settings)))
    return CountTable(settings, np.array(rows, dtype=np.int64),
                      np.full(len(settings), float(duration_per_setting)))


# -- calibration -----------------------------------------------------------------

@dataclass(frozen=True)
class RateCalibration:
    """Source and visible-APD parameters reproducing two observed rate pairs."""

    pair_coincidence_rate: float
    visible_flux: float
    apd_efficiency: float
    apd_dark_rate: float


def calibrate_rates(conversion, tdc, sspd_visible, sspd_telecom, apd_jitter,
                    throughput_visible, throughput_telecom, postselect_success,
                    target_ss, target_as):
    """Solve for the unknown source and Si-APD parameters.

    ``target_ss`` and ``target_as`` are (signal, noise) coincidence rates for
    the SSPD+SSPD and Si-APD+SSPD scenarios. The signal of the SSPD scenario
    fixes the pair rate; the signal ratio fixes the APD efficiency; the
    SSPD accidentals fix the visible photon flux; the APD accidentals fix the
    APD dark rate.
    """
    p_conv = cv.efficiency(conversion)
    window = tdc.window_width
    acc_ss = det.window_acceptance(det.pair_jitter_fwhm(sspd_visible, sspd_telecom), window)
    acc_as = det.window_acceptance(det.pair_jitter_fwhm(apd_jitter, sspd_telecom), window)
    common = (throughput_visible * p_conv * postselect_success
              * throughput_telecom * sspd_telecom.efficiency)
    rate = target_ss[0] / (common * sspd_visible.efficiency * acc_ss)
    apd_eff = target_as[0] / (common * rate * acc_as)
    if not 0 < apd_eff <= 1:
        raise ValidationError(f"calibrated APD efficiency {apd_eff:.3g} is unphysical")
    stop = cv.noise_singles_rate(conversion) * window * det.PS
    singles_ss = target_ss[1] / stop
    flux = (singles_ss - sspd_visible.dark_rate) / (throughput_visible * sspd_visible.efficiency)
    apd_dark = target_as[1] / stop - flux * throughput_visible * apd_eff
    if flux <= 0 or apd_dark < 0:
        raise ValidationError("accidental-rate targets are inconsistent with the detector models")
    return RateCalibration(rate, flux, apd_eff, apd_dark)


def with_conversion_power(cfg, pump_power):
    return replace(cfg, conversion=cfg.conversion.with_power(pump_power))
