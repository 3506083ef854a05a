import math
import time

import numpy as np
import pytest

from dfgconv import conversion as cv
from dfgconv.exceptions import DegenerateInputError, DomainError, ValidationError

ETA = 3.6
B = 80e3     # Hz/W (80 Hz/mW)
D = 266.0


def params(**kw):
    base = dict(eta_tau_sq=ETA, pump_power=0.16, pump_phase=0.0, raman_coeff=B, dark_rate=D,
                signal_scale=1.0)
    base.update(kw)
    return cv.ConversionParams(**base)


def grid_argmax(p, lo, hi, step):
    """Independent oracle: plain evaluation of a sin^2/(bP+d) on a fine grid."""
    grid = np.arange(lo, hi + step / 2, step)
    grid = grid[p.raman_coeff * grid + p.dark_rate > 0]
    vals = p.signal_scale * np.sin(np.sqrt(p.eta_tau_sq * grid)) ** 2 / (p.raman_coeff * grid + p.dark_rate)
    return grid[np.argmax(vals)]


class TestParams:
    @pytest.mark.parametrize("field,value", [("eta_tau_sq", 0.0), ("pump_power", -1e-3),
                                             ("raman_coeff", -1.0), ("dark_rate", -1.0),
                                             ("signal_scale", 0.0)])
    def test_invariants(self, field, value):
        with pytest.raises(ValidationError):
            params(**{field: value})


class TestAmplitudes:
    def test_no_pump(self):
        a = cv.amplitudes(params(pump_power=0.0))
        assert a.convert_amp == 0 and a.retain_amp == 1

    def test_full_conversion(self):
        phi = 0.7
        p = params(pump_phase=phi)
        a = cv.amplitudes(p.with_power(p.full_conversion_power))
        assert a.convert_amp == pytest.approx(np.exp(-1j * phi), abs=1e-12)
        assert a.retain_amp == pytest.approx(0.0, abs=1e-12)

    def test_operating_point(self):
        a = cv.amplitudes(params())
        theta = math.sqrt(0.576)
        assert a.convert_amp.real == pytest.approx(math.sin(theta), abs=1e-12)
        assert a.retain_amp == pytest.approx(math.cos(theta), abs=1e-12)
        # quoted 4-digit figures (0.6880, 0.7257) are loosely rounded
        assert a.convert_amp.real == pytest.approx(0.6880, abs=5e-4)
        assert a.retain_amp == pytest.approx(0.7257, abs=5e-4)

    def test_unitarity_random_draws(self):
        rng = np.random.default_rng(1)
        draws = rng.uniform([0.1, 0.0, -np.pi], [20.0, 5.0, np.pi], size=(1_000_000, 3))
        worst = 0.0
        for eta, p, phi in draws:
            a = cv.amplitudes(cv.ConversionParams(eta, p, phi))
            worst = max(worst, abs(abs(a.convert_amp) ** 2 + a.retain_amp ** 2 - 1))
        assert worst < 1e-12


class TestEfficiency:
    def test_near_full_at_700mw(self):
        assert cv.efficiency(params(pump_power=0.7)) == pytest.approx(math.sin(math.sqrt(2.52)) ** 2, abs=1e-12)
        assert cv.efficiency(params(pump_power=0.7)) == pytest.approx(0.9997, abs=1e-4)

    def test_operating_point_half(self):
        assert cv.efficiency(params()) == pytest.approx(math.sin(math.sqrt(0.576)) ** 2, abs=1e-12)
        assert cv.efficiency(params()) == pytest.approx(0.4733, abs=5e-4)
        ratio = cv.efficiency(params()) / cv.efficiency(params(pump_power=0.7))
        assert ratio == pytest.approx(0.47, abs=0.03)

    def test_zero_power(self):
        assert cv.efficiency(params(pump_power=0.0, eta_tau_sq=7.0)) == 0.0

    def test_monotone_on_first_half_period(self):
        p = params()
        powers = np.linspace(0, p.full_conversion_power, 2000)
        eff = [cv.efficiency(p.with_power(x)) for x in powers]
        assert np.all(np.diff(eff) > 0)


class TestNoise:
    def test_values(self):
        assert cv.noise_singles_rate(params(pump_power=0.0)) == 266.0
        assert cv.noise_singles_rate(params()) == pytest.approx(13066.0)
        assert cv.noise_singles_rate(params(raman_coeff=0, dark_rate=0, pump_power=0.3)) == 0.0


class TestSnr:
    def test_zero_power(self):
        assert cv.snr(params(pump_power=0.0)) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            cv.snr(params(raman_coeff=0.0, dark_rate=0.0))

    def test_argmax_near_50mw(self):
        assert grid_argmax(params(), 1e-5, 0.7, 1e-5) == pytest.approx(0.050, abs=0.005)

    def test_gain_over_full_conversion(self):
        # grid oracle: 2.2357 at the dense-grid optimum vs 700 mW
        p = params()
        best = cv.snr(p.with_power(grid_argmax(p, 1e-5, 0.7, 1e-5)))
        assert best / cv.snr(p.with_power(0.7)) == pytest.approx(2.2357, abs=1e-3)

    def test_small_b_limit(self):
        p = params(raman_coeff=1e-9)
        assert cv.snr(p) == pytest.approx(cv.efficiency(p) / D, rel=1e-9)


class TestOptimizePump:
    def test_reference_constants(self):
        t0 = time.perf_counter()
        p_opt, s_opt = cv.optimize_pump(params(), 0.0, 0.7)
        assert time.perf_counter() - t0 < 1.0
        assert p_opt == pytest.approx(0.050, abs=0.005)
        assert s_opt == pytest.approx(cv.snr(params(pump_power=p_opt)))

    def test_no_dark_counts_pushes_optimum_down(self):
        p = params(dark_rate=0.0)
        p_opt, _ = cv.optimize_pump(p, 1e-4, 0.7)
        assert p_opt < 0.050
        assert p_opt == pytest.approx(grid_argmax(p, 1e-4, 0.7, 1e-5), abs=2e-4)

    def test_no_raman_maximizes_efficiency(self):
        p = params(raman_coeff=0.0)
        p_opt, _ = cv.optimize_pump(p, 0.0, 0.7)
        assert p_opt == pytest.approx(p.full_conversion_power, abs=1e-4)
        p_opt, _ = cv.optimize_pump(p, 0.0, 0.4)
        assert p_opt == pytest.approx(0.4, abs=1e-4)

    @pytest.mark.parametrize("lo,hi", [(-0.1, 0.5), (0.5, 0.5), (0.6, 0.1)])
    def test_bad_bounds(self, lo, hi):
        with pytest.raises(DomainError):
            cv.optimize_pump(params(), lo, hi)

    def test_matches_dense_grid_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = params(eta_tau_sq=rng.uniform(0.5, 10), raman_coeff=rng.uniform(0, 2e5),
                       dark_rate=rng.uniform(1, 2000))
            hi = rng.uniform(0.05, 1.0)
            p_opt, _ = cv.optimize_pump(p, 0.0, hi)
            assert abs(p_opt - grid_argmax(p, 0.0, hi, 1e-5)) <= 0.2e-3

    def test_continuous_in_dark_rate(self):
        ds = np.linspace(50, 2000, 1000)
        opts = np.array([cv.optimize_pump(params(dark_rate=d), 0.0, 0.7)[0] for d in ds])
        assert np.max(np.abs(np.diff(opts))) < 1e-3


def test_signal_scale_from_rates_reproduces_ratio():
    p = params()
    a = cv.signal_scale_from_rates(p, 0.265, 0.015)
    assert cv.snr(params(signal_scale=a)) == pytest.approx(0.265 / 0.015)


def test_sweep_columns():
    out = cv.sweep(params(), np.linspace(0, 0.7, 11))
    assert set(out) == {"P_W", "efficiency", "noise_Hz", "snr"}
    assert out["snr"][0] == 0.0
