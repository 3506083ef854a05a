import warnings

import numpy as np
import pytest
from sklearn.base import clone

from dfgconv import experiment as ex
from dfgconv import quantum as qc
from dfgconv import tomography as tm
from dfgconv.exceptions import DomainError, IllPosedError

from conftest import trace_distance, uhlmann_fidelity

SETTINGS = tm.standard_settings()
PSI = qc.bell_phi_plus()


def poisson_table(rho, mean_per_setting, rng):
    exact = tm.expected_table(rho, SETTINGS, mean_per_setting)
    return exact.with_counts(rng.poisson(exact.counts))


class TestSettings:
    def test_standard_scheme(self):
        assert len(SETTINGS) == 36
        bloch = {k: s.bloch() for k, s in tm.EIGENSTATES.items()}
        expected = {"H": [0, 0, 1], "V": [0, 0, -1], "D": [1, 0, 0], "A": [-1, 0, 0],
                    "R": [0, 1, 0], "L": [0, -1, 0]}
        for k, v in expected.items():
            assert np.allclose(bloch[k], v, atol=1e-12)

    def test_outcome_projectors_resolve_identity(self):
        for s in SETTINGS:
            assert np.allclose(tm.outcome_projectors(s).sum(axis=0), np.eye(4))

    def test_incomplete_raises(self):
        zz = tm.standard_settings("HV")
        table = tm.expected_table(np.eye(4) / 4, zz, 100.0)
        with pytest.raises(IllPosedError):
            tm.linear_inversion(table)
        with pytest.raises(IllPosedError):
            tm.mle_reconstruct(table)

    def test_minimal_complete_set(self):
        table = tm.expected_table(np.eye(4) / 4, tm.standard_settings("HDR"), 100.0)
        tm.check_complete(table)


class TestLinearInversion:
    def test_exact_bell(self, phi_plus):
        rho = tm.linear_inversion(tm.expected_table(phi_plus, SETTINGS, 1000.0))
        assert np.allclose(rho, phi_plus, atol=1e-9)

    def test_exact_mixed(self):
        rho = tm.linear_inversion(tm.expected_table(np.eye(4) / 4, SETTINGS, 1000.0))
        assert np.allclose(rho, np.eye(4) / 4, atol=1e-9)

    def test_low_counts_flagged_not_clamped(self, phi_plus):
        rng = np.random.default_rng(0)
        flagged = 0
        for _ in range(20):
            est = tm.LinearInversionTomography().fit(poisson_table(phi_plus, 10, rng))
            assert np.trace(est.rho_).real == pytest.approx(1.0)
            assert np.allclose(est.rho_, est.rho_.conj().T)
            if not est.is_physical_:
                flagged += 1
                assert est.min_eigenvalue_ < 0
        assert flagged > 0


class TestMle:
    def test_exact_bell(self, phi_plus):
        res = tm.mle_reconstruct(tm.expected_table(phi_plus, SETTINGS, 1000.0))
        assert qc.fidelity_to_pure(res.rho, PSI) >= 1 - 1e-6

    def test_uniform_counts(self):
        table = tm.CountTable(SETTINGS, np.full((36, 4), 250))
        res = tm.mle_reconstruct(table)
        assert np.allclose(res.rho, np.eye(4) / 4, atol=1e-6)
        assert res.converged

    def test_werner_poisson(self):
        truth = qc.werner(0.9067)
        res = tm.mle_reconstruct(poisson_table(truth, 1e5, np.random.default_rng(1)))
        assert uhlmann_fidelity(res.rho, truth) >= 0.995

    def test_random_states_exact(self, rng):
        for _ in range(50):
            truth = qc.random_density(rng)
            res = tm.mle_reconstruct(tm.expected_table(truth, SETTINGS, 1e4))
            assert uhlmann_fidelity(res.rho, truth) >= 1 - 1e-4

    def test_likelihood_nondecreasing(self, rng):
        for i in range(50):
            truth = qc.random_density(rng, rank=int(rng.integers(1, 5)))
            table = poisson_table(truth, rng.uniform(5, 500), rng)
            for accelerate in (True, False):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    res = tm.mle_reconstruct(table, record_history=True, accelerate=accelerate,
                                             max_iter=300)
                assert np.all(np.diff(res.history) >= 0), i
                assert qc.is_physical(res.rho)

    def test_output_physical_for_arbitrary_counts(self, rng):
        for _ in range(20):
            counts = rng.integers(0, 50, size=(36, 4))
            counts[rng.random((36, 4)) < 0.3] = 0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = tm.mle_reconstruct(tm.CountTable(SETTINGS, counts), max_iter=500)
            assert qc.is_physical(res.rho)

    def test_agrees_with_linear_inversion_at_high_counts(self, rng):
        for _ in range(5):
            truth = 0.8 * qc.random_density(rng) + 0.2 * np.eye(4) / 4
            table = poisson_table(truth, 1e6, rng)
            assert trace_distance(tm.linear_inversion(table), tm.mle_reconstruct(table).rho) <= 0.01

    def test_regularization_warning(self):
        # counts on an outcome that the start state cannot produce after a zero-prob update
        counts = np.zeros((36, 4))
        counts[:, 0] = 100
        counts[0, 3] = 1
        with pytest.warns(RuntimeWarning):
            res = tm.mle_reconstruct(tm.CountTable(SETTINGS, counts), max_iter=200,
                                     rho0=qc.pure_density(qc.product_state([1, 0], [1, 0])))
        assert res.regularized

    def test_tol_validated(self):
        with pytest.raises(DomainError):
            tm.mle_reconstruct(tm.CountTable(SETTINGS, np.ones((36, 4))), tol=0.0)

    def test_unaccelerated_agrees(self):
        table = poisson_table(qc.werner(0.9), 200, np.random.default_rng(4))
        a = tm.mle_reconstruct(table).rho
        b = tm.mle_reconstruct(table, accelerate=False, tol=1e-12, max_iter=20000).rho
        assert trace_distance(a, b) < 1e-3


class TestMetrics:
    def test_bell(self, phi_plus):
        v = tm.metric_values(phi_plus)
        assert v["fidelity"] == pytest.approx(1) and v["eof"] == pytest.approx(1)
        assert v["purity"] == pytest.approx(1)
        assert v["s_parameter"] == pytest.approx(2 * np.sqrt(2))
        assert v["s_fixed"] == pytest.approx(2 * np.sqrt(2))

    def test_mixed(self):
        v = tm.metric_values(np.eye(4) / 4)
        assert v["fidelity"] == pytest.approx(0.25)
        assert v["eof"] == pytest.approx(0, abs=1e-12)
        assert v["purity"] == pytest.approx(0.25)
        assert v["s_parameter"] == pytest.approx(0, abs=1e-12)

    def test_noisy_surrogate(self, cfg):
        lam = 0.0536
        rho = qc.mix_with_white_noise(cfg.scenarios["initial"].source.initial_state, lam)
        v = tm.metric_values(rho)
        assert v["fidelity"] == pytest.approx(0.931, abs=1e-3)
        # Werner law: S = 2 sqrt2 * (1 - 4(1-F)/3)
        assert v["s_parameter"] == pytest.approx(2 * np.sqrt(2) * (4 * v["fidelity"] - 1) / 3, abs=1e-9)
        assert v["s_parameter"] == pytest.approx(2.56, abs=0.01)

    def test_chsh_from_counts(self, phi_plus):
        chsh = qc.ChshSettings.standard()
        table = tm.expected_table(phi_plus, chsh.pairs(), 1e4)
        assert tm.chsh_from_counts(table) == pytest.approx(2 * np.sqrt(2), abs=1e-9)

    def test_record(self, phi_plus):
        rec = tm.metrics(phi_plus).as_record()
        assert set(rec) == {f"{n}{s}" for n in tm.METRIC_NAMES for s in ("", "_sigma")}


class TestBootstrap:
    def table(self, scale=1.0, seed=0):
        return poisson_table(qc.werner(0.9), 300 * scale, np.random.default_rng(seed))

    def test_reproducible(self):
        t = self.table()
        a, sa = tm.bootstrap_metrics(t, n_resamples=100, seed=3)
        b, sb = tm.bootstrap_metrics(t, n_resamples=100, seed=3, n_jobs=2)
        assert np.array_equal(sa, sb)
        assert a == b

    def test_minimum_resamples(self):
        with pytest.raises(DomainError):
            tm.bootstrap_metrics(self.table(), n_resamples=99)

    def test_four_times_counts_halves_sigma(self):
        ratios = []
        for seed in range(3):
            lo, _ = tm.bootstrap_metrics(self.table(1.0, seed), n_resamples=200, seed=seed)
            hi, _ = tm.bootstrap_metrics(self.table(4.0, seed), n_resamples=200, seed=seed)
            ratios.append(lo.fidelity.sigma / hi.fidelity.sigma)
        assert np.mean(ratios) == pytest.approx(2.0, rel=0.15)

    def test_huge_counts_small_sigma(self):
        rep, _ = tm.bootstrap_metrics(self.table(1e4), n_resamples=100)
        assert rep.fidelity.sigma < 1e-3 and rep.s_parameter.sigma < 3e-3

    def test_published_statistics_order_of_magnitude(self, cfg):
        # ~300 detected coincidences over the 36 settings
        scen = cfg.scenarios["converted-SS"]
        table = ex.run_tomography_counts(scen, SETTINGS, 30.0, seed=11)
        assert 200 < table.counts.sum() < 400
        rep, _ = tm.bootstrap_metrics(table, n_resamples=200, seed=1)
        assert 0.04 / 3 < rep.fidelity.sigma < 0.04 * 3
        assert 0.09 / 3 < rep.s_parameter.sigma < 0.09 * 3


class TestEstimators:
    def test_mle_estimator(self, phi_plus):
        table = tm.expected_table(phi_plus, SETTINGS, 1e3)
        est = tm.MaximumLikelihoodTomography(tol=1e-9).fit(table)
        assert est.get_params() == {"tol": 1e-9, "max_iter": 10000}
        assert clone(est).get_params() == est.get_params()
        probs = est.predict(SETTINGS)
        assert probs.shape == (36, 4) and np.allclose(probs.sum(axis=1), 1)
        assert est.score(table) > tm.MaximumLikelihoodTomography().fit(
            tm.CountTable(SETTINGS, np.full((36, 4), 10))).score(table)

    def test_linear_estimator_predict(self):
        table = tm.expected_table(np.eye(4) / 4, SETTINGS, 1e3)
        est = tm.LinearInversionTomography().fit(table)
        assert np.allclose(est.predict(SETTINGS), 0.25)
        assert est.is_physical_
