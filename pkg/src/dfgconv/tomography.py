"""Two-qubit state tomography from polarization-analyzer coincidence counts.

Each measurement setting is a pair of waveplate analyzers, one per photon,
and records four outcome counts ordered (pass,pass), (pass,fail),
(fail,pass), (fail,fail). Reconstruction is either plain least-squares
linear inversion or iterative maximum likelihood (the R rho R scheme).
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import quantum as qc
from .exceptions import DegenerateInputError, DomainError, IllPosedError, ValidationError

EPS_FLOOR = 1e-12
_PAULI4 = [np.eye(2, dtype=complex), qc.SIGMA_X, qc.SIGMA_Y, qc.SIGMA_Z]
_PAULI16 = np.array([np.kron(a, b) for a in _PAULI4 for b in _PAULI4])

# analyzer eigenstates H, V, D, A, R, L
EIGENSTATES = {
    "H": qc.WaveplateSetting(0.0, 0.0),
    "V": qc.WaveplateSetting(0.0, np.pi / 4),
    "D": qc.WaveplateSetting(0.0, np.pi / 8),
    "A": qc.WaveplateSetting(0.0, -np.pi / 8),
    "R": qc.WaveplateSetting.from_bloch([0.0, 1.0, 0.0]),
    "L": qc.WaveplateSetting.from_bloch([0.0, -1.0, 0.0]),
}


def standard_settings(labels="HVDARL"):
    """All analyzer pairs drawn from the given eigenstate labels (36 by default)."""
    return [(EIGENSTATES[a], EIGENSTATES[c]) for a, c in itertools.product(labels, repeat=2)]


def outcome_projectors(setting_pair):
    """Four 4x4 projectors for one setting pair, in outcome order."""
    sa, sc = setting_pair
    pa, pc = sa.projector(), sc.projector()
    eye = np.eye(2)
    return np.array([np.kron(a, c) for a in (pa, eye - pa) for c in (pc, eye - pc)])


@dataclass
class CountTable:
    """Coincidence counts per setting pair.

    ``counts`` has shape (n_settings, 4); ``durations`` holds the
    integration time of each setting in seconds. Counts are usually integers
    but nonnegative floats (exact expectation values) are accepted.
    """

    settings: list
    counts: np.ndarray
    durations: np.ndarray = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or self.counts.shape != (len(self.settings), 4):
            raise ValidationError(
                f"counts must have shape ({len(self.settings)}, 4), got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValidationError("counts must be nonnegative")
        if self.durations is None:
            self.durations = np.ones(len(self.settings))
        self.durations = np.asarray(self.durations, dtype=float).reshape(len(self.settings))

    def __len__(self):
        return len(self.settings)

    @property
    def totals(self):
        return self.counts.sum(axis=1)

    def projectors(self):
        """Array of shape (n_settings * 4, 4, 4) aligned with ``counts.ravel()``."""
        return np.concatenate([outcome_projectors(s) for s in self.settings])

    def with_counts(self, counts):
        return CountTable(list(self.settings), counts, self.durations.copy())

    def subset(self, pairs, atol=1e-9):
        """Rows whose settings match ``pairs`` (angles compared modulo pi)."""
        rows = []
        for want in pairs:
            idx = next((i for i, s in enumerate(self.settings)
                        if _same_setting(s[0], want[0], atol) and _same_setting(s[1], want[1], atol)),
                       None)
            if idx is None:
                raise DomainError(f"setting {want} not present in count table")
            rows.append(idx)
        return CountTable([self.settings[i] for i in rows], self.counts[rows], self.durations[rows])


def _same_setting(s1, s2, atol):
    return np.allclose(s1.projector(), s2.projector(), atol=atol)


def expected_table(rho, settings, counts_per_setting=1.0):
    """Noise-free Born-rule count table (real-valued expectations)."""
    rho = qc.check_density(rho)
    counts = np.array([counts_per_setting * qc.born_probabilities(rho, sa.projector(), sc.projector())
                       for sa, sc in settings])
    # float residue of structurally-zero outcomes
    counts[counts < 1e-12 * counts_per_setting] = 0.0
    return CountTable(list(settings), counts)


# -- linear inversion -----------------------------------------------------------

def _design_matrix(table):
    proj = table.projectors()
    # p_k = sum_mu r_mu tr(Pi_k sigma_mu) / 4, with r_0 = 1
    return np.real(np.einsum("kij,mji->km", proj, _PAULI16)) / 4.0


def check_complete(table):
    a = _design_matrix(table)
    rank = np.linalg.matrix_rank(a, tol=1e-8)
    if rank < 16:
        raise IllPosedError(f"measurement set spans rank {rank} < 16; not informationally complete")
    return a


def linear_inversion(table):
    """Least-squares Born-rule inversion; Hermitian and unit trace, possibly not PSD."""
    a = check_complete(table)
    totals = table.totals.astype(float)
    if np.any(totals <= 0):
        raise DegenerateInputError("a setting has zero total counts")
    freqs = (table.counts / totals[:, None]).ravel()
    r, *_ = np.linalg.lstsq(a[:, 1:], freqs - a[:, 0], rcond=None)
    coeffs = np.concatenate([[1.0], r])
    rho = np.einsum("m,mij->ij", coeffs, _PAULI16) / 4.0
    return (rho + rho.conj().T) / 2


# -- maximum likelihood ---------------------------------------------------------

@dataclass
class ReconstructionResult:
    rho: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    regularized: bool = False
    history: list = field(default_factory=list, repr=False)


def _log_likelihood(n, p):
    mask = n > 0
    return float(np.sum(n[mask] * np.log(p[mask])))


def _flat_projectors(table):
    return table.projectors().reshape(-1, 16)


def mle_reconstruct(table, tol=1e-10, max_iter=10_000, rho0=None, record_history=False,
                    accelerate=True, projectors=None):
    """Iterative maximum-likelihood reconstruction.

    The basic step is rho <- R rho R / tr(R rho R) with
    R = sum_k (n_k / p_k) Pi_k / N. If a step would lower the log-likelihood
    it is diluted to (1 + eps R) rho (1 + eps R) with eps halved until it
    does not. With ``accelerate`` two basic steps are extrapolated
    (squared-polynomial extrapolation) and the extrapolated state is kept
    only when it stays positive and improves the likelihood, so every
    accepted iterate has likelihood at least that of its predecessor.
    Iteration stops when the per-iteration gain drops below ``tol``.
    ``projectors`` may pass a cached ``(n_outcomes, 16)`` array.
    """
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    if projectors is None:
        check_complete(table)
        projectors = _flat_projectors(table)
    n = np.asarray(table.counts, dtype=float).ravel()
    total = n.sum()
    if total <= 0:
        raise DegenerateInputError("count table is empty")
    nz = n > 0
    n_nz = n[nz]
    pf = projectors[nz]
    pf_conj = pf.conj()

    rho = qc.maximally_mixed() if rho0 is None else qc.check_density(rho0).copy()
    regularized = False
    eye = np.eye(4)

    def evaluate(r):
        nonlocal regularized
        p = np.real(pf_conj @ r.ravel())
        if np.any(p < EPS_FLOOR):
            regularized = True
            p = np.maximum(p, EPS_FLOOR)
        return p, float(n_nz @ np.log(p))

    def r_operator(p):
        r_op = ((n_nz / p) @ pf).reshape(4, 4) / total
        return (r_op + r_op.conj().T) / 2

    def congruence(step, r):
        out = step @ r @ step
        out = (out + out.conj().T) / 2
        return out / np.trace(out).real

    def basic_step(r, p, ll):
        """Guarded R rho R step; never lowers the likelihood."""
        r_op = r_operator(p)
        eps = None
        while True:
            new = congruence(r_op if eps is None else eye + eps * r_op, r)
            p_new, ll_new = evaluate(new)
            if ll_new >= ll:
                return new, p_new, ll_new
            eps = 1.0 if eps is None else eps / 2
            if eps < 1e-8:
                return r, p, ll

    def extrapolated(x0, ll0, x1, x2, p2, ll2):
        r = x1 - x0
        v = x2 - 2 * x1 + x0
        nv = np.linalg.norm(v)
        if nv == 0:
            return x2, p2, ll2
        alpha = min(-1.0, -np.linalg.norm(r) / nv)
        while alpha < -1.0:
            x = x0 - 2 * alpha * r + alpha ** 2 * v
            x = (x + x.conj().T) / 2
            x /= np.trace(x).real
            if np.linalg.eigvalsh(x)[0] > 0:
                p_x, _ = evaluate(x)
                x3 = congruence(r_operator(p_x), x)
                p3, ll3 = evaluate(x3)
                if ll3 >= ll2:
                    return x3, p3, ll3
            alpha = (alpha - 1.0) / 2
        return x2, p2, ll2

    p, ll = evaluate(rho)
    history = [ll] if record_history else []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x1, p1, ll1 = basic_step(rho, p, ll)
        new = (x1, p1, ll1)
        if accelerate and ll1 > ll:
            x2, p2, ll2 = basic_step(x1, p1, ll1)
            new = extrapolated(rho, ll, x1, x2, p2, ll2)
        gain = new[2] - ll
        rho, p, ll = new
        if record_history:
            history.append(ll)
        if gain < tol:
            converged = True
            break
    if regularized:
        warnings.warn("MLE hit zero-probability projectors; floored at 1e-12", RuntimeWarning,
                      stacklevel=2)
    return ReconstructionResult(rho, ll, it, converged, regularized, history)


# -- metrics & bootstrap ---------------------------------------------------------

METRIC_NAMES = ("fidelity", "eof", "purity", "s_parameter", "s_fixed")


@dataclass(frozen=True)
class Estimate:
    value: float
    sigma: float = 0.0


@dataclass(frozen=True)
class MetricsReport:
    """Metric values with 1-sigma errors; ``s_parameter`` is the optimal-setting S."""

    fidelity: Estimate
    eof: Estimate
    purity: Estimate
    s_parameter: Estimate
    s_fixed: Estimate

    def as_record(self):
        out = {}
        for name in METRIC_NAMES:
            est = getattr(self, name)
            out[name] = est.value
            out[f"{name}_sigma"] = est.sigma
        return out


def metric_values(rho, chsh=None):
    """Fidelity to phi+, EOF, purity, optimal S and S at fixed ``chsh`` settings."""
    rho = qc.check_density(rho, atol=1e-7)
    rho = (rho + rho.conj().T) / 2
    chsh = chsh or qc.ChshSettings.standard()
    return {
        "fidelity": qc.fidelity_to_pure(rho, qc.bell_phi_plus()),
        "eof": qc.eof(rho),
        "purity": qc.purity(rho),
        "s_parameter": qc.chsh_optimal(rho),
        "s_fixed": qc.chsh_value(rho, chsh),
    }


def metrics(rho, chsh=None):
    vals = metric_values(rho, chsh)
    return MetricsReport(**{k: Estimate(v, 0.0) for k, v in vals.items()})


def chsh_from_counts(table, settings=None):
    """S from the four CHSH setting rows of ``table``."""
    settings = settings or qc.ChshSettings.standard()
    sub = table.subset(settings.pairs())
    return qc.chsh_from_outcomes(list(sub.counts))


def _resample_metrics(table, seed_seq, rho_start, chsh, tol, max_iter, projectors):
    rng = np.random.default_rng(seed_seq)
    counts = rng.poisson(np.asarray(table.counts, dtype=float))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = mle_reconstruct(table.with_counts(counts), tol=tol, max_iter=max_iter,
                              rho0=rho_start, projectors=projectors)
    vals = metric_values(res.rho, chsh)
    return [vals[k] for k in METRIC_NAMES]


def bootstrap_metrics(table, n_resamples=1000, seed=0, chsh=None, tol=1e-10,
                      max_iter=10_000, n_jobs=1, reconstruction=None):
    """Parametric Poisson bootstrap of all metrics.

    Every count is redrawn as Poisson(observed), the state re-estimated, and
    the metrics recomputed. Values are those of the original reconstruction;
    sigmas are the sample standard deviations over resamples. Each resample
    owns a child of ``SeedSequence(seed)``, so results do not depend on
    ``n_jobs``.
    """
    if n_resamples < 100:
        raise DomainError(f"n_resamples must be >= 100, got {n_resamples}")
    if reconstruction is None:
        reconstruction = mle_reconstruct(table, tol=tol, max_iter=max_iter)
    base = metric_values(reconstruction.rho, chsh)
    # warm start slightly inside the simplex so R rho R can leave the support
    start = 0.999 * reconstruction.rho + 0.001 * qc.maximally_mixed()
    children = np.random.SeedSequence(seed).spawn(n_resamples)
    projectors = _flat_projectors(table)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_resample_metrics)(table, ss, start, chsh, tol, max_iter, projectors)
        for ss in children)
    samples = np.array(rows)
    sig = samples.std(axis=0, ddof=1)
    report = MetricsReport(**{k: Estimate(base[k], float(s)) for k, s in zip(METRIC_NAMES, sig)})
    return report, samples


# -- estimator API ---------------------------------------------------------------

class MaximumLikelihoodTomography(BaseEstimator):
    """Estimator form of ``mle_reconstruct``.

    ``fit(table)`` stores ``rho_``, ``log_likelihood_``, ``n_iter_`` and
    ``converged_``; ``predict(settings)`` returns Born-rule outcome
    probabilities of the fitted state; ``score(table)`` is the mean
    per-count log-likelihood.
    """

    def __init__(self, tol=1e-10, max_iter=10_000):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, table, y=None):
        res = mle_reconstruct(table, tol=self.tol, max_iter=self.max_iter)
        self.rho_ = res.rho
        self.log_likelihood_ = res.log_likelihood
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def predict(self, settings):
        check_is_fitted(self, "rho_")
        return np.array([qc.born_probabilities(self.rho_, sa.projector(), sc.projector())
                         for sa, sc in settings])

    def score(self, table, y=None):
        p = self.predict(table.settings).ravel()
        n = np.asarray(table.counts, dtype=float).ravel()
        return _log_likelihood(n, np.maximum(p, EPS_FLOOR)) / n.sum()


class LinearInversionTomography(BaseEstimator):
    """Estimator form of ``linear_inversion``; ``is_physical_`` flags a PSD result."""

    def fit(self, table, y=None):
        self.rho_ = linear_inversion(table)
        self.is_physical_ = qc.is_physical(self.rho_)
        self.min_eigenvalue_ = float(np.linalg.eigvalsh(self.rho_).min())
        return self

    def predict(self, settings):
        check_is_fitted(self, "rho_")
        return np.array([[np.real(np.trace(self.rho_ @ op)) for op in outcome_projectors(s)]
                         for s in settings])
