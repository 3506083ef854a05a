"""Two-qubit polarization states, waveplate analyzers and entanglement metrics.

Basis order everywhere is (HH, HV, VH, VV); single-qubit order is (H, V).
States are plain numpy arrays: a length-4 complex vector for pure states and a
4x4 complex matrix for density operators. ``check_density`` plays the role of
an input validator, in the spirit of ``sklearn.utils.check_array``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInputError, DomainError, ValidationError

ATOL = 1e-9

H = np.array([1.0, 0.0], dtype=complex)
V = np.array([0.0, 1.0], dtype=complex)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
_YY = np.kron(SIGMA_Y, SIGMA_Y)


def check_state_vector(psi, atol=ATOL):
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (4,):
        raise ValidationError(f"state vector must have shape (4,), got {psi.shape}")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > atol:
        raise ValidationError(f"state vector squared norm is {norm!r}, expected 1")
    return psi


def check_density(rho, atol=ATOL):
    """Validate a two-qubit density operator and return it as a complex array.

    Raises ValidationError when the matrix is not 4x4, not Hermitian, not
    unit trace or has an eigenvalue below ``-atol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValidationError(f"density operator must be 4x4, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValidationError("density operator has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > atol:
        raise ValidationError(f"density operator is not Hermitian (max |M - M^H| = {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise ValidationError(f"density operator trace is {tr!r}, expected 1")
    lmin = np.linalg.eigvalsh(rho).min()
    if lmin < -atol:
        raise ValidationError(f"density operator has negative eigenvalue {lmin:.3g}")
    return rho


def is_physical(rho, atol=ATOL):
    try:
        check_density(rho, atol)
    except ValidationError:
        return False
    return True


def bell_phi_plus():
    return np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)


def pure_density(psi):
    psi = check_state_vector(psi)
    return np.outer(psi, psi.conj())


def product_state(a, b):
    """Tensor product of two single-qubit kets or density matrices."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def maximally_mixed():
    return np.eye(4, dtype=complex) / 4.0


def mix_with_white_noise(rho, lam):
    """Return ``(1 - lam) * rho + lam * I/4``."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"mixing fraction must lie in [0, 1], got {lam!r}")
    rho = check_density(rho)
    return (1.0 - lam) * rho + lam * maximally_mixed()


def werner(p):
    """``p |phi+><phi+| + (1 - p) I/4``."""
    return mix_with_white_noise(pure_density(bell_phi_plus()), 1.0 - p)


def fidelity_to_pure(rho, psi):
    rho = check_density(rho)
    psi = check_state_vector(psi)
    val = np.vdot(psi, rho @ psi)
    if abs(val.imag) > ATOL:
        raise ValidationError(f"<psi|rho|psi> has imaginary part {val.imag:.3g}")
    return float(min(1.0, max(0.0, val.real)))


def purity(rho):
    rho = check_density(rho)
    return float(np.real(np.trace(rho @ rho)))


def _clamped_eigs(a):
    vals = np.real(np.linalg.eigvals(a))
    vals = np.where((vals < 0) & (vals >= -ATOL), 0.0, vals)
    return np.sqrt(np.clip(vals, 0.0, None))


def concurrence(rho):
    """Wootters concurrence of a two-qubit state."""
    rho = check_density(rho)
    rho_tilde = _YY @ rho.conj() @ _YY
    lams = np.sort(_clamped_eigs(rho @ rho_tilde))[::-1]
    return float(max(0.0, lams[0] - lams[1] - lams[2] - lams[3]))


def binary_entropy(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1.0 - x) * np.log2(1.0 - x))


def eof_from_concurrence(c):
    c = min(1.0, max(0.0, c))
    return binary_entropy((1.0 + np.sqrt(1.0 - c * c)) / 2.0)


def eof(rho):
    """Entanglement of formation in ebits."""
    return eof_from_concurrence(concurrence(rho))


def correlation_matrix(rho):
    """3x3 matrix ``T_ij = tr(rho sigma_i (x) sigma_j)``."""
    rho = check_density(rho)
    return np.array([[np.real(np.trace(rho @ np.kron(si, sj))) for sj in PAULIS]
                     for si in PAULIS])


def chsh_optimal(rho):
    """Maximal CHSH value over all analyzer settings (Horodecki criterion)."""
    t = correlation_matrix(rho)
    m = np.sort(np.clip(np.linalg.eigvalsh(t.T @ t), 0.0, None))[::-1]
    return float(2.0 * np.sqrt(m[0] + m[1]))


# -- waveplate analyzers ------------------------------------------------------

def hwp_jones(theta):
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_jones(theta):
    c, s = np.cos(theta), np.sin(theta)
    off = (1 - 1j) * s * c
    return np.array([[c * c + 1j * s * s, off], [off, s * s + 1j * c * c]], dtype=complex)


@dataclass(frozen=True)
class WaveplateSetting:
    """Fast-axis angles (radians, from horizontal) of the analyzer waveplates.

    The analyzer matrix is ``QWP(qwp) @ HWP(hwp)`` followed by a PBS that
    transmits H; angles are reduced modulo pi.
    """

    qwp: float
    hwp: float

    def __post_init__(self):
        object.__setattr__(self, "qwp", float(np.mod(self.qwp, np.pi)))
        object.__setattr__(self, "hwp", float(np.mod(self.hwp, np.pi)))

    def analyzer_state(self):
        """Input polarization transmitted with certainty by the analyzer."""
        m = qwp_jones(self.qwp) @ hwp_jones(self.hwp)
        return m.conj().T @ H

    def projector(self):
        return projector_from_waveplates(self)

    def bloch(self):
        return bloch_vector(self.projector())

    @classmethod
    def from_bloch(cls, n):
        """Waveplate angles whose analyzer passes the state with Bloch vector ``n``."""
        x, y, z = np.asarray(n, dtype=float) / np.linalg.norm(n)
        q = -0.5 * np.arcsin(np.clip(y, -1.0, 1.0))
        h = 0.25 * (np.arctan2(x, z) + 2.0 * q)
        return cls(q, h)

    @classmethod
    def linear(cls, angle):
        """Linear polarizer at ``angle`` from horizontal."""
        return cls(0.0, angle / 2.0)


def projector_from_waveplates(setting):
    psi = setting.analyzer_state()
    return np.outer(psi, psi.conj())


def bloch_vector(op):
    return np.array([np.real(np.trace(op @ s)) for s in PAULIS])


def born_probabilities(rho, pa, pc):
    """Probabilities of (pass,pass), (pass,fail), (fail,pass), (fail,fail)."""
    rho = check_density(rho)
    eye = np.eye(2)
    out = []
    for a in (pa, eye - pa):
        for c in (pc, eye - pc):
            out.append(np.real(np.trace(rho @ np.kron(a, c))))
    p = np.clip(np.array(out), 0.0, None)
    return p / p.sum()


# -- CHSH ---------------------------------------------------------------------

@dataclass(frozen=True)
class ChshSettings:
    """Analyzer settings a, a' (mode A) and b, b' (mode C)."""

    a: WaveplateSetting
    a_prime: WaveplateSetting
    b: WaveplateSetting
    b_prime: WaveplateSetting

    def pairs(self):
        """The four correlation settings in the order (ab, ab', a'b, a'b')."""
        return [(self.a, self.b), (self.a, self.b_prime),
                (self.a_prime, self.b), (self.a_prime, self.b_prime)]

    @classmethod
    def standard(cls):
        """Linear analyzers at 0, 45 degrees (A) and 22.5, 67.5 degrees (C)."""
        return cls.from_polarizer_angles(0.0, np.pi / 4, np.pi / 8, 3 * np.pi / 8)

    @classmethod
    def from_polarizer_angles(cls, a, a_prime, b, b_prime):
        lin = WaveplateSetting.linear
        return cls(lin(a), lin(a_prime), lin(b), lin(b_prime))

    @classmethod
    def optimal_for(cls, rho):
        """Settings attaining ``chsh_optimal(rho)`` in the combination used here."""
        t = correlation_matrix(rho)
        m, vecs = np.linalg.eigh(t.T @ t)
        order = np.argsort(m)[::-1]
        m = np.clip(m[order], 0.0, None)
        c1, c2 = vecs[:, order[0]], vecs[:, order[1]]
        theta = np.arctan2(np.sqrt(m[1]), np.sqrt(m[0]))
        b = np.cos(theta) * c1 + np.sin(theta) * c2
        b_prime = np.sin(theta) * c2 - np.cos(theta) * c1
        a = _unit_or_any(t @ c1)
        a_prime = _unit_or_any(t @ c2, orth=a)
        fb = WaveplateSetting.from_bloch
        return cls(fb(a), fb(a_prime), fb(b), fb(b_prime))


def _unit_or_any(v, orth=None):
    n = np.linalg.norm(v)
    if n > 1e-12:
        return v / n
    if orth is None:
        return np.array([0.0, 0.0, 1.0])
    trial = np.cross(orth, [1.0, 0.0, 0.0])
    if np.linalg.norm(trial) < 1e-6:
        trial = np.cross(orth, [0.0, 1.0, 0.0])
    return trial / np.linalg.norm(trial)


def correlation(probs):
    """``E = (N++ + N-- - N+- - N-+) / N`` from four outcome counts or probabilities."""
    probs = np.asarray(probs, dtype=float)
    total = probs.sum()
    if total <= 0:
        raise DegenerateInputError("setting has zero total counts")
    return float((probs[0] + probs[3] - probs[1] - probs[2]) / total)


def chsh_from_outcomes(outcomes):
    """S from four outcome vectors ordered as ``ChshSettings.pairs()``."""
    if len(outcomes) != 4:
        raise DomainError(f"CHSH needs exactly 4 settings, got {len(outcomes)}")
    e = [correlation(o) for o in outcomes]
    return abs(e[0] - e[1] + e[2] + e[3])


def chsh_value(rho, settings):
    """Expected S for ``rho`` measured at fixed ``settings``."""
    outcomes = [born_probabilities(rho, sa.projector(), sc.projector())
                for sa, sc in settings.pairs()]
    return chsh_from_outcomes(outcomes)


def random_density(rng, rank=4):
    """Random two-qubit density operator (Ginibre ensemble of given rank)."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_qubit_density(rng):
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
