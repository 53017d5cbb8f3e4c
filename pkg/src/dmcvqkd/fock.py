"""Truncated Fock-space operator toolkit.

All operators are dense complex matrices on the number basis {|0>, ..., |n_max>}
(dimension n_max + 1).  The photon-number cutoff is the single truncation knob of
the whole package; every result downstream records which cutoff produced it.

Conventions:
    q = (a^dag + a)/sqrt(2),  p = i(a^dag - a)/sqrt(2),  so [q, p] = i
    and the vacuum quadrature variance is 1/2 (shot-noise unit N0 = 1/2).
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.linalg import expm

DEFAULT_CUTOFF = 12
FAST_CUTOFF = 10

HERMITICITY_TOL = 1e-12


def check_cutoff(n_max: int) -> int:
    if not isinstance(n_max, (int, np.integer)) or n_max < 1:
        raise ValueError(f"cutoff n_max must be an integer >= 1, got {n_max!r}")
    return int(n_max)


def annihilation(n_max: int) -> np.ndarray:
    """Ladder operator a with <n-1|a|n> = sqrt(n)."""
    n_max = check_cutoff(n_max)
    a = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    ns = np.arange(1, n_max + 1)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def creation(n_max: int) -> np.ndarray:
    return annihilation(n_max).conj().T


def number_operator(n_max: int) -> np.ndarray:
    n_max = check_cutoff(n_max)
    return np.diag(np.arange(n_max + 1, dtype=float)).astype(complex)


def quadratures(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (q, p); both Hermitian, [q, p] = i*I except at the truncation edge."""
    a = annihilation(n_max)
    ad = a.conj().T
    q = (ad + a) / math.sqrt(2.0)
    p = 1j * (ad - a) / math.sqrt(2.0)
    return q, p


def coherent_ket(alpha: complex, n_max: int) -> np.ndarray:
    """Coefficients exp(-|alpha|^2/2) alpha^n / sqrt(n!) up to the cutoff.

    Warns when |alpha|^2 is not well below the cutoff, since the truncated ket
    then loses norm.
    """
    n_max = check_cutoff(n_max)
    amp2 = abs(alpha) ** 2
    if amp2 > 0.5 * n_max:
        warnings.warn(
            f"coherent amplitude |alpha|^2 = {amp2:.3g} is close to the cutoff "
            f"{n_max}; truncated ket loses norm",
            stacklevel=2,
        )
    ns = np.arange(n_max + 1)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, n_max + 1)))))
    ket = np.exp(-amp2 / 2.0) * np.power(complex(alpha), ns) / np.exp(0.5 * log_fact)
    return ket.astype(complex)


def thermal_state(mean_photons: float, n_max: int) -> np.ndarray:
    """Diagonal thermal state nbar^n / (1+nbar)^(n+1), kept raw (not renormalized).

    The truncation trace deficit is deliberately exposed; see thermal_trace_deficit.
    """
    n_max = check_cutoff(n_max)
    if mean_photons < 0:
        raise ValueError(f"mean photon number must be >= 0, got {mean_photons}")
    if mean_photons == 0:
        rho = np.zeros(n_max + 1)
        rho[0] = 1.0
    else:
        ratio = mean_photons / (1.0 + mean_photons)
        rho = np.power(ratio, np.arange(n_max + 1)) / (1.0 + mean_photons)
    return np.diag(rho).astype(complex)


def thermal_trace_deficit(mean_photons: float, n_max: int) -> float:
    """1 - trace of the truncated thermal state: (nbar/(1+nbar))^(n_max+1)."""
    if mean_photons <= 0:
        return 0.0
    return (mean_photons / (1.0 + mean_photons)) ** (n_max + 1)


def displacement(alpha: complex, n_max: int) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha* a); unitary up to truncation error."""
    a = annihilation(n_max)
    return expm(complex(alpha) * a.conj().T - np.conj(alpha) * a)


def beamsplitter_amplitudes(
    alpha_in: complex, beta_in: complex, eta: float
) -> tuple[complex, complex]:
    """Coherent amplitudes after a beam splitter of transmittance eta.

    Matrix convention: kept arm gets sqrt(eta) a + sqrt(1-eta) b, the discarded
    arm sqrt(1-eta) a - sqrt(eta) b.  The sign of the discarded arm is
    convention-dependent; only the kept arm feeds the rest of the model.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmittance must lie in [0, 1], got {eta}")
    t, r = math.sqrt(eta), math.sqrt(1.0 - eta)
    return (t * alpha_in + r * beta_in, r * alpha_in - t * beta_in)


def beamsplitter_theta(eta: float) -> float:
    """Mixing angle with eta = 1/(1 + tan^2 theta)."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"transmittance must lie in (0, 1], got {eta}")
    return math.atan(math.sqrt((1.0 - eta) / eta))


def beamsplitter_unitary(eta: float, n_max: int) -> np.ndarray:
    """Two-mode unitary exp[theta (a^dag b - a b^dag)] on the kept (x) ancilla space."""
    theta = beamsplitter_theta(eta)
    a = annihilation(n_max)
    ident = np.eye(n_max + 1)
    a1 = np.kron(a, ident)
    a2 = np.kron(ident, a)
    gen = a1.conj().T @ a2 - a1 @ a2.conj().T
    return expm(theta * gen)


def is_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def psd_sqrt(m: np.ndarray, neg_tol: float = 1e-10) -> np.ndarray:
    """Square root of a PSD Hermitian matrix by eigendecomposition.

    Eigenvalues in [-neg_tol, 0) are clamped to zero (truncation noise); anything
    below -neg_tol signals an upstream numerical fault and raises.
    """
    vals, vecs = np.linalg.eigh(hermitize(m))
    if vals.min() < -neg_tol:
        raise ValueError(
            f"matrix is not PSD: min eigenvalue {vals.min():.3e} < -{neg_tol:.0e}"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T
