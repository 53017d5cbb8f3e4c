"""QPSK protocol objects: constellation, Alice's reduced state, key map, post-processing maps.

Register ordering for the post-processed state is fixed as R (key register, 4-dim)
tensor A (state-preparation register, 4-dim) tensor B (Bob's truncated mode), with
row-major composite indexing throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .fock import hermitize, psd_sqrt
from .noise import TrustedSourceModel

if TYPE_CHECKING:
    from .detector import RegionOperatorSet

DISCARD = -1  # key-map symbol for outcomes inside the postselection disk


@dataclass(frozen=True)
class Constellation:
    """Four coherent amplitudes {alpha, i alpha, -alpha, -i alpha}, uniform priors."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"constellation amplitude must be > 0, got {self.alpha}")

    @property
    def amplitudes(self) -> tuple[complex, complex, complex, complex]:
        a = self.alpha
        return (a + 0j, 1j * a, -a + 0j, -1j * a)

    @property
    def probabilities(self) -> tuple[float, float, float, float]:
        return (0.25, 0.25, 0.25, 0.25)

    def rotated(self, phase: float) -> "RotatedConstellation":
        return RotatedConstellation(self.alpha, phase)


@dataclass(frozen=True)
class RotatedConstellation(Constellation):
    """Constellation with a global phase, used for covariance checks."""

    phase: float = 0.0

    @property
    def amplitudes(self) -> tuple[complex, complex, complex, complex]:
        rot = np.exp(1j * self.phase)
        return tuple(rot * a for a in super().amplitudes)


def build_constellation(alpha: float) -> Constellation:
    return Constellation(alpha)


@dataclass(frozen=True)
class AliceReducedState:
    matrix: np.ndarray
    provenance: str  # "closed-form" or "quadrature"


def _coherent_overlap(left: complex, right: complex) -> complex:
    """<left|right> = exp(-|right|^2/2 - |left|^2/2 + conj(left) right)."""
    return np.exp(
        -0.5 * abs(right) ** 2 - 0.5 * abs(left) ** 2 + np.conj(left) * right
    )


def alice_reduced_state(
    constellation: Constellation,
    model: TrustedSourceModel,
    method: str = "closed-form",
    quadrature_nodes: int = 80,
) -> AliceReducedState:
    """Reduced state of the preparation register under the thermal-coupling model.

    Entry (i, j) is the Gaussian average, over the thermal ancilla amplitude, of
    the overlap of the coupled coherent states.  The closed form is the noiseless
    Gram entry times the dephasing factor
        exp(-nbar eta (1 - eta) |alpha_i - alpha_j|^2 / 4),
    obtained by completing the square in the ancilla integral.  The quadrature
    path evaluates the defining integral directly and is kept for cross-checks.
    """
    amps = constellation.amplitudes
    probs = constellation.probabilities
    eta = model.eta_s
    nbar = model.mean_photons
    n = len(amps)
    mat = np.zeros((n, n), dtype=complex)
    if method == "closed-form":
        for i in range(n):
            for j in range(n):
                gram = np.exp(
                    eta
                    * (
                        np.conj(amps[j]) * amps[i]
                        - 0.5 * (abs(amps[i]) ** 2 + abs(amps[j]) ** 2)
                    )
                )
                dephase = math.exp(
                    -0.25 * nbar * eta * (1.0 - eta) * abs(amps[i] - amps[j]) ** 2
                )
                mat[i, j] = math.sqrt(probs[i] * probs[j]) * gram * dephase
    elif method == "quadrature":
        if nbar == 0.0:
            return alice_reduced_state(constellation, model, method="closed-form")
        if quadrature_nodes < 80:
            raise ValueError("quadrature path needs at least 80 nodes per axis")
        nodes, weights = np.polynomial.hermite.hermgauss(quadrature_nodes)
        bx, by = np.meshgrid(nodes, nodes, indexing="ij")
        beta = math.sqrt(nbar) * (bx + 1j * by)
        w2 = np.outer(weights, weights) / math.pi
        root_eta, root_loss = math.sqrt(eta), math.sqrt(1.0 - eta)
        for i in range(n):
            for j in range(n):
                left = root_eta * amps[j] + root_loss * beta
                right = root_eta * amps[i] + root_loss * beta
                overlap = _coherent_overlap(left, right)
                val = np.sum(w2 * overlap)
                if not np.isfinite(val):
                    raise ArithmeticError(
                        f"quadrature for reduced-state entry ({i}, {j}) diverged"
                    )
                mat[i, j] = math.sqrt(probs[i] * probs[j]) * val
    else:
        raise ValueError(f"unknown method {method!r}")
    return AliceReducedState(matrix=hermitize(mat), provenance=method)


def effective_amplitude(alpha_x: complex, model: TrustedSourceModel) -> complex:
    """Mean amplitude after the source beam splitter: sqrt(eta_s) alpha_x.

    The thermal ancilla contributes no mean (its amplitude distribution is
    centered), so the result does not depend on nbar.
    """
    return math.sqrt(model.eta_s) * alpha_x


@dataclass(frozen=True)
class KeyMapRegions:
    """Angular key-map sectors with a central discard disk of radius delta_a.

    Sector z collects arg(y) in [(2z-1) pi/4, (2z+1) pi/4); outcomes with
    |y| < delta_a map to the discard symbol.
    """

    delta_a: float = 0.0

    def __post_init__(self):
        if self.delta_a < 0:
            raise ValueError(f"postselection radius must be >= 0, got {self.delta_a}")

    @property
    def sector_centers(self) -> tuple[float, float, float, float]:
        return (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)


_HALF_SECTOR = math.pi / 4


def key_map(y: complex, regions: KeyMapRegions) -> int:
    """Map a heterodyne outcome to {0, 1, 2, 3} or DISCARD.

    Boundary ties are deterministic: |y| exactly delta_a passes, an angle exactly
    on a sector edge goes to the lower-indexed adjacent sector.
    """
    if abs(y) < regions.delta_a:
        return DISCARD
    ang = math.atan2(y.imag, y.real)
    shifted = (ang + _HALF_SECTOR) / (2 * _HALF_SECTOR)
    z = int(math.floor(shifted)) % 4
    if shifted == math.floor(shifted):  # exactly on an edge
        z_other = (z - 1) % 4
        z = min(z, z_other)
    return z


def kraus_operator(region_ops: "RegionOperatorSet", dim_a: int = 4) -> np.ndarray:
    """K = sum_z |z>_R (x) I_A (x) sqrt(R_z), mapping A(x)B to R(x)A(x)B."""
    sqrts = [psd_sqrt(r) for r in region_ops.sectors]
    dim_b = sqrts[0].shape[0]
    dim_in = dim_a * dim_b
    n_key = len(sqrts)
    k = np.zeros((n_key * dim_in, dim_in), dtype=complex)
    ident_a = np.eye(dim_a)
    for z, root in enumerate(sqrts):
        k[z * dim_in : (z + 1) * dim_in, :] = np.kron(ident_a, root)
    return k


def kraus_map_G(
    rho: np.ndarray, region_ops: "RegionOperatorSet", dim_a: int = 4
) -> np.ndarray:
    """Post-processing map K rho K^dag; trace gives the postselection pass weight."""
    k = kraus_operator(region_ops, dim_a=dim_a)
    if rho.shape[0] != k.shape[1]:
        raise ValueError(
            f"state dimension {rho.shape[0]} does not match A(x)B dimension {k.shape[1]}"
        )
    return k @ rho @ k.conj().T


def pinching_Z(sigma: np.ndarray, n_key: int = 4) -> np.ndarray:
    """Zero every off-diagonal key-register block; trace-preserving and idempotent."""
    dim = sigma.shape[0]
    if dim % n_key:
        raise ValueError(f"dimension {dim} is not divisible by {n_key} key blocks")
    block = dim // n_key
    out = np.zeros_like(sigma)
    for j in range(n_key):
        sl = slice(j * block, (j + 1) * block)
        out[sl, sl] = sigma[sl, sl]
    return out
