"""Simulated Gaussian channel: conditional states, outcome statistics, error-correction cost.

The quantum channel is phase-invariant with transmittance 10^(-attenuation L/10)
and excess noise xi (source-referred, shot-noise units).  Untrusted noise is
folded into the channel: an untrusted source adds nu_s to xi with the thermal
coupling removed; an untrusted detector becomes part of the channel (total
transmittance eta_t eta_d, electrical noise referred back as nu_el/(eta_t eta_d))
and detection turns ideal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .detector import DetectorParams, IDEAL_DETECTOR
from .fock import displacement, hermitize, thermal_state
from .noise import TrustedSourceModel
from .protocol import Constellation, build_constellation, effective_amplitude
from .scenario import Scenario

DISCARD_COLUMN = 4  # joint-distribution column index of the discard symbol


def transmittance(length_km: float, attenuation_db_per_km: float = 0.2) -> float:
    return 10.0 ** (-attenuation_db_per_km * length_km / 10.0)


@dataclass(frozen=True)
class EffectiveChannel:
    """Scenario resolved into the parameters the statistics formulas consume."""

    constellation: Constellation
    source: TrustedSourceModel
    detector: DetectorParams
    channel_transmittance: float  # includes an untrusted detector's efficiency
    xi: float  # includes any untrusted noise referred to the source side
    delta_a: float
    beta: float

    @cached_property
    def effective_amplitudes(self) -> tuple[complex, ...]:
        return tuple(
            effective_amplitude(a, self.source) for a in self.constellation.amplitudes
        )

    @cached_property
    def outcome_means(self) -> tuple[complex, ...]:
        scale = math.sqrt(
            self.detector.eta_d * self.channel_transmittance * self.source.eta_s
        )
        return tuple(scale * a for a in self.effective_amplitudes)

    @property
    def outcome_variance(self) -> float:
        """Total complex variance of the heterodyne outcome (per the density formula)."""
        return (
            1.0
            + 0.5
            * self.detector.eta_d
            * self.channel_transmittance
            * self.source.eta_s
            * self.xi
            + self.detector.nu_el
        )

    @property
    def conditional_thermal_occupation(self) -> float:
        """Mean photons of the pre-detection conditional state."""
        return 0.5 * self.channel_transmittance * self.source.eta_s * self.xi

    def conditional_mean(self, x: int) -> complex:
        """Pre-detection displacement of the conditional state."""
        return (
            math.sqrt(self.channel_transmittance * self.source.eta_s)
            * self.effective_amplitudes[x]
        )


def resolve(scenario: Scenario) -> EffectiveChannel:
    trusted_nu, untrusted_nu = scenario.resolved_source_noise()
    xi = scenario.channel.excess_noise + untrusted_nu
    eta_t = scenario.channel.transmittance
    detector = scenario.detector
    if not scenario.detector_trusted and not detector.is_ideal:
        eta_total = eta_t * detector.eta_d
        xi += detector.nu_el / eta_total
        eta_t = eta_total
        detector = IDEAL_DETECTOR
    source = TrustedSourceModel(
        nu_s=trusted_nu, eta_s=scenario.eta_s, shot_noise=scenario.shot_noise
    )
    return EffectiveChannel(
        constellation=build_constellation(scenario.alpha),
        source=source,
        detector=detector,
        channel_transmittance=eta_t,
        xi=xi,
        delta_a=scenario.delta_a,
        beta=scenario.beta,
    )


def outcome_density(y: complex, x: int, eff: EffectiveChannel) -> float:
    """P(y|x): complex Gaussian with the effective mean and total variance."""
    v = eff.outcome_variance
    return math.exp(-abs(y - eff.outcome_means[x]) ** 2 / v) / (math.pi * v)


def constraint_expectations(x: int, eff: EffectiveChannel) -> tuple[float, float, float, float]:
    """Targets (<F_Q>, <F_P>, <S_Q>, <S_P>) for the conditional state on x."""
    m = eff.outcome_means[x]
    v = eff.outcome_variance
    return (
        math.sqrt(2.0) * m.real,
        math.sqrt(2.0) * m.imag,
        2.0 * m.real**2 + v,
        2.0 * m.imag**2 + v,
    )


def conditional_state(x: int, eff: EffectiveChannel, n_max: int) -> np.ndarray:
    """Pre-detection conditional state: displaced thermal in the Fock basis."""
    gamma = eff.conditional_mean(x)
    d = displacement(gamma, n_max)
    th = thermal_state(eff.conditional_thermal_occupation, n_max)
    return hermitize(d @ th @ d.conj().T)


def _sector_probability(
    mean: complex, v: float, sector: int, delta_a: float, quad_tol: float = 1e-12
) -> float:
    """Gaussian mass of one key-map sector, radial part in closed form.

    Writing y = r e^{i phi}, the radial integral over [delta_a, inf) of
    r exp(-|y - m|^2 / v) has an erfc closed form; only the angle is quadratured.
    """
    center = sector * math.pi / 2

    def integrand(phi: float) -> float:
        b = (mean.conjugate() * np.exp(1j * phi)).real
        c2 = abs(mean) ** 2 - b * b
        t = (delta_a - b) / math.sqrt(v)
        radial = 0.5 * v * math.exp(-t * t) + b * 0.5 * math.sqrt(
            math.pi * v
        ) * erfc(t)
        return math.exp(-c2 / v) * radial

    val, err = integrate.quad(
        integrand,
        center - math.pi / 4,
        center + math.pi / 4,
        epsabs=quad_tol,
        epsrel=quad_tol,
        limit=200,
    )
    if err > 1e-9:
        raise ArithmeticError(
            f"sector probability quadrature did not converge (err {err:.2e})"
        )
    return val / (math.pi * v)


def _disk_probability(mean: complex, v: float, delta_a: float) -> float:
    """Gaussian mass of the discard disk |y| < delta_a."""
    if delta_a == 0.0:
        return 0.0

    def integrand(phi: float) -> float:
        b = (mean.conjugate() * np.exp(1j * phi)).real
        c2 = abs(mean) ** 2 - b * b
        t0 = -b / math.sqrt(v)
        t1 = (delta_a - b) / math.sqrt(v)
        radial = 0.5 * v * (math.exp(-t0 * t0) - math.exp(-t1 * t1)) + b * 0.5 * math.sqrt(
            math.pi * v
        ) * (erfc(t0) - erfc(t1))
        return math.exp(-c2 / v) * radial

    val, _ = integrate.quad(
        integrand, -math.pi, math.pi, epsabs=1e-12, epsrel=1e-12, limit=200
    )
    return val / (math.pi * v)


@dataclass(frozen=True)
class JointDistribution:
    """p(x, z) for x in 0..3 and z in 0..3 plus the discard column."""

    table: np.ndarray  # shape (4, 5)

    def __post_init__(self):
        if self.table.shape != (4, 5):
            raise ValueError("joint distribution must be 4x5")
        if self.table.min() < -1e-12:
            raise ValueError("joint distribution has negative entries")
        if abs(self.table.sum() - 1.0) > 1e-9:
            raise ValueError(f"joint distribution sums to {self.table.sum():.12f}")

    @property
    def p_pass(self) -> float:
        return float(1.0 - self.table[:, DISCARD_COLUMN].sum())

    def conditional_on_pass(self) -> np.ndarray:
        kept = self.table[:, :DISCARD_COLUMN]
        return kept / kept.sum()


def joint_distribution(eff: EffectiveChannel, n_max: int | None = None) -> JointDistribution:
    """Key-map statistics p(x, z) = p_x * integral of P(y|x) over sector z."""
    v = eff.outcome_variance
    table = np.zeros((4, 5))
    for x in range(4):
        m = eff.outcome_means[x]
        for z in range(4):
            table[x, z] = 0.25 * _sector_probability(m, v, z, eff.delta_a)
        table[x, DISCARD_COLUMN] = 0.25 * _disk_probability(m, v, eff.delta_a)
    return JointDistribution(table=table)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


@dataclass(frozen=True)
class ECReport:
    p_pass: float
    delta_ec: float
    h_z: float
    i_xz: float
    beta: float


def ec_cost(
    dist: JointDistribution, beta: float, include_discard: bool = False
) -> ECReport:
    """Error-correction cost H(Z) - beta I(X;Z).

    By default entropies are taken on the distribution conditioned on passing
    postselection (reverse reconciliation runs on kept rounds only); the
    include_discard variant keeps the discard symbol for sensitivity checks.
    """
    if dist.p_pass <= 0:
        raise ValueError("no probability mass passes postselection")
    if include_discard:
        joint = dist.table / dist.table.sum()
    else:
        joint = dist.conditional_on_pass()
    p_z = joint.sum(axis=0)
    p_x = joint.sum(axis=1)
    h_z = _entropy(p_z)
    i_xz = h_z + _entropy(p_x) - _entropy(joint.ravel())
    return ECReport(
        p_pass=dist.p_pass,
        delta_ec=h_z - beta * i_xz,
        h_z=h_z,
        i_xz=i_xz,
        beta=beta,
    )
