"""Source-noise budget: device parameters to noise variances, trusted/untrusted split.

All noise variances are in shot-noise units with N0 = 1/2 (vacuum quadrature
variance).  The trusted part of the source noise is mapped onto an equivalent
thermal state mixed in on a near-unity beam splitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SHOT_NOISE_VARIANCE = 0.5
DEFAULT_SOURCE_TRANSMITTANCE = 0.9999


@dataclass(frozen=True)
class DeviceParams:
    """Transmitter device parameters.

    modulation_variance: V_M in shot-noise units
    rin: relative laser intensity noise (1/Hz)
    linewidth_hz: laser linewidth
    extinction_db: modulator extinction ratio in dB
    dac_voltage: DAC signal voltage (V); must be > 0 when DAC noise is evaluated
    dac_deviation: DAC voltage deviation (V)
    """

    modulation_variance: float = 0.0
    rin: float = 0.0
    linewidth_hz: float = 0.0
    extinction_db: float = 0.0
    dac_voltage: float = 1.0
    dac_deviation: float = 0.0

    def __post_init__(self):
        for name in (
            "modulation_variance",
            "rin",
            "linewidth_hz",
            "extinction_db",
            "dac_deviation",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class NoiseBudget:
    rin_noise: float
    modulator_noise: float
    dac_noise: float
    trusted_flags: dict[str, bool] = field(
        default_factory=lambda: {"rin": True, "modulator": True, "dac": True}
    )

    @property
    def total(self) -> float:
        return self.rin_noise + self.modulator_noise + self.dac_noise

    @property
    def trusted(self) -> float:
        parts = {
            "rin": self.rin_noise,
            "modulator": self.modulator_noise,
            "dac": self.dac_noise,
        }
        return sum(v for k, v in parts.items() if self.trusted_flags.get(k, True))

    @property
    def untrusted(self) -> float:
        return self.total - self.trusted


@dataclass(frozen=True)
class TrustedSourceModel:
    """Equivalent thermal-coupling model of the trusted source noise.

    nu_s in shot-noise units; the thermal ancilla mean photon number is
    nu_s / ((1 - eta_s) N0).
    """

    nu_s: float
    eta_s: float = DEFAULT_SOURCE_TRANSMITTANCE
    shot_noise: float = SHOT_NOISE_VARIANCE

    def __post_init__(self):
        if not 0.0 < self.eta_s < 1.0:
            raise ValueError(f"eta_s must lie in (0, 1), got {self.eta_s}")
        if self.nu_s < 0:
            raise ValueError(f"nu_s must be >= 0, got {self.nu_s}")
        if self.shot_noise <= 0:
            raise ValueError(f"shot noise variance must be > 0, got {self.shot_noise}")

    @property
    def mean_photons(self) -> float:
        return thermal_photon_number(self.nu_s, self.eta_s, self.shot_noise)


def rin_noise(params: DeviceParams) -> float:
    """Intensity-noise contribution V_M * sqrt(RIN * linewidth)."""
    return params.modulation_variance * (params.rin * params.linewidth_hz) ** 0.5


def modulator_noise(params: DeviceParams) -> float:
    """Finite-extinction contribution V_M * 10^(-d_dB/10)."""
    return params.modulation_variance * 10.0 ** (-params.extinction_db / 10.0)


def dac_noise(params: DeviceParams) -> float:
    """Quantization-error upper bound V_M * [pi r + (pi r)^2 / 2]^2, r = dU/U.

    The bound itself is used as the budget value (conservative direction).
    """
    if params.dac_voltage <= 0:
        raise ValueError("dac_voltage must be > 0")
    import math

    r = params.dac_deviation / params.dac_voltage
    return params.modulation_variance * (math.pi * r + 0.5 * (math.pi * r) ** 2) ** 2


def assemble_budget(
    params: DeviceParams, trusted_flags: dict[str, bool] | None = None
) -> NoiseBudget:
    flags = {"rin": True, "modulator": True, "dac": True}
    if trusted_flags:
        unknown = set(trusted_flags) - set(flags)
        if unknown:
            raise ValueError(f"unknown noise components: {sorted(unknown)}")
        flags.update(trusted_flags)
    return NoiseBudget(
        rin_noise=rin_noise(params),
        modulator_noise=modulator_noise(params),
        dac_noise=dac_noise(params),
        trusted_flags=flags,
    )


def thermal_photon_number(nu_s: float, eta_s: float, shot_noise: float) -> float:
    """Mean photons of the equivalent thermal state: nu_s / ((1 - eta_s) N0)."""
    if not 0.0 < eta_s < 1.0:
        raise ValueError(f"eta_s must lie in (0, 1), got {eta_s}")
    if nu_s < 0:
        raise ValueError(f"nu_s must be >= 0, got {nu_s}")
    if shot_noise <= 0:
        raise ValueError(f"shot noise variance must be > 0, got {shot_noise}")
    return nu_s / ((1.0 - eta_s) * shot_noise)
