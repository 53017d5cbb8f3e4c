"""Scenario description and strict TOML config parsing.

A scenario is the full experiment description: constellation amplitude, channel,
source-noise model with trust flags, detector, postselection radius,
reconciliation efficiency, and numerics settings.  Unknown config keys are
errors, not warnings: a typo in a physics parameter must never pass silently.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .detector import DetectorParams
from .noise import (
    DEFAULT_SOURCE_TRANSMITTANCE,
    SHOT_NOISE_VARIANCE,
    DeviceParams,
    TrustedSourceModel,
    assemble_budget,
)


class ConfigError(ValueError):
    """Raised on schema violations; message names every offending field."""


@dataclass(frozen=True)
class ChannelParams:
    length_km: float
    excess_noise: float = 0.0
    attenuation_db_per_km: float = 0.2

    def __post_init__(self):
        if self.length_km < 0:
            raise ConfigError(f"channel.length_km must be >= 0, got {self.length_km}")
        if self.excess_noise < 0:
            raise ConfigError(
                f"channel.excess_noise must be >= 0, got {self.excess_noise}"
            )
        if self.attenuation_db_per_km < 0:
            raise ConfigError("channel.attenuation_db_per_km must be >= 0")

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.attenuation_db_per_km * self.length_km / 10.0)


@dataclass(frozen=True)
class Numerics:
    n_cutoff: int = 12
    epsilon: float = 1e-9
    sdp_feas_tol: float = 1e-8
    sdp_gap_tol: float = 1e-8
    fw_max_iterations: int = 300
    fw_improvement_tol: float = 1e-6
    fw_gap_tol: float = 1e-6
    seed: int = 1234

    def __post_init__(self):
        if self.n_cutoff < 1:
            raise ConfigError(f"numerics.n_cutoff must be >= 1, got {self.n_cutoff}")
        if self.epsilon <= 0:
            raise ConfigError("numerics.epsilon must be > 0")


@dataclass(frozen=True)
class Scenario:
    alpha: float
    channel: ChannelParams
    nu_s: float = 0.0
    source_trusted: bool = True
    eta_s: float = DEFAULT_SOURCE_TRANSMITTANCE
    shot_noise: float = SHOT_NOISE_VARIANCE
    device: DeviceParams | None = None
    device_untrusted_components: tuple[str, ...] = ()
    detector: DetectorParams = field(default_factory=DetectorParams)
    detector_trusted: bool = True
    delta_a: float = 0.0
    beta: float = 0.956
    numerics: Numerics = field(default_factory=Numerics)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"constellation.alpha must be > 0, got {self.alpha}")
        if self.nu_s < 0:
            raise ConfigError(f"source.nu_s must be >= 0, got {self.nu_s}")
        if not 0.0 < self.eta_s < 1.0:
            raise ConfigError(f"source.eta_s must lie in (0, 1), got {self.eta_s}")
        if self.delta_a < 0:
            raise ConfigError(
                f"postselection.delta_a must be >= 0, got {self.delta_a}"
            )
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"reconciliation.beta must lie in (0, 1], got {self.beta}")

    def resolved_source_noise(self) -> tuple[float, float]:
        """(nu_s from direct value or device budget, untrusted residual for xi)."""
        if self.device is not None:
            flags = {name: True for name in ("rin", "modulator", "dac")}
            for name in self.device_untrusted_components:
                if name not in flags:
                    raise ConfigError(f"unknown source noise component {name!r}")
                flags[name] = False
            budget = assemble_budget(self.device, flags)
            if self.source_trusted:
                return budget.trusted, budget.untrusted
            return 0.0, budget.total
        if self.source_trusted:
            return self.nu_s, 0.0
        return 0.0, self.nu_s

    def source_model(self) -> TrustedSourceModel:
        trusted_nu, _ = self.resolved_source_noise()
        return TrustedSourceModel(
            nu_s=trusted_nu, eta_s=self.eta_s, shot_noise=self.shot_noise
        )

    def with_values(self, **updates) -> "Scenario":
        """Functional update; axis names length_km/excess_noise go to the channel."""
        channel_fields = {"length_km", "excess_noise", "attenuation_db_per_km"}
        ch_updates = {k: v for k, v in updates.items() if k in channel_fields}
        rest = {k: v for k, v in updates.items() if k not in channel_fields}
        scen = self
        if ch_updates:
            scen = replace(scen, channel=replace(scen.channel, **ch_updates))
        if rest:
            scen = replace(scen, **rest)
        return scen

    def fingerprint(self) -> str:
        """Deterministic short hash over every physics and numerics field."""
        blob = repr(sorted(asdict(self).items())).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


SWEEP_AXES = ("length_km", "alpha", "delta_a", "nu_s", "excess_noise")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(
                f"sweep.axis must be one of {SWEEP_AXES}, got {self.axis!r}"
            )
        if not self.values:
            raise ConfigError("sweep.values must be nonempty")

    def scenarios(self, base: Scenario):
        for v in self.values:
            yield v, base.with_values(**{self.axis: v})


_SCHEMA: dict[str, dict[str, type | tuple[type, ...]]] = {
    "constellation": {"alpha": (int, float)},
    "channel": {
        "length_km": (int, float),
        "excess_noise": (int, float),
        "attenuation_db_per_km": (int, float),
    },
    "source": {
        "nu_s": (int, float),
        "trusted": bool,
        "eta_s": (int, float),
        "shot_noise": (int, float),
    },
    "source.device": {
        "modulation_variance": (int, float),
        "rin": (int, float),
        "linewidth_hz": (int, float),
        "extinction_db": (int, float),
        "dac_voltage": (int, float),
        "dac_deviation": (int, float),
        "untrusted_components": list,
    },
    "detector": {"eta_d": (int, float), "nu_el": (int, float), "trusted": bool},
    "postselection": {"delta_a": (int, float)},
    "reconciliation": {"beta": (int, float)},
    "numerics": {
        "n_cutoff": int,
        "epsilon": (int, float),
        "sdp_feas_tol": (int, float),
        "sdp_gap_tol": (int, float),
        "fw_max_iterations": int,
        "fw_improvement_tol": (int, float),
        "fw_gap_tol": (int, float),
        "seed": int,
    },
    "sweep": {"axis": str, "values": list, "start": (int, float), "stop": (int, float), "step": (int, float)},
}


def _check_section(name: str, table: dict, errors: list[str]):
    schema = _SCHEMA[name]
    for key, value in table.items():
        if name == "source" and key == "device":
            if not isinstance(value, dict):
                errors.append("source.device must be a table")
                continue
            _check_section("source.device", value, errors)
            continue
        if key not in schema:
            errors.append(f"unknown key {name}.{key}")
            continue
        expected = schema[key]
        if expected is bool:
            if not isinstance(value, bool):
                errors.append(f"{name}.{key} must be a boolean")
        elif expected is int:
            if isinstance(value, bool) or not isinstance(value, int):
                errors.append(f"{name}.{key} must be an integer")
        elif not isinstance(value, expected) or isinstance(value, bool):
            errors.append(f"{name}.{key} has the wrong type")


def parse_config(text: str) -> tuple[Scenario, SweepSpec | None]:
    """Parse and validate a scenario config; collects every schema error."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    errors: list[str] = []
    for section in data:
        if section not in _SCHEMA or section == "source.device":
            errors.append(f"unknown section [{section}]")
    for section, table in data.items():
        if section in _SCHEMA and section != "source.device":
            if not isinstance(table, dict):
                errors.append(f"[{section}] must be a table")
            else:
                _check_section(section, table, errors)
    if "constellation" not in data or "alpha" not in data.get("constellation", {}):
        errors.append("missing required key constellation.alpha")
    if "channel" not in data or "length_km" not in data.get("channel", {}):
        errors.append("missing required key channel.length_km")
    if errors:
        raise ConfigError("; ".join(errors))

    source = dict(data.get("source", {}))
    device_table = source.pop("device", None)
    device = None
    untrusted_components: tuple[str, ...] = ()
    if device_table is not None:
        if "nu_s" in source:
            raise ConfigError("source.nu_s and source.device are mutually exclusive")
        device_kwargs = dict(device_table)
        untrusted_components = tuple(device_kwargs.pop("untrusted_components", ()))
        device = DeviceParams(**device_kwargs)

    detector_table = dict(data.get("detector", {}))
    detector_trusted = detector_table.pop("trusted", True)
    try:
        detector = DetectorParams(**detector_table)
    except ValueError as exc:
        raise ConfigError(f"detector: {exc}") from exc

    sweep = None
    if "sweep" in data:
        sweep_table = dict(data["sweep"])
        axis = sweep_table.pop("axis", None)
        if axis is None:
            raise ConfigError("sweep.axis is required in a [sweep] section")
        if "values" in sweep_table:
            values = tuple(float(v) for v in sweep_table.pop("values"))
            if sweep_table:
                raise ConfigError("sweep.values excludes start/stop/step")
        else:
            try:
                start = sweep_table.pop("start")
                stop = sweep_table.pop("stop")
                step = sweep_table.pop("step")
            except KeyError as exc:
                raise ConfigError(f"sweep is missing {exc.args[0]}") from exc
            if step <= 0 or stop < start:
                raise ConfigError("sweep range must have step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = tuple(start + i * step for i in range(count))
        sweep = SweepSpec(axis=axis, values=values)

    scenario = Scenario(
        alpha=float(data["constellation"]["alpha"]),
        channel=ChannelParams(**data["channel"]),
        nu_s=float(source.pop("nu_s", 0.0)),
        source_trusted=source.pop("trusted", True),
        eta_s=float(source.pop("eta_s", DEFAULT_SOURCE_TRANSMITTANCE)),
        shot_noise=float(source.pop("shot_noise", SHOT_NOISE_VARIANCE)),
        device=device,
        device_untrusted_components=untrusted_components,
        detector=detector,
        detector_trusted=detector_trusted,
        delta_a=float(data.get("postselection", {}).get("delta_a", 0.0)),
        beta=float(data.get("reconciliation", {}).get("beta", 0.956)),
        numerics=Numerics(**data.get("numerics", {})),
    )
    return scenario, sweep


def load_config(path: str | Path) -> tuple[Scenario, SweepSpec | None]:
    return parse_config(Path(path).read_text())
