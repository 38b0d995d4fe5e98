"""Run configuration loaded from JSON.

Example (the shipped ``configs/paper.json``)::

    {
      "link": {"mu": 0.2, "fiber_loss_db": 31, "receiver_loss_db": 10,
               "detector_efficiency": 0.3, "dark_count_rate_hz": 100,
               "clock_rate_hz": 1e9, "visibility": 1.0, "qber_override": 0.0108},
      "measurement": {"detection_rate_hz": 10000, "shared_bits": 2000000},
      "security": {"epsilon": [1e-4, 1e-10], "p_e_override": 0.262},
      "protocol": {"message_bits": [0]},
      "simulation": {"trials": 100000, "seed": 2016}
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple, Union

from .channel import LinkParams, expected_detection_rate, expected_qber, total_transmittance
from .errors import ValidationError
from .security import SecurityInputs


@dataclass(frozen=True)
class MeasurementConfig:
    # Measured values that take precedence over the link model where set.
    detection_rate_hz: Optional[float] = None
    shared_bits: int = 2_000_000


@dataclass(frozen=True)
class SecurityConfig:
    epsilon: Tuple[float, ...] = (1e-10,)
    p_e_override: Optional[float] = None
    k_policy: Union[str, int] = "equal"
    include_detector: bool = True
    alternating_rate: bool = False
    s_a_override: Optional[float] = None
    s_v_override: Optional[float] = None

    def __post_init__(self):
        for eps in self.epsilon:
            if not 0 < eps < 1:
                raise ValidationError(f"security.epsilon: {eps} not in (0, 1)")
        if self.k_policy != "equal" and not (isinstance(self.k_policy, int) and self.k_policy >= 1):
            raise ValidationError("security.k_policy must be 'equal' or a positive integer")


@dataclass(frozen=True)
class ProtocolConfig:
    L: Optional[int] = None
    message_bits: Tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.L is not None and self.L < 2:
            raise ValidationError("protocol.L must be >= 2")
        if any(b not in (0, 1) for b in self.message_bits):
            raise ValidationError("protocol.message_bits must contain only 0 and 1")


@dataclass(frozen=True)
class SimulationConfig:
    trials: int = 100_000
    seed: Optional[int] = None
    workers: int = 1
    sessions: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("simulation.trials must be >= 1")
        if self.seed is not None and self.seed < 0:
            raise ValidationError("simulation.seed must be a non-negative integer")
        if self.sessions < 1:
            raise ValidationError("simulation.sessions must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    format: str = "json"
    path: Optional[str] = None

    def __post_init__(self):
        if self.format not in ("json", "csv"):
            raise ValidationError("output.format must be 'json' or 'csv'")


@dataclass(frozen=True)
class RunConfig:
    link: LinkParams = field(default_factory=LinkParams)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    security: SecurityConfig = field(default_factory=SecurityConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def T(self) -> float:
        return total_transmittance(self.link, self.security.include_detector)

    @property
    def e(self) -> float:
        return expected_qber(self.link)

    def security_inputs(self) -> SecurityInputs:
        return SecurityInputs(mu=self.link.mu, T=self.T, e=self.e, p_e_override=self.security.p_e_override)

    def detection_rate(self, link: Optional[LinkParams] = None) -> float:
        """Detection rate at ``link`` (default: the configured link).

        A measured rate is rescaled by the modelled rate ratio, so it is reproduced
        exactly at the configured operating point and follows the link budget elsewhere.
        """
        link = link or self.link
        model = expected_detection_rate(link)
        measured = self.measurement.detection_rate_hz
        if measured is None:
            return model
        return measured * model / expected_detection_rate(self.link)

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


def _section(cls, data: Mapping[str, Any], name: str):
    if not isinstance(data, Mapping):
        raise ValidationError(f"{name}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"{name}: unknown keys {sorted(unknown)}")
    values = dict(data)
    for key, value in values.items():
        if isinstance(value, list):
            values[key] = tuple(value)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValidationError(f"{name}: {exc}") from None


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    unknown = set(data) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ValidationError(f"unknown config sections {sorted(unknown)}")
    security = dict(data.get("security", {}))
    if "epsilon" in security and not isinstance(security["epsilon"], (list, tuple)):
        security["epsilon"] = [security["epsilon"]]
    try:
        link = LinkParams.from_dict(data.get("link", {}))
    except TypeError as exc:
        raise ValidationError(f"link: {exc}") from None
    return RunConfig(
        link=link,
        measurement=_section(MeasurementConfig, data.get("measurement", {}), "measurement"),
        security=_section(SecurityConfig, security, "security"),
        protocol=_section(ProtocolConfig, data.get("protocol", {}), "protocol"),
        simulation=_section(SimulationConfig, data.get("simulation", {}), "simulation"),
        output=_section(OutputConfig, data.get("output", {}), "output"),
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data)


def field_trial_config() -> RunConfig:
    """Operating point of the 90 km installed-fibre demonstration."""
    return RunConfig(
        link=LinkParams(
            mu=0.2,
            fiber_loss_db=31.0,
            receiver_loss_db=10.0,
            detector_efficiency=0.30,
            dark_count_rate=100.0,
            clock_rate=1e9,
            visibility=1.0,
            qber_override=0.0108,
        ),
        measurement=MeasurementConfig(detection_rate_hz=1e4, shared_bits=2_000_000),
        security=SecurityConfig(epsilon=(1e-4, 1e-10), p_e_override=0.262),
        simulation=SimulationConfig(trials=100_000, seed=2016),
    )
