"""Statistical model of the DPS-QKD link from a sender (Bob or Charlie) to Alice.

Only detection-level statistics are modelled: a linear link budget, dark
counts, and i.i.d. bit flips at the QBER. Interferometers, pulse carving and
detector dead time are not simulated.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from .errors import ValidationError
from .rng import Seed, generator

# JSON key -> dataclass field
_JSON_KEYS = {
    "mu": "mu",
    "fiber_loss_db": "fiber_loss_db",
    "receiver_loss_db": "receiver_loss_db",
    "detector_efficiency": "detector_efficiency",
    "dark_count_rate_hz": "dark_count_rate",
    "clock_rate_hz": "clock_rate",
    "visibility": "visibility",
    "qber_override": "qber_override",
}


@dataclass(frozen=True)
class LinkParams:
    """Physical-layer configuration of one sender-to-Alice link.

    Attributes
    ----------
    mu : float
        Mean photon number per pulse.
    fiber_loss_db, receiver_loss_db : float
        Channel and receiver-optics attenuation in dB.
    detector_efficiency : float
        Detection efficiency in [0, 1].
    dark_count_rate : float
        Dark counts per second.
    clock_rate : float
        Pulses per second.
    visibility : float
        Interferometric visibility in [0, 1]; sets the optical error rate.
    qber_override : float or None
        When set, replaces the modelled QBER.
    """

    mu: float = 0.2
    fiber_loss_db: float = 31.0
    receiver_loss_db: float = 10.0
    detector_efficiency: float = 0.30
    dark_count_rate: float = 100.0
    clock_rate: float = 1e9
    visibility: float = 1.0
    qber_override: Optional[float] = None

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValidationError(f"mu must be >= 0, got {self.mu}")
        if not self.clock_rate > 0:
            raise ValidationError(f"clock_rate must be > 0, got {self.clock_rate}")
        if not self.dark_count_rate >= 0:
            raise ValidationError(
                f"dark_count_rate must be >= 0, got {self.dark_count_rate}"
            )
        if not 0 <= self.detector_efficiency <= 1:
            raise ValidationError(
                f"detector_efficiency must be in [0, 1], got {self.detector_efficiency}"
            )
        if not 0 <= self.visibility <= 1:
            raise ValidationError(f"visibility must be in [0, 1], got {self.visibility}")
        if not (self.fiber_loss_db >= 0 and self.receiver_loss_db >= 0):
            raise ValidationError("losses must be >= 0 dB")
        if self.qber_override is not None and not 0 <= self.qber_override < 1:
            raise ValidationError(
                f"qber_override must be in [0, 1), got {self.qber_override}"
            )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LinkParams":
        unknown = set(data) - set(_JSON_KEYS)
        if unknown:
            raise ValidationError(f"unknown link keys: {sorted(unknown)}")
        return cls(**{_JSON_KEYS[k]: v for k, v in data.items()})

    def to_dict(self) -> dict:
        return {k: getattr(self, attr) for k, attr in _JSON_KEYS.items()}

    def replace(self, **changes) -> "LinkParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ExchangeRecord:
    """Raw key material from one partial (uncorrected) QKD exchange.

    ``positions`` are the indices of the detection events in the original
    exchange; they survive error estimation so later stages can refer to bits
    by their original position.
    """

    sender_bits: np.ndarray
    alice_bits: np.ndarray
    seed: Any = None
    positions: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.sender_bits.shape != self.alice_bits.shape:
            raise ValidationError("sender and alice bit strings differ in length")
        if self.positions is None:
            object.__setattr__(
                self, "positions", np.arange(self.sender_bits.size, dtype=np.int64)
            )
        elif self.positions.shape != self.sender_bits.shape:
            raise ValidationError("positions must align with the bit strings")

    @property
    def length(self) -> int:
        return int(self.sender_bits.size)

    @property
    def mismatches(self) -> int:
        return int(np.count_nonzero(self.sender_bits != self.alice_bits))

    @property
    def empirical_qber(self) -> float:
        return self.mismatches / self.length if self.length else 0.0


def total_transmittance(link: LinkParams, include_detector: bool = True) -> float:
    """End-to-end transmission: channel and receiver loss, optionally times detector efficiency."""
    t = 10.0 ** (-(link.fiber_loss_db + link.receiver_loss_db) / 10.0)
    if include_detector:
        t *= link.detector_efficiency
    return t


def signal_detection_rate(link: LinkParams) -> float:
    return link.clock_rate * link.mu * total_transmittance(link, include_detector=True)


def expected_detection_rate(link: LinkParams) -> float:
    """Linearised detection rate in Hz: signal clicks plus dark counts."""
    return signal_detection_rate(link) + link.dark_count_rate


def expected_qber(link: LinkParams) -> float:
    """QBER from dark counts (random bits) and imperfect visibility.

    ``qber_override`` takes precedence when set.
    """
    if link.qber_override is not None:
        return float(link.qber_override)
    signal = signal_detection_rate(link)
    dark = link.dark_count_rate
    total = signal + dark
    if total <= 0:
        raise ValidationError("no detections: signal and dark count rates are both zero")
    optical_error = (1.0 - link.visibility) / 2.0
    return (0.5 * dark + optical_error * signal) / total


def sample_exchange(link: LinkParams, n_target: int, seed: Seed) -> ExchangeRecord:
    """Simulate a sender transmitting until Alice holds ``n_target`` outcomes.

    Sender bits are uniform; Alice's copy has each bit flipped independently
    with the link's QBER.
    """
    return sample_bsc_exchange(expected_qber(link), n_target, seed)


def sample_bsc_exchange(qber: float, n_target: int, seed: Seed) -> ExchangeRecord:
    if n_target <= 0:
        raise ValidationError(f"n_target must be positive, got {n_target}")
    if not 0 <= qber <= 0.5:
        raise ValidationError(f"QBER must be in [0, 0.5], got {qber}")
    rng = generator(seed, "exchange")
    sender = rng.integers(0, 2, size=n_target, dtype=np.uint8)
    flips = (rng.random(n_target) < qber).astype(np.uint8)
    return ExchangeRecord(sender_bits=sender, alice_bits=sender ^ flips, seed=seed)


def loss_for_distance(distance_km: float, loss_per_km: float) -> float:
    if loss_per_km <= 0:
        raise ValidationError("loss_per_km must be positive")
    return distance_km * loss_per_km


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)
