"""Security parameters: Eve's guessing error, thresholds, failure bounds, L sizing.

The bounds hold only against individual and sequential attacks. Coherent or
collective attacks are outside what these expressions cover.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import NoSecurityGap, ValidationError

# QBER at which the (1 - 6e) term of the beam-splitting branch reaches zero
MAX_QBER = 1.0 / 6.0

BEAM_SPLITTING = "beam_splitting"
SEQUENTIAL = "sequential"
OVERRIDE = "override"


@dataclass(frozen=True)
class SecurityInputs:
    mu: float
    T: float
    e: float
    p_e_override: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValidationError(f"mu must be in (0, 1), got {self.mu}")
        if not 0 < self.T <= 1:
            raise ValidationError(f"T must be in (0, 1], got {self.T}")
        if not 0 <= self.e < MAX_QBER:
            raise ValidationError(
                f"QBER outside Eq.(1) validity: e={self.e} must be in [0, 1/6)"
            )
        if self.p_e_override is not None and not 0 <= self.p_e_override <= 1:
            raise ValidationError(f"p_e_override must be in [0, 1], got {self.p_e_override}")


@dataclass(frozen=True)
class EveErrorEstimate:
    """Eve's per-bit guessing error with its provenance.

    ``formula_value`` is always the closed-form evaluation (after clamping), so
    the closed-form value and an override can be reported side by side.
    """

    p_e: float
    source: str  # "formula-evaluated" or "externally supplied"
    formula_value: float
    formula_raw: float
    branch: str
    beam_splitting_term: float
    sequential_term: float
    depth: float
    clamped: bool

    @property
    def discrepancy(self) -> bool:
        return self.source != "formula-evaluated" and not math.isclose(
            self.p_e, self.formula_value, rel_tol=1e-9, abs_tol=1e-12
        )


@dataclass(frozen=True)
class Thresholds:
    g: float
    s_a: float
    s_v: float


@dataclass(frozen=True)
class Bounds:
    honest_abort: float
    repudiation: float
    forge: float

    @property
    def worst(self) -> float:
        return max(self.honest_abort, self.repudiation, self.forge)


@dataclass(frozen=True)
class SecurityParams:
    inputs: SecurityInputs
    eve: EveErrorEstimate
    thresholds: Thresholds
    epsilon: float
    L: int
    k: int
    bounds: Bounds

    @property
    def P_e(self) -> float:
        return self.eve.p_e


def collision_depth(mu: float, T: float) -> float:
    """``log_mu(T) + 1``."""
    if mu == 1:
        raise ValidationError("degenerate logarithm base: mu = 1")
    if not (mu > 0 and 0 < T <= 1):
        raise ValidationError(f"collision depth needs mu > 0 and T in (0, 1], got {mu}, {T}")
    return math.log(T) / math.log(mu) + 1.0


def eve_error_estimate(inputs: SecurityInputs) -> EveErrorEstimate:
    mu, T, e = inputs.mu, inputs.T, inputs.e
    d = collision_depth(mu, T)
    split = 2.0 * mu * (1.0 - T)
    beam = split + (1.0 - split) * (1.0 - math.exp(-0.5 * (1.0 - 6.0 * e) ** 2))
    seq = 2.0 * d * e + 0.5 * (1.0 - 2.0 * d * e)
    branch = BEAM_SPLITTING if beam >= seq else SEQUENTIAL
    raw = 1.0 - max(beam, seq)
    value = min(max(raw, 0.0), 0.5)
    if inputs.p_e_override is not None:
        p_e, source = float(inputs.p_e_override), "externally supplied"
    else:
        p_e, source = value, "formula-evaluated"
    return EveErrorEstimate(
        p_e=p_e,
        source=source,
        formula_value=value,
        formula_raw=raw,
        branch=branch,
        beam_splitting_term=beam,
        sequential_term=seq,
        depth=d,
        clamped=value != raw,
    )


def eve_error_probability(inputs: SecurityInputs) -> float:
    """Eve's probability of guessing a key bit wrongly.

    Raises :class:`NoSecurityGap` when the result does not exceed the QBER.
    """
    est = eve_error_estimate(inputs)
    if est.p_e <= inputs.e:
        raise NoSecurityGap(inputs.e, est.p_e)
    return est.p_e


def thresholds(e: float, P_e: float) -> Thresholds:
    """Split the gap ``g = P_e - e`` into quartiles: ``s_a = e + g/4``, ``s_v = e + 3g/4``."""
    g = P_e - e
    if not g > 0:
        raise NoSecurityGap(e, P_e)
    return Thresholds(g=g, s_a=e + g / 4.0, s_v=e + 3.0 * g / 4.0)


def _check_length(L: int) -> None:
    if L < 1:
        raise ValidationError(f"L must be >= 1, got {L}")


def honest_abort_bound(L: int, s_a: float, e: float) -> float:
    """``2 exp(-(s_a - e)^2 L)``, unclamped."""
    _check_length(L)
    if s_a < e:
        raise ValidationError("honest abort bound needs s_a >= e")
    return 2.0 * math.exp(-((s_a - e) ** 2) * L)


def repudiation_bound(L: int, s_a: float, s_v: float) -> float:
    """``2 exp(-((s_v - s_a)/2)^2 L)``, unclamped."""
    _check_length(L)
    if s_v < s_a:
        raise ValidationError("repudiation bound needs s_v >= s_a")
    return 2.0 * math.exp(-(((s_v - s_a) / 2.0) ** 2) * L)


def forge_bound(L: int, s_v: float, P_e: float) -> float:
    """``exp(-(P_e - s_v)^2 L)``, unclamped."""
    _check_length(L)
    if P_e < s_v:
        raise ValidationError("forging bound undefined: s_v exceeds P_e")
    return math.exp(-((P_e - s_v) ** 2) * L)


def evaluate_bounds(L: int, e: float, P_e: float, th: Thresholds) -> Bounds:
    return Bounds(
        honest_abort=honest_abort_bound(L, th.s_a, e),
        repudiation=repudiation_bound(L, th.s_a, th.s_v),
        forge=forge_bound(L, th.s_v, P_e),
    )


def required_length(e: float, P_e: float, epsilon: float) -> int:
    """Smallest L with all three failure bounds at or below ``epsilon``.

    Starts from ``ceil(ln(2/eps) / (g/4)^2)`` and then walks to the exact
    boundary with direct bound evaluations.
    """
    if not 0 < epsilon < 1:
        raise ValidationError(f"epsilon must be in (0, 1), got {epsilon}")
    th = thresholds(e, P_e)

    def ok(n: int) -> bool:
        return evaluate_bounds(n, e, P_e, th).worst <= epsilon

    L = max(1, math.ceil(math.log(2.0 / epsilon) / (th.g / 4.0) ** 2))
    while not ok(L):
        L += 1
    while L > 1 and ok(L - 1):
        L -= 1
    return L


def signing_rate(detection_rate: float, L: int, alternating: bool = False) -> float:
    """Signed bits per second: each bit spends L counts for each of m = 0 and m = 1.

    ``alternating`` divides by a further 2 for senders that take turns on the link.
    """
    _check_length(L)
    if not detection_rate > 0:
        raise ValidationError("detection_rate must be positive")
    return detection_rate / (2.0 * L * (2 if alternating else 1))


def signing_capacity(shared_bits: int, L: int, k: int) -> int:
    """Number of one-bit messages one sender's shared string can sign."""
    if L + k < 1:
        raise ValidationError("L + k must be >= 1")
    return int(shared_bits) // (2 * (L + k))


def security_params(
    inputs: SecurityInputs,
    epsilon: float,
    L: Optional[int] = None,
    k: Optional[int] = None,
) -> SecurityParams:
    """Derive thresholds, L (if not given), k (defaults to L) and the bound values."""
    eve = eve_error_estimate(inputs)
    if eve.p_e <= inputs.e:
        raise NoSecurityGap(inputs.e, eve.p_e)
    th = thresholds(inputs.e, eve.p_e)
    if L is None:
        L = required_length(inputs.e, eve.p_e, epsilon)
    if k is None:
        k = L
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    return SecurityParams(
        inputs=inputs,
        eve=eve,
        thresholds=th,
        epsilon=epsilon,
        L=L,
        k=k,
        bounds=evaluate_bounds(L, inputs.e, eve.p_e, th),
    )
