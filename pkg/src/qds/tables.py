"""Parameter and sweep tables emitted by the CLI."""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from .channel import expected_detection_rate
from .config import RunConfig
from .errors import NoSecurityGap, ValidationError
from .security import (
    Thresholds,
    eve_error_estimate,
    evaluate_bounds,
    required_length,
    signing_capacity,
    signing_rate,
    thresholds,
)

PARAMS_COLUMNS = [
    "mu", "T", "e", "P_e", "branch", "g", "s_a", "s_v", "epsilon", "L",
    "bound_honest", "bound_repudiation", "bound_forge", "rate_bits_per_s", "capacity",
    "k", "detection_rate_hz", "detection_rate_model_hz", "P_e_formula", "P_e_override",
    "P_e_discrepancy", "provenance",
]

SWEEP_COLUMNS = [
    "variable", "value", "fiber_loss_db", "detection_rate_hz", "e", "P_e", "L",
    "rate_bits_per_s", "time_to_sign_half_bit_s", "feasible", "source", "provenance",
]

SECONDS_PER_YEAR = 365.25 * 24 * 3600

# Earlier demonstrations quoted in the text for comparison, all at epsilon = 1e-4.
REFERENCE_POINTS = [
    {"source": "multiport USE system, 5 m", "time_to_sign_half_bit_s": 8 * SECONDS_PER_YEAR},
    {"source": "short-wavelength USE system, 500 m", "time_to_sign_half_bit_s": 20.0},
    {"source": "CV-QKD free-space link, 1.6 km", "time_to_sign_half_bit_s": 1.0 / 33.0},
]


def _k_for(config: RunConfig, L: int) -> int:
    return L if config.security.k_policy == "equal" else int(config.security.k_policy)


def resolve_thresholds(config: RunConfig, e: float, P_e: float):
    th = thresholds(e, P_e)
    s_a = config.security.s_a_override
    s_v = config.security.s_v_override
    if s_a is None and s_v is None:
        return th
    s_a = th.s_a if s_a is None else s_a
    s_v = th.s_v if s_v is None else s_v
    if s_v > P_e:
        raise ValidationError(f"forging bound undefined: s_v={s_v} exceeds P_e={P_e}")
    if not e <= s_a < s_v:
        raise ValidationError(f"thresholds must satisfy e <= s_a < s_v, got s_a={s_a}, s_v={s_v}")
    return Thresholds(g=th.g, s_a=s_a, s_v=s_v)


def params_rows(config: RunConfig, epsilons: Optional[Sequence[float]] = None) -> List[Dict]:
    """One row per security level: every derived quantity with its provenance.

    Raises the validation errors of the underlying calculations (QBER out of
    range, no security gap).
    """
    inputs = config.security_inputs()
    eve = eve_error_estimate(inputs)
    if eve.p_e <= inputs.e:
        raise NoSecurityGap(inputs.e, eve.p_e)
    th = resolve_thresholds(config, inputs.e, eve.p_e)
    rate_hz = config.detection_rate()
    rows = []
    for eps in epsilons or config.security.epsilon:
        L = config.protocol.L or required_length(inputs.e, eve.p_e, eps)
        k = _k_for(config, L)
        bounds = evaluate_bounds(L, inputs.e, eve.p_e, th)
        rows.append({
            "mu": inputs.mu,
            "T": inputs.T,
            "e": inputs.e,
            "P_e": eve.p_e,
            "branch": eve.branch,
            "g": th.g,
            "s_a": th.s_a,
            "s_v": th.s_v,
            "epsilon": eps,
            "L": L,
            "bound_honest": min(1.0, bounds.honest_abort),
            "bound_repudiation": min(1.0, bounds.repudiation),
            "bound_forge": min(1.0, bounds.forge),
            "rate_bits_per_s": signing_rate(rate_hz, L, config.security.alternating_rate),
            "capacity": signing_capacity(config.measurement.shared_bits, L, k),
            "k": k,
            "detection_rate_hz": rate_hz,
            "detection_rate_model_hz": expected_detection_rate(config.link),
            "P_e_formula": eve.formula_value,
            "P_e_override": inputs.p_e_override,
            "P_e_discrepancy": eve.discrepancy,
            "provenance": "override" if inputs.p_e_override is not None else "formula-evaluated",
        })
    return rows


def params_notes(config: RunConfig, rows: List[Dict]) -> List[str]:
    notes = []
    if rows and rows[0]["P_e_discrepancy"]:
        r = rows[0]
        notes.append(
            f"P_e discrepancy: closed-form evaluation gives {r['P_e_formula']:.6f} "
            f"({r['branch']} branch) but {r['P_e_override']} is in use (externally supplied)"
        )
    measured = config.measurement.detection_rate_hz
    if measured is not None:
        model = expected_detection_rate(config.link)
        notes.append(
            f"detection rate: measured {measured:g} Hz in use; linear link budget gives {model:.1f} Hz "
            f"(ratio {measured / model:.3f})"
        )
    notes.append("bounds cover individual and sequential attacks only")
    return notes


def sweep_rows(
    config: RunConfig,
    variable: str,
    values: Sequence[float],
    epsilon: Optional[float] = None,
    loss_per_km: Optional[float] = None,
    include_references: bool = True,
) -> List[Dict]:
    """Rate versus fibre loss or distance; infeasible points are flagged, not fatal."""
    if variable not in ("fiber_loss_db", "distance_km"):
        raise ValidationError(f"unknown sweep variable {variable!r}")
    if variable == "distance_km" and not (loss_per_km and loss_per_km > 0):
        raise ValidationError("loss_per_km must be > 0 when sweeping distance")
    eps = epsilon if epsilon is not None else config.security.epsilon[0]
    rows = []
    for value in values:
        value = float(value)
        loss = value * loss_per_km if variable == "distance_km" else value
        row = {
            "variable": variable,
            "value": value,
            "fiber_loss_db": loss,
            "source": "this model",
        }
        try:
            link = config.link.replace(fiber_loss_db=loss)
            point = config.replace(link=link)
            inputs = point.security_inputs()
            eve = eve_error_estimate(inputs)
            if eve.p_e <= inputs.e:
                raise NoSecurityGap(inputs.e, eve.p_e)
            L = config.protocol.L or required_length(inputs.e, eve.p_e, eps)
            rate_hz = config.detection_rate(link)
            row.update({
                "detection_rate_hz": rate_hz,
                "e": inputs.e,
                "P_e": eve.p_e,
                "L": L,
                "rate_bits_per_s": signing_rate(rate_hz, L, config.security.alternating_rate),
                "time_to_sign_half_bit_s": L / rate_hz,
                "feasible": True,
                "provenance": "override" if inputs.p_e_override is not None else "formula-evaluated",
            })
        except ValidationError as exc:
            row.update({
                "detection_rate_hz": None, "e": None, "P_e": None, "L": None,
                "rate_bits_per_s": None, "time_to_sign_half_bit_s": None,
                "feasible": False, "provenance": f"infeasible: {exc}",
            })
        rows.append(row)
    if include_references:
        for ref in REFERENCE_POINTS:
            t = ref["time_to_sign_half_bit_s"]
            rows.append({
                "variable": "reference",
                "value": None,
                "fiber_loss_db": None,
                "detection_rate_hz": None,
                "e": None,
                "P_e": None,
                "L": None,
                "rate_bits_per_s": 1.0 / (2.0 * t),
                "time_to_sign_half_bit_s": t,
                "feasible": True,
                "source": ref["source"],
                "provenance": "paper-constant",
            })
    return rows


def parse_range(spec: str) -> np.ndarray:
    """``start:stop:step`` (inclusive of stop) or a comma-separated list."""
    if ":" in spec:
        parts = [float(x) for x in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ValidationError(f"bad range {spec!r}; expected start:stop:step with step > 0")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(n), 12)
    try:
        return np.array([float(x) for x in spec.split(",") if x.strip()])
    except ValueError:
        raise ValidationError(f"bad range {spec!r}") from None
