"""Closed-form dependability formulas: availability, TMR, standby redundancy,
cold-spare repair with s spares, and the pipeline-level composite with a
fault-coverage factor.

All reliabilities are dimensionless survival probabilities in [0, 1]; failure
rates are per hour and bridge to reliabilities through the constant-rate
exponential lifetime model R(t) = exp(-lambda * t).
"""
from __future__ import annotations

import math


def _check_unit(name: str, value: float) -> float:
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name}={value} outside [0, 1]")
    return float(value)


def availability(mttf: float, mttr: float) -> float:
    """Inherent availability MTTF / (MTTF + MTTR).

    MTBF for a repairable system is the sum MTTF + MTTR, so this is also
    MTTF / MTBF.
    """
    if not math.isfinite(mttf) or not math.isfinite(mttr):
        raise ValueError("mttf and mttr must be finite")
    if mttf <= 0:
        raise ValueError("mttf must be positive")
    if mttr < 0:
        raise ValueError("mttr must be non-negative")
    return mttf / (mttf + mttr)


def reliability_from_rate(rate: float, t: float) -> float:
    """Survival probability exp(-rate * t) under a constant failure rate."""
    if not math.isfinite(rate) or rate <= 0:
        raise ValueError("rate must be positive and finite")
    if not math.isfinite(t) or t < 0:
        raise ValueError("mission time must be non-negative and finite")
    return math.exp(-rate * t)


def r_tmr(r: float) -> float:
    """Reliability of triple modular redundancy with a perfect voter:
    R^3 + 3R^2(1-R) = -2R^3 + 3R^2 (any two of three copies must survive)."""
    r = _check_unit("R", r)
    return (-2.0 * r + 3.0) * r * r


def r_standby(r: float) -> float:
    """Reliability of a two-component standby pair with perfect detection and
    switching: R^2 + 2R(1-R) = -R^2 + 2R (the pair fails only if both do)."""
    r = _check_unit("R", r)
    return (2.0 - r) * r


def r_ifr(rb: float, spares: int) -> float:
    """Reliability of one block backed by `spares` cold spares with flawless
    detection and switching: 1 - (1 - Rb)^(spares + 1)."""
    rb = _check_unit("Rb", rb)
    if not isinstance(spares, int) or spares < 0:
        raise ValueError("spare count must be a non-negative integer")
    return 1.0 - (1.0 - rb) ** (spares + 1)


def r_ifr_pipeline(rp: float, coverage: float, rsw: float, rctrl: float) -> float:
    """Reliability of the repairable pipeline: the duplicated stage pair with
    fault-coverage factor C, in series with the switch boxes and controller:

        (Rp^2 + 2*C*Rp*(1-Rp)) * Rsw * Rctrl

    The bracketed term is non-negative everywhere on [0,1]^2 (it is a sum of
    products of non-negative factors), so no absolute value is needed. With
    C=1 and perfect switch/controller it reduces to the standby formula; with
    C=0 it degenerates to the series pair Rp^2.
    """
    rp = _check_unit("Rp", rp)
    coverage = _check_unit("coverage", coverage)
    rsw = _check_unit("Rsw", rsw)
    rctrl = _check_unit("Rctrl", rctrl)
    pair = rp * rp + 2.0 * coverage * rp * (1.0 - rp)
    return pair * rsw * rctrl
