"""Evaluators for the rigorous bounds on I(L, p) and the window constants.

Every evaluator returns a :class:`BoundReport` that keeps the unclamped value,
so a bound that says nothing (negative raw lower bound, raw upper bound above
one) stays visible to the caller.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import BpercError, check_int, check_probability
from .special import LAMBDA, LAMBDA_M, log_F, q_of_p


@dataclass(frozen=True)
class ThresholdConstants:
    lam: float = LAMBDA
    lam_M: float = LAMBDA_M


THRESHOLDS = ThresholdConstants()


@dataclass(frozen=True)
class BoundReport:
    formula: str
    raw: float
    inputs: dict = field(default_factory=dict)
    vacuous: bool = False

    @property
    def value(self) -> float:
        if math.isnan(self.raw):
            return math.nan
        return min(1.0, max(0.0, self.raw))

    def as_dict(self) -> dict:
        return {
            "formula": self.formula,
            "value": self.value,
            # JSON has no infinities; a vacuous upper bound reports raw as null.
            "raw": self.raw if math.isfinite(self.raw) else None,
            "vacuous": self.vacuous,
            "inputs": dict(self.inputs),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _check_unit(x, name):
    return check_probability(x, name)


def _check_L_ell(L, ell):
    L = check_int(L, "L", minimum=2)
    ell = check_int(ell, "ell", minimum=2)
    if ell > L:
        raise BpercError(f"require L >= ell, got L={L}, ell={ell}")
    return L, ell


def comp_lower(L, ell, p, I_ell) -> BoundReport:
    """Lower bound on I(L) from I(ell) via disjoint copies of R(ell) and non-vacant lines."""
    L, ell = _check_L_ell(L, ell)
    p = check_probability(p, open_low=True, open_high=True)
    I_ell = _check_unit(I_ell, "I_ell")
    first = -math.expm1(-I_ell * (L / ell - 1.0) ** 2)
    second = 1.0 - 2.0 * L * L * math.exp(-p * ell)
    return BoundReport("comp_lower", first * second, {"L": L, "ell": ell, "p": p, "I_ell": I_ell})


def comp_upper(L, ell, p, I_ell) -> BoundReport:
    """Upper bound on I(L) from I(ell); vacuous when its normalising factor is not positive."""
    L, ell = _check_L_ell(L, ell)
    p = check_probability(p, open_low=True, open_high=True)
    I_ell = _check_unit(I_ell, "I_ell")
    inputs = {"L": L, "ell": ell, "p": p, "I_ell": I_ell}
    denom = 1.0 - 2.0 * ell * ell * math.exp(-p * (ell / 4.0 - 1.0))
    if denom <= 0:
        return BoundReport("comp_upper", math.inf, inputs, vacuous=True)
    return BoundReport("comp_upper", I_ell * (2.0 * L / (ell - 1)) ** 2 / denom, inputs)


def diag_lower(a, p) -> BoundReport:
    """Modified model: I_M(a) >= (2p - p^2)^a / 2."""
    a = check_int(a, "a", minimum=1)
    p = check_probability(p, open_low=True, open_high=True)
    raw = 0.5 * math.exp(a * math.log(p * (2.0 - p)))
    return BoundReport("diag_lower", raw, {"a": a, "p": p})


def growth_lower(I_a, a, b, p) -> BoundReport:
    """I(b) >= I(a) F_a^b squared (both models)."""
    I_a = _check_unit(I_a, "I_a")
    a = check_int(a, "a", minimum=1)
    b = check_int(b, "b")
    p = check_probability(p, open_low=True, open_high=True)
    raw = I_a * math.exp(2.0 * log_F(a, b, p))
    return BoundReport("growth_lower", raw, {"I_a": I_a, "a": a, "b": b, "p": p})


def scan_lower(b, ell, m, p, I_b) -> BoundReport:
    """I(ell) from I(b) by scanning m^2 disjoint copies of R(b) in the corner of R(ell)."""
    b = check_int(b, "b", minimum=1)
    ell = check_int(ell, "ell", minimum=1)
    m = check_int(m, "m", minimum=1)
    p = check_probability(p, open_low=True, open_high=True)
    I_b = _check_unit(I_b, "I_b")
    if m * b >= ell:
        raise BpercError(f"require m*b < ell, got m={m}, b={b}, ell={ell}")
    inputs = {"b": b, "ell": ell, "m": m, "p": p, "I_b": I_b}
    if I_b == 0:
        return BoundReport("scan_lower", 0.0, inputs)
    rest = ell - m * b
    log_tail = 2.0 * (log_F(b, ell, p) + log_F(rest, ell, p))
    log_tail += ell * math.log(-math.expm1(rest * math.log1p(-p)))
    raw = -math.expm1(-m * m * I_b) * math.exp(log_tail)
    return BoundReport("scan_lower", raw, inputs)


def mod_nuc_exponent(p) -> float:
    q = q_of_p(p)
    return -2.0 * LAMBDA_M / q + 2.0 * math.sqrt(2.0 / p) - math.log(1.0 / p) - 3.2


def mod_nuc_lower(B, p) -> BoundReport:
    """Modified model nucleation bound, valid for p <= 1/10 and B >= sqrt(2/p)."""
    B = check_int(B, "B", minimum=1)
    p = check_probability(p, open_low=True, open_high=True)
    if p > 0.1:
        raise BpercError(f"mod_nuc_lower requires p <= 0.1, got {p}")
    if B < math.sqrt(2.0 / p):
        raise BpercError(f"mod_nuc_lower requires B >= sqrt(2/p) = {math.sqrt(2.0 / p):.6g}, got {B}")
    return BoundReport("mod_nuc_lower", math.exp(mod_nuc_exponent(p)), {"B": B, "p": p})


def explicit_threshold(p) -> float:
    """Right-hand side of the certificate: lambda_M - sqrt(2p) + 1.8 p log(1/p) + 2p."""
    return LAMBDA_M - math.sqrt(2.0 * p) + 1.8 * p * math.log(1.0 / p) + 2.0 * p


def explicit_certificate(p, logL) -> tuple[bool, BoundReport]:
    """Whether p log L is large enough to certify I_M(L, p) >= 1/2.

    ``logL`` is the natural log of L, so astronomically large L need no big integers.
    The report's raw value is the certified lower bound on I: 1/2 when certified,
    0 (no information) otherwise.
    """
    p = check_probability(p, open_low=True)
    if p > 0.1:
        raise BpercError(f"explicit_certificate requires 0 < p <= 0.1, got {p}")
    logL = float(logL)
    if not logL > 0:
        raise BpercError(f"logL must be positive, got {logL}")
    threshold = explicit_threshold(p)
    plogL = p * logL
    ok = plogL >= threshold
    inputs = {"p": p, "logL": logL, "plogL": plogL, "threshold": threshold}
    return ok, BoundReport("explicit_certificate", 0.5 if ok else 0.0, inputs, vacuous=not ok)


def window_constants(eps) -> tuple[float, float]:
    """``(C_minus, C_plus)`` bounding p log(L_upper / L_lower) for the window at level eps."""
    eps = float(eps)
    if not 0.0 < eps < 0.2:
        raise BpercError(f"eps must lie in (0, 1/5), got {eps}")
    c_plus = math.log1p(math.sqrt(math.log(1.0 / eps + 1.0) / eps))
    c_minus = 0.5 * math.log((1.0 - eps) / (4.0 * eps))
    return c_minus, c_plus
