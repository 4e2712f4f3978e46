"""Key-rate arithmetic: binary entropy, visibility, QBER and the sifted secret key rate.

All functions are pure and stateless. The count-based functions are
duck-typed on purpose: pass ``fractions.Fraction`` counts (or request
``exact=True``) and the arithmetic stays exact, which makes the identity
``(1 - V) / 2 == error_counts / total_counts`` hold bit-for-bit instead of
merely to rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

__all__ = [
    "DEFAULT_EC_EFFICIENCY",
    "DomainError",
    "UndefinedVisibilityError",
    "BasisCounts",
    "KeyRateInputs",
    "binary_entropy",
    "visibility_from_counts",
    "qber_from_visibility",
    "secret_key_rate",
    "positive_qber_threshold",
]

#: Error-correction efficiency multiplier f applied on top of the Shannon
#: limit; the (1 + f) entropy factor then charges H2(Q) once for privacy
#: amplification and f * H2(Q) for error-correction leakage.
DEFAULT_EC_EFFICIENCY = 1.2

_LN2 = math.log(2.0)


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a formula."""


class UndefinedVisibilityError(ValueError):
    """Visibility requested for a tally whose total count is zero."""


@dataclass(frozen=True)
class BasisCounts:
    """Coincidence counts for the four outcome combinations in one basis pair.

    ``c_pp`` counts both-transmitted events (e.g. HH), ``c_pm`` transmitted/
    reflected (HV), ``c_mp`` reflected/transmitted (VH) and ``c_mm`` both
    reflected (VV).
    """

    c_pp: int
    c_pm: int
    c_mp: int
    c_mm: int

    def __post_init__(self) -> None:
        for name in ("c_pp", "c_pm", "c_mp", "c_mm"):
            value = getattr(self, name)
            if value < 0:
                raise DomainError(f"{name} must be >= 0, got {value}")

    @property
    def total(self) -> int:
        return self.c_pp + self.c_pm + self.c_mp + self.c_mm

    @property
    def error_counts(self) -> int:
        """Counts in the anti-correlated outcome combinations."""
        return self.c_pm + self.c_mp


@dataclass(frozen=True)
class KeyRateInputs:
    """Per-basis coincidence rates and QBERs feeding the key-rate formula.

    Rates are in coincidences per second; the resulting key rate is then in
    bits per second.  ``ec_efficiency`` is the error-correction efficiency f.
    """

    coin_rate_hv: float
    coin_rate_da: float
    qber_hv: float
    qber_da: float
    ec_efficiency: float = DEFAULT_EC_EFFICIENCY

    def __post_init__(self) -> None:
        if self.coin_rate_hv < 0 or self.coin_rate_da < 0:
            raise DomainError("coincidence rates must be >= 0")
        for name in ("qber_hv", "qber_da"):
            q = getattr(self, name)
            if not 0 <= q <= 0.5:
                raise DomainError(f"{name} must be in [0, 0.5], got {q}")
        if self.ec_efficiency < 0:
            raise DomainError("ec_efficiency must be >= 0")


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy H2(x) in bits, with H2(0) = H2(1) = 0.

    Uses ``log1p`` for the (1 - x) term so the result stays accurate to a few
    ulp over the whole domain, including x close to 0.

    Raises:
        DomainError: if x is outside [0, 1].
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -(x * math.log2(x) + (1.0 - x) * (math.log1p(-x) / _LN2))


def visibility_from_counts(counts: BasisCounts, *, exact: bool = False):
    """Polarization visibility (c_pp + c_mm - c_pm - c_mp) / total.

    Args:
        counts: the four coincidence counts of one basis setting.
        exact: return a ``fractions.Fraction`` instead of a float, keeping
            the arithmetic exact.

    Raises:
        UndefinedVisibilityError: if the total count is zero.
    """
    total = counts.total
    if total == 0:
        raise UndefinedVisibilityError("visibility undefined for zero total counts")
    signed = counts.c_pp + counts.c_mm - counts.c_pm - counts.c_mp
    if exact:
        return Fraction(signed, total)
    return signed / total


def qber_from_visibility(v):
    """QBER from visibility, Q = (1 - V) / 2.

    Duck-typed: a ``Fraction`` visibility yields an exact ``Fraction`` QBER,
    so composing with ``visibility_from_counts(..., exact=True)`` reproduces
    error_counts / total_counts exactly.

    Raises:
        DomainError: if v is outside [-1, 1].
    """
    if not -1 <= v <= 1:
        raise DomainError(f"visibility must be in [-1, 1], got {v}")
    return (1 - v) / 2


def secret_key_rate(inputs: KeyRateInputs) -> float:
    """Sifted secret key rate in bits per second.

    R = 1/2 C_HV (1 - (1+f) H2(Q_HV)) + 1/2 C_DA (1 - (1+f) H2(Q_DA))

    The raw value is returned; it is negative when the QBER is too high for
    a secure key.  Clamping to zero is left to the reporting layer so that
    root finding on the zero crossing stays possible.
    """
    leak = 1.0 + inputs.ec_efficiency
    term_hv = inputs.coin_rate_hv * (1.0 - leak * binary_entropy(inputs.qber_hv))
    term_da = inputs.coin_rate_da * (1.0 - leak * binary_entropy(inputs.qber_da))
    return 0.5 * (term_hv + term_da)


def positive_qber_threshold(ec_efficiency: float = DEFAULT_EC_EFFICIENCY) -> float:
    """QBER at which the per-basis factor 1 - (1+f) H2(Q) crosses zero.

    Below the returned value a basis contributes positively to the key rate;
    above it the contribution is negative.  Solved by bisection on [0, 0.5].
    """
    if ec_efficiency < 0:
        raise DomainError("ec_efficiency must be >= 0")
    target = 1.0 / (1.0 + ec_efficiency)
    if target >= 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
