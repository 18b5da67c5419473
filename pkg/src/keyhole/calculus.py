"""Cognitive-overload calculus.

Pure functions over immutable inputs: base and weighted overload, the
serialization penalty for flattening structured data into a linear stream,
an exponential error-probability mapping, and the modality recommendation
policy derived from the overload value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

DEFAULT_BASE_CAPACITY = 4.0
DEFAULT_ALPHA = 1.0
DEFAULT_LAMBDA = 0.5
DEFAULT_GG_THRESHOLD = 3.0

ITEM_KINDS = frozenset({"filter", "view", "hypothesis", "statevar"})


class CalculusError(ValueError):
    """Invalid input to a calculus operation."""


class InvalidDimensionalityError(CalculusError):
    """Dimensionality below 1 passed to the serialization penalty."""


class Modality(str, Enum):
    CHAT_TOLERABLE = "ChatTolerable"
    EXTERNALIZE_STATE = "ExternalizeState"
    ERROR_PRONE = "ErrorProne"


@dataclass(frozen=True)
class Item:
    """A task-relevant item with weight and graded visibility."""

    id: str
    kind: str = "filter"
    weight: float = 1.0
    salience: float = 0.0
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ITEM_KINDS:
            raise CalculusError(f"unknown item kind: {self.kind!r}")
        if self.weight < 0:
            raise CalculusError("item weight must be non-negative")
        if not 0.0 <= self.salience <= 1.0:
            raise CalculusError("item salience must lie in [0, 1]")


@dataclass(frozen=True)
class CapacityModel:
    """Working-memory capacity in chunks, adjusted for expertise and chunking aids."""

    base_capacity: float = DEFAULT_BASE_CAPACITY
    expertise: float = 0.0
    chunking_aid: float = 0.0

    def __post_init__(self) -> None:
        if self.base_capacity <= 0:
            raise CalculusError("base_capacity must be positive")
        if self.expertise < 0 or self.chunking_aid < 0:
            raise CalculusError("expertise and chunking_aid must be non-negative")

    def effective(self) -> float:
        # Additive adjustment: monotone in both offsets, equals base at zero.
        return self.base_capacity + self.expertise + self.chunking_aid


@dataclass(frozen=True)
class CalculusParams:
    """Tunable coefficients; never hard-coded in the formulas below."""

    alpha: float = DEFAULT_ALPHA
    lambda_: float = DEFAULT_LAMBDA
    gg_threshold: float = DEFAULT_GG_THRESHOLD

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise CalculusError("alpha must be positive")
        if self.lambda_ <= 0:
            raise CalculusError("lambda must be positive")
        if self.gg_threshold <= 0:
            raise CalculusError("gg_threshold must be positive")


@dataclass(frozen=True)
class OverloadReport:
    """Snapshot of the full overload computation for one moment of analysis."""

    m: float
    v: float
    l_internal: float
    o: float
    dimensionality: int = 1
    s: float = 0.0
    o_prime: float = 0.0
    p_error: float = 0.0
    p_error_basis: str = "o"  # "o" or "o_prime"

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "v": self.v,
            "l_internal": self.l_internal,
            "o": self.o,
            "dimensionality": self.dimensionality,
            "s": self.s,
            "o_prime": self.o_prime,
            "p_error": self.p_error,
            "p_error_basis": self.p_error_basis,
        }


def overload(m: int, v: int, cap: CapacityModel = CapacityModel()) -> OverloadReport:
    """Base overload from integer item counts.

    Returns a report with l_internal = max(0, m - v) and
    o = max(0, m - v - W(e, c)); the serialization fields are left at their
    zero defaults (d=1, s=0, o' = o).
    """
    if not isinstance(m, int) or not isinstance(v, int):
        raise CalculusError("base overload requires integer counts; use extended_overload for weighted sums")
    if m < 0 or v < 0:
        raise CalculusError("counts must be non-negative")
    l_internal = max(0.0, float(m - v))
    o = max(0.0, m - v - cap.effective())
    return OverloadReport(m=float(m), v=float(v), l_internal=l_internal, o=o, o_prime=o)


def extended_overload(items: Iterable[Item], cap: CapacityModel = CapacityModel()) -> float:
    """Weighted overload with graded visibility: max(0, Σw_i − Σw_i·σ_i − W(e,c))."""
    total = 0.0
    visible = 0.0
    for item in items:
        total += item.weight
        visible += item.weight * item.salience
    return max(0.0, total - visible - cap.effective())


def serialization_penalty(d: int, params: CalculusParams = CalculusParams()) -> float:
    """Linear cost of flattening d-dimensional structure into a stream: α·(d−1)."""
    if not isinstance(d, int) or d < 1:
        raise InvalidDimensionalityError(f"dimensionality must be an integer ≥ 1, got {d!r}")
    return params.alpha * (d - 1)


def total_overload(o: float, s: float) -> float:
    """Overload augmented by the serialization penalty."""
    if o < 0 or s < 0:
        raise CalculusError("overload and penalty must be non-negative")
    return o + s


def error_probability(o: float, params: CalculusParams = CalculusParams()) -> float:
    """Exponential load-to-error mapping 1 − exp(−λ·o); zero iff o is zero."""
    if o < 0:
        raise CalculusError("overload must be non-negative")
    p = -math.expm1(-params.lambda_ * o)
    # Keep the open upper bound even when exp underflows.
    if p >= 1.0:
        p = math.nextafter(1.0, 0.0)
    return p


def recommend_modality(o: float, gg_threshold: float = DEFAULT_GG_THRESHOLD) -> Modality:
    """Policy: zero overload tolerates chat; positive overload wants externalized
    state; overload at or above the threshold is predictably error-prone."""
    if o < 0:
        raise CalculusError("overload must be non-negative")
    if o == 0:
        return Modality.CHAT_TOLERABLE
    if o < gg_threshold:
        return Modality.EXTERNALIZE_STATE
    return Modality.ERROR_PRONE


def build_report(
    m: int,
    v: int,
    cap: CapacityModel = CapacityModel(),
    params: CalculusParams = CalculusParams(),
    dimensionality: int = 1,
    p_error_on_total: bool = False,
) -> OverloadReport:
    """Full report: base overload plus serialization penalty and error probability.

    ``p_error_on_total`` selects whether the error mapping is applied to the
    augmented overload o' or to the bare o; the report records the basis used.
    """
    base = overload(m, v, cap)
    s = serialization_penalty(dimensionality, params)
    o_prime = total_overload(base.o, s)
    basis = "o_prime" if p_error_on_total else "o"
    p = error_probability(o_prime if p_error_on_total else base.o, params)
    return OverloadReport(
        m=base.m,
        v=base.v,
        l_internal=base.l_internal,
        o=base.o,
        dimensionality=dimensionality,
        s=s,
        o_prime=o_prime,
        p_error=p,
        p_error_basis=basis,
    )
