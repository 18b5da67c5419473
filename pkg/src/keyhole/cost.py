"""Interaction-cost models: pointing time and per-operation modality costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Mapping, Sequence, Tuple


class CostError(ValueError):
    """Invalid input to a cost model."""


class InvalidTargetError(CostError):
    """Non-positive target width passed to the pointing model."""


class OperationKind(str, Enum):
    SIMPLE_FILTER = "SimpleFilter"
    DATE_RANGE = "DateRange"
    MULTI_SELECT = "MultiSelect"
    DRILL_DOWN = "DrillDown"
    COMPARE_VIEWS = "CompareViews"


# Seconds per operation by (kind -> (chat, gui)).
DEFAULT_COSTS: Dict[OperationKind, Tuple[float, float]] = {
    OperationKind.SIMPLE_FILTER: (5.2, 0.5),
    OperationKind.DATE_RANGE: (8.5, 1.2),
    OperationKind.MULTI_SELECT: (12.3, 2.1),
    OperationKind.DRILL_DOWN: (7.8, 0.8),
    OperationKind.COMPARE_VIEWS: (15.2, 1.5),
}


@dataclass(frozen=True)
class PointingParams:
    """Pointing-time coefficients: intercept (s) and slope (s/bit)."""

    a: float = 0.1
    b: float = 0.15

    def __post_init__(self) -> None:
        if self.b <= 0:
            raise CostError("slope b must be positive")


@dataclass(frozen=True)
class ModalityCostTable:
    """Per-operation (chat, gui) seconds; defaults are the reference estimates."""

    costs: Mapping[OperationKind, Tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_COSTS)
    )

    def __post_init__(self) -> None:
        for kind, (chat, gui) in self.costs.items():
            if chat <= 0 or gui <= 0:
                raise CostError(f"costs for {kind} must be positive")


def fitts_time(p: PointingParams, distance: float, width: float) -> float:
    """Movement time a + b·log2(distance/width + 1)."""
    if width <= 0:
        raise InvalidTargetError("target width must be positive")
    if distance < 0:
        raise CostError("distance must be non-negative")
    return p.a + p.b * math.log2(distance / width + 1.0)


def op_time(
    kind: OperationKind,
    modality: str,
    table: ModalityCostTable = ModalityCostTable(),
) -> float:
    """Seconds for one operation under the given modality ("chat" or "gui")."""
    if kind not in table.costs:
        raise CostError(f"no cost entry for {kind}")
    chat, gui = table.costs[kind]
    if modality == "chat":
        return chat
    if modality == "gui":
        return gui
    raise CostError(f"unknown modality: {modality!r}")


def session_cost(
    mix: Sequence[Tuple[OperationKind, str]],
    table: ModalityCostTable = ModalityCostTable(),
) -> float:
    """Total seconds over a sequence of (operation, modality) pairs."""
    if not mix:
        raise CostError("operation mix must be non-empty")
    # fsum keeps long mixes exact instead of accumulating rounding error.
    return math.fsum(op_time(kind, modality, table) for kind, modality in mix)


def uniform_mix(modality: str, per_kind: int = 10) -> list:
    """The uniform 50-operation mix: per_kind of each operation kind."""
    return [(kind, modality) for kind in OperationKind for _ in range(per_kind)]
