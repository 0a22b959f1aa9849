"""Expert judgement records shared by the reconciliation models."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .sll import QuantileTriplet

__all__ = ["QuantileJudgement", "EventJudgement", "group_by", "PanelError"]


class PanelError(ValueError):
    """A panel of judgements fails a structural precondition."""


@dataclass(frozen=True)
class QuantileJudgement:
    expert: str
    group: str
    triplet: QuantileTriplet
    plausible_low: float | None = None
    plausible_high: float | None = None
    quantity: str = "q1"
    round: int = 1

    @property
    def lower_bound(self) -> float:
        """Plausible lower value, falling back to the lower quantile."""
        if self.plausible_low is None:
            return self.triplet.low
        return min(self.plausible_low, self.triplet.low)

    @property
    def upper_bound(self) -> float:
        if self.plausible_high is None:
            return self.triplet.high
        return max(self.plausible_high, self.triplet.high)


@dataclass(frozen=True)
class EventJudgement:
    expert: str
    group: str
    probability: float
    quantity: str = "e1"
    round: int = 1

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(
                f"probability for expert {self.expert!r} must lie in [0, 1], "
                f"got {self.probability}"
            )


def group_by(judgements: Iterable, min_experts: int = 1) -> dict[str, list]:
    """Bucket judgements by group label, rejecting duplicate experts."""
    groups: dict[str, list] = defaultdict(list)
    seen: set[str] = set()
    for j in judgements:
        if j.group is None or j.group == "":
            raise PanelError(f"expert {j.expert!r} has no group assigned")
        if j.expert in seen:
            raise PanelError(f"expert {j.expert!r} appears more than once")
        seen.add(j.expert)
        groups[j.group].append(j)
    if len(seen) < min_experts:
        raise PanelError(f"need at least {min_experts} experts, got {len(seen)}")
    return dict(groups)


def canonical_group_order(keys: Sequence[tuple]) -> list[int]:
    """Indices ordering groups by a label-free key, so relabelling is a no-op."""
    return sorted(range(len(keys)), key=lambda i: keys[i])
