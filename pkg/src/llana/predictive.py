from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian summary of a surrogate's belief at one point (objective units)."""

    mean: float
    std: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise ValueError(f"non-finite prediction ({self.mean}, {self.std})")
        if self.std < 0:
            raise ValueError(f"negative std {self.std}")
