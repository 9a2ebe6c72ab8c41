"""Run-in equal randomization followed by cohort-wise adaptive randomization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import O, TT, InputError

RUN_IN = "run_in"
ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class DesignConfig:
    n0: int = 100
    n1: int = 300
    cohort: int = 50
    p0: float = 0.1
    p1: float = 0.9
    follow_up: float = 6.0
    accrual_period: float = 24.0
    adaptive: bool = True

    def __post_init__(self):
        if not 0 < self.p0 <= self.p1 < 1:
            raise InputError("need 0 < p0 <= p1 < 1")
        if self.n0 < 1 or self.n1 < 0 or self.cohort < 1:
            raise InputError("n0 >= 1, n1 >= 0 and cohort >= 1 required")
        if self.n1 % self.cohort:
            raise InputError("cohort size must divide n1")
        if self.follow_up < 0 or self.accrual_period <= 0:
            raise InputError("follow_up must be >= 0 and accrual_period > 0")

    @property
    def n_max(self) -> int:
        return self.n0 + self.n1


@dataclass(frozen=True)
class AllocationRecord:
    patient_id: int
    phase: str
    pi: Optional[float]
    prob_tt: float
    arm: str
    draw: float
    counter: int = 0


def allocation_prob(pi: float, config: DesignConfig) -> float:
    """Probability of TT: pi clamped to [p0, p1]."""
    if not 0.0 <= pi <= 1.0:
        raise InputError(f"pi must lie in [0, 1], got {pi}")
    if pi < config.p0:
        return config.p0
    if pi > config.p1:
        return config.p1
    return pi


def assign_arm(patient_id: int, phase: str, config: DesignConfig, rng: np.random.Generator,
               pi: Optional[float] = None, counter: int = 0) -> AllocationRecord:
    """Draw the arm; ``counter`` is the position of this uniform in the allocation stream."""
    if phase == RUN_IN:
        if pi is not None:
            raise InputError("run-in assignment takes no pi")
        prob = 0.5
    elif phase == ADAPTIVE:
        if pi is None:
            raise InputError("adaptive assignment needs pi")
        prob = allocation_prob(pi, config)
    else:
        raise InputError(f"unknown phase {phase!r}")
    u = float(rng.random())
    return AllocationRecord(patient_id, phase, pi, prob, TT if u < prob else O, u, counter)


def trial_schedule(config: DesignConfig) -> list[int]:
    """Enrollment counts after which the model is refit.

    Each refit governs the allocation of the following cohort; the final
    analysis happens after ``n_max`` accrue plus the follow-up window.
    """
    if config.n1 == 0:
        return []
    return list(range(config.n0, config.n_max, config.cohort))
