"""Simulation truths: lognormal regressions with treatment-by-subgroup interactions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .domain import TT, Catalog, InputError, MutationTumorPair, Patient, pair_membership

# rows: FGFR, BRAF, PIK3CA, PTEN, MET; columns: BRCA, Ovary, Lung
IMPACT_POPULATION = (
    (15, 20, 5),
    (10, 100, 60),
    (50, 30, 5),
    (13, 25, 5),
    (12, 30, 20),
)


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    beta0: float = 0.0
    interactions: tuple[tuple[MutationTumorPair, float], ...] = ()
    sigma: float = 0.2
    population: tuple[tuple[int, ...], ...] = IMPACT_POPULATION
    catalog: Catalog = field(default_factory=Catalog)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        pop = np.asarray(self.population)
        if pop.shape != (self.catalog.q, self.catalog.n_tumors):
            raise InputError(f"population matrix must be {self.catalog.q}x{self.catalog.n_tumors}")
        if np.any(pop < 0):
            raise InputError("population sizes must be nonnegative")
        object.__setattr__(self, "interactions",
                           tuple((MutationTumorPair(*a), float(b)) for a, b in self.interactions))

    @property
    def n_total(self) -> int:
        return int(np.sum(self.population))

    def log_mean(self, patient: Patient, arm: str) -> float:
        """Mean of log PFS: z * (beta0 + sum of matching interaction coefficients)."""
        if arm != TT:
            return 0.0
        return self.beta0 + sum(b for a, b in self.interactions if pair_membership(patient, a))

    def survival(self, patient: Patient, arm: str, t: float) -> float:
        if t <= 0:
            return 1.0
        return float(norm.sf((math.log(t) - self.log_mean(patient, arm)) / self.sigma))

    def mean_time(self, patient: Patient, arm: str) -> float:
        return math.exp(self.log_mean(patient, arm) + self.sigma ** 2 / 2)


def _pairs(catalog: Catalog, rows: Sequence[tuple[str, str, float]]):
    return tuple((catalog.pair(m, c), b) for m, c, b in rows)


def preset_scenario(number: int, catalog: Optional[Catalog] = None) -> Scenario:
    """One of the six preset simulation truths, numbered 1..6."""
    cat = catalog or Catalog()
    table = {
        1: (0.0, []),
        2: (0.4, []),
        3: (0.0, [("BRAF", "Lung", 0.4)]),
        4: (0.0, [("PIK3CA", "BRCA", 0.3), ("BRAF", "Lung", 0.3), ("PTEN", "Lung", 0.4)]),
        5: (0.0, [("PIK3CA", "BRCA", 0.3), ("BRAF", "Ovary", 0.4), ("BRAF", "Lung", 0.3)]),
        6: (0.0, [("BRAF", "BRCA", 0.4), ("BRAF", "Ovary", 0.3), ("BRAF", "Lung", 0.4)]),
    }
    if number not in table:
        raise InputError(f"scenario must be 1..6, got {number}")
    beta0, inter = table[number]
    return Scenario(f"scenario{number}", beta0, _pairs(cat, inter), 0.2, IMPACT_POPULATION, cat)
