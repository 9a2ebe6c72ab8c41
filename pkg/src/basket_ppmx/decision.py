"""Utility-based choice of the subpopulation report.

All functions work on a matrix of pair-specific log hazard ratios, one row
per posterior draw (or a single row for a known truth), so the same code
serves posterior decisions and the true-report construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import (A0, A1, O, TT, Catalog, InputError, MutationTumorPair, NullReport,
                     OverallReport, PairSet, Patient, SubpopulationReport, pair_membership,
                     report_pairs)
from .predictive import HorizonConfig, log_hazard_ratio
from .scenarios import Scenario


@dataclass(frozen=True)
class UtilityConfig:
    u0: float = 1.3
    u1: float = 20.0
    alpha: float = 1 / 8
    beta: float = 0.4
    min_size: int = 5
    eps0: float = 0.05
    eps1: float = 2.0

    def __post_init__(self):
        if not (self.u0 > 0 and self.u1 > 0):
            raise InputError("u0 and u1 must be positive")
        if not 0 <= self.alpha <= 1:
            raise InputError("alpha must lie in [0, 1]")
        if not self.beta > 0:
            raise InputError("beta must be positive")
        if self.min_size < 1:
            raise InputError("min_size must be at least 1")
        if not (self.eps0 > 0 and self.eps1 > 0):
            raise InputError("eps0 and eps1 must be positive")


def size_penalty(n_a: int, alpha: float, floor: int = 5) -> float:
    if n_a < 0:
        raise InputError("subgroup size must be nonnegative")
    return 0.0 if n_a < floor else float(n_a) ** alpha


def h0_member(log_hr: np.ndarray, eps0: float) -> np.ndarray:
    """No effect anywhere: every |log HR| within eps0. Works row-wise on (D, A)."""
    lhr = np.atleast_2d(log_hr)
    if lhr.shape[1] == 0:
        return np.ones(lhr.shape[0], bool)
    return np.max(np.abs(lhr), axis=1) <= eps0


def h1_member(log_hr: np.ndarray, eps0: float, eps1: float) -> np.ndarray:
    """Common positive effect: log HR spread within eps1 and all above eps0."""
    lhr = np.atleast_2d(log_hr)
    if lhr.shape[1] == 0:
        return np.zeros(lhr.shape[0], bool)
    spread = lhr.max(axis=1) - lhr.min(axis=1)
    return (spread <= eps1) & (lhr.min(axis=1) > eps0)


def _penalties(sizes: Sequence[int], config: UtilityConfig) -> np.ndarray:
    return np.array([size_penalty(int(n), config.alpha) for n in sizes])


def utility(report: SubpopulationReport, log_hr_row: np.ndarray, pairs: Sequence[MutationTumorPair],
            sizes: Sequence[int], config: UtilityConfig) -> float:
    """Utility of a report under one parameter value (one row of log HRs)."""
    row = np.asarray(log_hr_row, dtype=float)
    if h0_member(row, config.eps0)[0]:
        return config.u0 if isinstance(report, NullReport) else 0.0
    if h1_member(row, config.eps0, config.eps1)[0]:
        return config.u1 if isinstance(report, OverallReport) else 0.0
    chosen = report_pairs(report)
    pos = {MutationTumorPair(*a): i for i, a in enumerate(pairs)}
    total = 0.0
    for a in sorted(chosen):
        if a not in pos:
            raise InputError(f"pair {a} has no patients")
        i = pos[a]
        total += (row[i] - config.beta) * size_penalty(int(sizes[i]), config.alpha)
    return total


def expected_utility(report: SubpopulationReport, log_hr: np.ndarray, pairs, sizes,
                     config: UtilityConfig) -> float:
    log_hr = np.atleast_2d(log_hr)
    if log_hr.shape[0] == 0:
        raise InputError("need at least one draw")
    return float(np.mean([utility(report, r, pairs, sizes, config) for r in log_hr]))


@dataclass
class DecisionSummary:
    """Per-draw quantities reduced to what the Bayes rule needs."""

    pairs: list[MutationTumorPair]
    sizes: np.ndarray
    p_h0: float
    p_h1: float
    contributions: np.ndarray
    mean_log_hr: np.ndarray
    n_draws: int
    beta: float
    alpha: float
    min_size: int

    @classmethod
    def from_log_hr(cls, log_hr: np.ndarray, pairs: Sequence[MutationTumorPair], sizes: Sequence[int],
                    config: UtilityConfig) -> "DecisionSummary":
        lhr = np.atleast_2d(np.asarray(log_hr, dtype=float))
        if lhr.shape[0] == 0:
            raise InputError("need at least one draw")
        if lhr.shape[1] != len(pairs):
            raise InputError("log HR columns do not match the pairs")
        sizes = np.asarray(sizes, dtype=int)
        in_h0 = h0_member(lhr, config.eps0)
        in_h1 = h1_member(lhr, config.eps0, config.eps1) & ~in_h0
        neither = ~(in_h0 | in_h1)
        f = _penalties(sizes, config)
        contrib = np.mean((lhr - config.beta) * f[None, :] * neither[:, None], axis=0)
        return cls([MutationTumorPair(*a) for a in pairs], sizes, float(in_h0.mean()),
                   float(in_h1.mean()), contrib, lhr.mean(axis=0), lhr.shape[0],
                   config.beta, config.alpha, config.min_size)

    def eligible(self) -> list[int]:
        return [i for i, n in enumerate(self.sizes) if n >= self.min_size]


@dataclass
class DecisionResult:
    report: SubpopulationReport
    expected_utility: float
    table: list[tuple[SubpopulationReport, float]]
    summary: DecisionSummary

    def record(self, catalog: Optional[Catalog] = None) -> dict:
        s = self.summary
        name = (lambda a: catalog.pair_name(a)) if catalog else str
        return {
            "report": describe_report(self.report, catalog),
            "expected_utility": self.expected_utility,
            "p_h0": s.p_h0,
            "p_h1": s.p_h1,
            "pairs": [{"pair": name(a), "n": int(n), "contribution": float(c), "mean_log_hr": float(m)}
                      for a, n, c, m in zip(s.pairs, s.sizes, s.contributions, s.mean_log_hr)],
        }


def describe_report(report: SubpopulationReport, catalog: Optional[Catalog] = None) -> str:
    if isinstance(report, PairSet) and catalog is not None:
        return "{" + ", ".join(catalog.pair_name(a) for a in report.sorted_pairs()) + "}"
    return str(report)


def report_sort_key(report: SubpopulationReport, eu: float):
    """Total order: higher utility, then A0, A1, smaller pair set, lexicographic pairs."""
    if isinstance(report, NullReport):
        return (-eu, 0, 0, ())
    if isinstance(report, OverallReport):
        return (-eu, 1, 0, ())
    return (-eu, 2, len(report), tuple(report.sorted_pairs()))


def decide(summary: DecisionSummary, u0: float, u1: float) -> DecisionResult:
    """Bayes rule using additivity of the pair-set utility.

    The best pair set is every eligible pair with strictly positive expected
    contribution (or the single best pair if none is positive).
    """
    eu_a0 = u0 * summary.p_h0
    eu_a1 = u1 * summary.p_h1
    elig = summary.eligible()
    table: list[tuple[SubpopulationReport, float]] = [(A0, eu_a0), (A1, eu_a1)]
    for i in elig:
        table.append((PairSet({summary.pairs[i]}), float(summary.contributions[i])))
    best = None
    if elig:
        positive = [i for i in elig if summary.contributions[i] > 0]
        if positive:
            best = (PairSet({summary.pairs[i] for i in positive}),
                    float(sum(summary.contributions[i] for i in positive)))
            if len(positive) > 1:
                table.append(best)
        else:
            i = min(elig, key=lambda i: (-summary.contributions[i], summary.pairs[i]))
            best = (PairSet({summary.pairs[i]}), float(summary.contributions[i]))
    table.sort(key=lambda t: report_sort_key(*t))
    candidates = [(A0, eu_a0), (A1, eu_a1)] + ([best] if best else [])
    winner = min(candidates, key=lambda t: report_sort_key(*t))
    return DecisionResult(winner[0], winner[1], table, summary)


def optimal_report(log_hr: np.ndarray, pairs: Sequence[MutationTumorPair], sizes: Sequence[int],
                   config: UtilityConfig) -> DecisionResult:
    summary = DecisionSummary.from_log_hr(log_hr, pairs, sizes, config)
    return decide(summary, config.u0, config.u1)


# -- simulation truth ------------------------------------------------------

def true_log_hazard_ratios(scenario: Scenario, patients: Sequence[Patient],
                           pairs: Sequence[MutationTumorPair], horizon: HorizonConfig) -> np.ndarray:
    """(1, A) log HRs under the known lognormal truth, same AH averaging as the model."""
    T = horizon.T
    out = []
    for a in pairs:
        group = [p for p in patients if pair_membership(p, a)]
        if not group:
            raise InputError(f"subgroup {a} is empty")
        ah = {}
        for arm in (O, TT):
            vals = [-math.log(max(scenario.survival(p, arm, T), 1e-15)) / T for p in group]
            ah[arm] = float(np.mean(vals))
        out.append(float(log_hazard_ratio(ah[O], ah[TT])))
    return np.array([out])


def true_utility(report: SubpopulationReport, scenario: Scenario, patients: Sequence[Patient],
                 pairs: Sequence[MutationTumorPair], sizes: Sequence[int], config: UtilityConfig,
                 horizon: HorizonConfig) -> float:
    lhr = true_log_hazard_ratios(scenario, patients, pairs, horizon)
    return utility(report, lhr[0], pairs, sizes, config)


def true_report(scenario: Scenario, patients: Sequence[Patient], pairs: Sequence[MutationTumorPair],
                sizes: Sequence[int], config: UtilityConfig, horizon: HorizonConfig) -> DecisionResult:
    lhr = true_log_hazard_ratios(scenario, patients, pairs, horizon)
    return optimal_report(lhr, pairs, sizes, config)
