"""NAIVE and SEPARATE comparator analyses: two-arm conjugate normal models on log PFS."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import ARMS, O, TT, InputError, Patient


@dataclass(frozen=True)
class ComparatorPrior:
    """mu | s2 ~ N(mu0, tau2 * s2), s2 ~ InvGamma(b1, b2)."""

    mu0: float = 0.0
    tau2: float = 100.0
    b1: float = 0.01
    b2: float = 0.01

    def __post_init__(self):
        if not (self.tau2 > 0 and self.b1 > 0 and self.b2 > 0):
            raise InputError("tau2, b1 and b2 must be positive")


@dataclass(frozen=True)
class ComparatorPosterior:
    location: float
    precision_scale: float
    shape: float
    rate: float
    n: int
    mean: float
    ss: float

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        s2 = self.rate / rng.standard_gamma(self.shape, size)
        mu = self.location + np.sqrt(s2 / self.precision_scale) * rng.standard_normal(size)
        return mu, s2

    def predictive_mean(self, rng: np.random.Generator, n_draws: int = 400) -> float:
        """Monte Carlo posterior mean of exp(mu + s2/2)."""
        mu, s2 = self.draw(rng, n_draws)
        return float(np.mean(np.exp(mu + s2 / 2)))

    def median_mean_time(self, rng: np.random.Generator, n_draws: int = 400) -> float:
        """Monte Carlo posterior median of the lognormal mean exp(mu + s2/2).

        The posterior mean of exp(mu + s2/2) is infinite under an inverse-gamma
        s2; the median is finite and is the Bayes estimate under absolute loss.
        """
        mu, s2 = self.draw(rng, n_draws)
        with np.errstate(over="ignore"):  # inf draws still leave a finite median
            return float(np.median(np.exp(mu + s2 / 2)))


def conjugate_update(logy: np.ndarray, prior: ComparatorPrior) -> ComparatorPosterior:
    y = np.asarray(logy, dtype=float)
    n = y.size
    if n == 0:
        raise InputError("empty arm")
    ybar = float(y.mean())
    ss = float(np.sum((y - ybar) ** 2))
    k0 = 1.0 / prior.tau2
    kn = k0 + n
    loc = (k0 * prior.mu0 + n * ybar) / kn
    shape = prior.b1 + n / 2
    rate = prior.b2 + ss / 2 + k0 * n * (ybar - prior.mu0) ** 2 / (2 * kn)
    return ComparatorPosterior(loc, kn, shape, rate, n, ybar, ss)


def _log_times(patients: Sequence[Patient], arm: str) -> np.ndarray:
    return np.array([math.log(p.outcome.time) for p in patients if p.arm == arm and p.outcome])


def naive_fit(patients: Sequence[Patient], prior: Optional[ComparatorPrior] = None) -> dict[str, ComparatorPosterior]:
    """Pooled two-arm fit ignoring covariates."""
    prior = prior or ComparatorPrior()
    out = {}
    for arm in ARMS:
        y = _log_times(patients, arm)
        if y.size == 0:
            raise InputError(f"arm {arm} has no observed outcomes")
        out[arm] = conjugate_update(y, prior)
    return out


def separate_fit(patients: Sequence[Patient], q: int,
                 prior: Optional[ComparatorPrior] = None) -> dict[int, Optional[dict[str, ComparatorPosterior]]]:
    """Independent NAIVE fits per aberration; ``None`` marks an inestimable stratum."""
    out: dict[int, Optional[dict[str, ComparatorPosterior]]] = {}
    for j in range(q):
        stratum = [p for p in patients if p.mutations[j] == 1]
        try:
            out[j] = naive_fit(stratum, prior)
        except InputError:
            out[j] = None
    return out


def optimal_arm(fit: dict[str, ComparatorPosterior], rng: np.random.Generator,
                n_draws: int = 400) -> tuple[str, float]:
    """Arm with the larger estimated mean PFS, and that estimate."""
    means = {arm: fit[arm].median_mean_time(rng, n_draws) for arm in (TT, O)}
    arm = TT if means[TT] > means[O] else O
    return arm, means[arm]
