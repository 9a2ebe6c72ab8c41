"""Posterior-predictive summaries under fitted PPMx draws.

A new patient joins one of the J clusters of a draw (or a fresh one) with
covariate-driven membership weights; the predictive event-time law is the
resulting lognormal mixture, with the fresh-cluster component given by the
prior predictive (a Student t on log time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .domain import O, TT, Catalog, InputError, MutationTumorPair, Patient, pair_membership
from .ppmx import PartitionState, PosteriorDraws, patient_covariates

SURVIVAL_FLOOR = 1e-15
LOG_HR_CLIP = 50.0


@dataclass(frozen=True)
class HorizonConfig:
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise InputError("horizon T must be positive")


def compute_horizon(observed_times: Sequence[float]) -> HorizonConfig:
    """Empirical 75th percentile, linear interpolation at 0.75(n-1)+1."""
    t = np.asarray(list(observed_times), dtype=float)
    if t.size == 0:
        raise InputError("need at least one observed time")
    return HorizonConfig(float(np.quantile(t, 0.75, method="linear")))


class PosteriorPredictive:
    """Membership weights of a fixed set of query rows under every draw."""

    def __init__(self, draws: PosteriorDraws, queries: np.ndarray):
        self.draws = draws
        self.queries = np.atleast_2d(np.asarray(queries, dtype=np.int64))
        data, model = draws.data, draws.model
        alpha, alpha_sum, L = model.similarity.padded()
        self.W, self.Wnew = K.membership_weights(
            draws.labels, draws.J, data.cov, L, alpha, alpha_sum,
            math.log(model.cohesion.M), model.similarity.enabled, self.queries)
        self.mu = draws.mu
        self.sig2 = draws.sig2
        pr = model.prior
        self.prior = pr
        self._t_scale = math.sqrt(pr.predictive_scale2())

    def weights(self, d: int, q: int) -> np.ndarray:
        J = int(self.draws.J[d])
        return np.append(self.W[d, q, :J], self.Wnew[d, q])

    def cdf_sf(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if t < 0:
            raise InputError("time must be nonnegative")
        D, Q = self.Wnew.shape
        if t == 0:
            return np.zeros((D, Q)), np.ones((D, Q))
        z = (math.log(t) - self.prior.m) / self._t_scale
        return K.mixture_cdf_sf(self.W, self.Wnew, self.mu, self.sig2, self.draws.J, math.log(t),
                                float(stats.t.cdf(z, self.prior.nu)), float(stats.t.sf(z, self.prior.nu)))

    def survival(self, t: float) -> np.ndarray:
        return np.clip(self.cdf_sf(t)[1], 0.0, 1.0)

    def cumulative_hazard(self, t: float) -> np.ndarray:
        F, S = self.cdf_sf(t)
        F = np.clip(F, 0.0, 1.0)
        low = -np.log1p(-np.minimum(F, 0.5))
        high = -np.log(np.clip(S, SURVIVAL_FLOOR, 1.0))
        return np.where(F < 0.5, low, high)

    def average_hazard(self, horizon: HorizonConfig) -> np.ndarray:
        return self.cumulative_hazard(horizon.T) / horizon.T

    def mean_time(self) -> np.ndarray:
        """Predictive mean event time per (draw, query).

        The fresh-cluster component is evaluated at the prior location and
        scale; its exact mean under the t predictive is infinite.
        """
        with np.errstate(over="ignore"):
            comp = np.exp(self.mu + self.sig2 / 2.0)[:, None, :]
        J = self.W.shape[2]
        existing = np.sum(self.W * comp[:, :, :J], axis=2)
        return existing + self.Wnew * math.exp(self.prior.m + self.prior.s2 / 2.0)

    def sample(self, q: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        if n_samples < 1:
            raise InputError("n_samples must be at least 1")
        pr = self.prior
        logs = K.predictive_log_samples(self.W, self.Wnew, self.mu, self.sig2, self.draws.J, q,
                                        pr.m, pr.k, pr.nu, pr.s2, n_samples, rng)
        return np.exp(logs)

    def superiority(self, q_tt: int, q_o: int, n_mc: int, rng: np.random.Generator) -> float:
        if n_mc < 1:
            raise InputError("n_mc must be at least 1")
        pr = self.prior
        return float(K.superiority(self.W, self.Wnew, self.mu, self.sig2, self.draws.J, q_tt, q_o,
                                   pr.m, pr.k, pr.nu, pr.s2, n_mc, rng))


def query_row(patient: Patient, arm: str, catalog: Catalog) -> list[int]:
    return patient_covariates(patient, catalog, arm=arm, with_arm=True)


def _single(draws: PosteriorDraws, d: int) -> PosteriorDraws:
    return PosteriorDraws(draws.labels[d:d + 1], draws.J[d:d + 1], draws.mu[d:d + 1],
                          draws.sig2[d:d + 1], draws.logy[d:d + 1], draws.data, draws.model, draws.config)


def membership_weights(draws: PosteriorDraws, d: int, x_row: Sequence[int]) -> np.ndarray:
    """Weights over the J clusters of draw d plus the fresh cluster (last)."""
    return PosteriorPredictive(_single(draws, d), np.array([x_row])).weights(0, 0)


def survival(draws: PosteriorDraws, d: int, t: float, x_row: Sequence[int]) -> float:
    return float(PosteriorPredictive(_single(draws, d), np.array([x_row])).survival(t)[0, 0])


def cumulative_hazard(draws: PosteriorDraws, d: int, t: float, x_row: Sequence[int]) -> float:
    return float(PosteriorPredictive(_single(draws, d), np.array([x_row])).cumulative_hazard(t)[0, 0])


def average_hazard(draws: PosteriorDraws, d: int, x_row: Sequence[int], horizon: HorizonConfig) -> float:
    return cumulative_hazard(draws, d, horizon.T, x_row) / horizon.T


def predictive_sample(draws: PosteriorDraws, x_row: Sequence[int], rng: np.random.Generator,
                      n_samples: int) -> np.ndarray:
    return PosteriorPredictive(draws, np.array([x_row])).sample(0, n_samples, rng)


def superiority_prob(draws: PosteriorDraws, patient: Patient, catalog: Catalog,
                     rng: np.random.Generator, n_mc: int = 4000) -> float:
    """Monte Carlo estimate of P(y under TT > y under O) for one patient."""
    rows = np.array([query_row(patient, TT, catalog), query_row(patient, O, catalog)])
    return PosteriorPredictive(draws, rows).superiority(0, 1, n_mc, rng)


class SubgroupHazards:
    """Average hazards of mutation-tumor subgroups under every draw.

    Member covariates come from the enrolled roster; the arm is overridden
    by the queried arm. Duplicate profiles are evaluated once.
    """

    def __init__(self, draws: PosteriorDraws, patients: Sequence[Patient],
                 pairs: Sequence[MutationTumorPair], catalog: Catalog, horizon: HorizonConfig):
        self.pairs = [MutationTumorPair(*a) for a in pairs]
        index: dict[tuple, int] = {}
        rows = []
        self.members: list[dict[str, np.ndarray]] = []
        for a in self.pairs:
            group = [p for p in patients if pair_membership(p, a)]
            if not group:
                raise InputError(f"subgroup {a} is empty")
            per_arm = {}
            for arm in (O, TT):
                idx = []
                for p in group:
                    r = tuple(query_row(p, arm, catalog))
                    if r not in index:
                        index[r] = len(rows)
                        rows.append(r)
                    idx.append(index[r])
                per_arm[arm] = np.array(idx)
            self.members.append(per_arm)
        self.sizes = np.array([len(m[O]) for m in self.members])
        self.predictive = PosteriorPredictive(draws, np.array(rows))
        self.ah = self.predictive.average_hazard(horizon)

    def subgroup_ah(self, arm: str) -> np.ndarray:
        """(D, A) mean average hazard over each subgroup's members."""
        return np.stack([self.ah[:, m[arm]].mean(axis=1) for m in self.members], axis=1)

    def log_hazard_ratios(self) -> np.ndarray:
        return log_hazard_ratio(self.subgroup_ah(O), self.subgroup_ah(TT))


def log_hazard_ratio(ah_o: np.ndarray, ah_tt: np.ndarray) -> np.ndarray:
    """log(AH_O / AH_TT); 0/0 counts as no difference."""
    ah_o = np.asarray(ah_o, dtype=float)
    ah_tt = np.asarray(ah_tt, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ah_o) - np.log(ah_tt)
    out = np.where((ah_o == 0) & (ah_tt == 0), 0.0, out)
    return np.clip(out, -LOG_HR_CLIP, LOG_HR_CLIP)


def subgroup_average_hazard(draws: PosteriorDraws, d: int, pair: MutationTumorPair, arm: str,
                            patients: Sequence[Patient], catalog: Catalog,
                            horizon: HorizonConfig) -> float:
    sh = SubgroupHazards(_single(draws, d), patients, [pair], catalog, horizon)
    return float(sh.subgroup_ah(arm)[0, 0])


def hazard_ratio(draws: PosteriorDraws, d: int, pair: MutationTumorPair, patients: Sequence[Patient],
                 catalog: Catalog, horizon: HorizonConfig) -> float:
    sh = SubgroupHazards(_single(draws, d), patients, [pair], catalog, horizon)
    return float(np.exp(sh.log_hazard_ratios()[0, 0]))
