"""PPMx random-partition survival regression and its Gibbs sampler.

Patients are clustered by a product-partition prior tilted by covariate
similarity; each cluster carries a lognormal event-time model. Censored
times are imputed inside the sweep. The treatment arm enters as one more
categorical covariate, which is the only route through which the fitted
model can express treatment effects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .domain import TT, Catalog, InputError, Patient
from .similarity import CategoricalHyper, ContinuousHyper, log_similarity_categorical


@dataclass(frozen=True)
class CohesionConfig:
    M: float = 1.0

    def __post_init__(self):
        if not self.M > 0:
            raise InputError("mass parameter M must be positive")


@dataclass(frozen=True)
class SimilarityHyper:
    """Dirichlet weights per categorical covariate, in covariate-column order."""

    covariates: tuple[CategoricalHyper, ...]
    enabled: bool = True

    @property
    def p(self) -> int:
        return len(self.covariates)

    def padded(self) -> tuple[np.ndarray, np.ndarray, int]:
        L = max(len(h.alpha) for h in self.covariates) if self.covariates else 1
        alpha = np.ones((max(self.p, 1), L))
        for l, h in enumerate(self.covariates):
            alpha[l, :len(h.alpha)] = h.alpha
        alpha_sum = np.array([sum(h.alpha) for h in self.covariates]) if self.covariates else np.ones(1)
        return alpha, alpha_sum, L

    @classmethod
    def uniform(cls, levels: Sequence[int], weight: float = 1.0, enabled: bool = True):
        return cls(tuple(CategoricalHyper.uniform(n, weight) for n in levels), enabled)


@dataclass(frozen=True)
class MCMCConfig:
    iterations: int = 2000
    burn_in: int = 1000
    thin: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise InputError("iterations must exceed burn_in")
        if self.thin < 1 or self.burn_in < 0:
            raise InputError("thin must be >= 1 and burn_in >= 0")


@dataclass(frozen=True)
class ModelData:
    """Numeric view of a roster.

    ``cov`` holds integer covariate levels (-1 = NA): one binary column per
    aberration, then tumor type, then arm (O=0, TT=1) when ``with_arm``.
    ``logt`` is the log of the recorded time (event or censoring), NaN when
    no outcome has been observed yet.
    """

    cov: np.ndarray
    levels: tuple[int, ...]
    logt: np.ndarray
    censored: np.ndarray

    @property
    def n(self) -> int:
        return self.cov.shape[0]

    @property
    def has_outcome(self) -> np.ndarray:
        return ~np.isnan(self.logt)

    @classmethod
    def from_patients(cls, patients: Sequence[Patient], catalog: Catalog,
                      with_arm: bool = True) -> "ModelData":
        rows = [patient_covariates(p, catalog, with_arm=with_arm) for p in patients]
        levels = covariate_levels(catalog, with_arm)
        cov = np.array(rows, dtype=np.int64).reshape(len(rows), len(levels))
        logt = np.array([math.log(p.outcome.time) if p.outcome else np.nan for p in patients])
        cens = np.array([bool(p.outcome and p.outcome.censored) for p in patients])
        return cls(cov, levels, logt, cens)


def covariate_levels(catalog: Catalog, with_arm: bool = True) -> tuple[int, ...]:
    return (2,) * catalog.q + (catalog.n_tumors,) + ((2,) if with_arm else ())


def patient_covariates(p: Patient, catalog: Catalog, arm: Optional[str] = None,
                       with_arm: bool = True) -> list[int]:
    if len(p.mutations) != catalog.q or p.tumor >= catalog.n_tumors:
        raise InputError(f"patient {p.id} does not match the catalog dimensions")
    row = [-1 if e is None else e for e in p.mutations.entries] + [p.tumor]
    if with_arm:
        a = arm if arm is not None else p.arm
        row.append(-1 if a is None else int(a == TT))
    return row


@dataclass(frozen=True)
class LognormalPrior:
    """Conjugate prior of a cluster's (mu, sigma^2) on the log-time scale."""

    m: float = 0.0
    k: float = 0.1
    nu: float = 2.0
    s2: float = 1.0

    def __post_init__(self):
        ContinuousHyper(self.m, self.k, self.nu, self.s2)

    @classmethod
    def empirical(cls, data: ModelData, k: float = 0.1, nu: float = 2.0) -> "LognormalPrior":
        """Location and scale from the log of uncensored observed times."""
        obs = data.logt[data.has_outcome & ~data.censored]
        m = float(obs.mean()) if obs.size else 0.0
        s2 = float(obs.var(ddof=1)) if obs.size > 1 else 1.0
        if not s2 > 0:
            s2 = 1.0
        return cls(m, k, nu, s2)

    def predictive_scale2(self) -> float:
        return self.s2 * (1.0 + 1.0 / self.k)


@dataclass(frozen=True)
class PPMxModel:
    cohesion: CohesionConfig
    similarity: SimilarityHyper
    prior: LognormalPrior


@dataclass
class PartitionState:
    """Cluster labels (0..J-1), cluster parameters and current log times."""

    labels: np.ndarray
    mu: np.ndarray
    sig2: np.ndarray
    logy: np.ndarray

    @property
    def J(self) -> int:
        return len(self.mu)

    def check(self, data: Optional[ModelData] = None):
        J = self.J
        if J and set(np.unique(self.labels)) != set(range(J)):
            raise AssertionError("labels must be contiguous with nonempty clusters")
        if np.any(self.sig2 <= 0):
            raise AssertionError("cluster variances must be positive")
        if data is not None:
            cens = data.censored & data.has_outcome
            if np.any(self.logy[cens] <= data.logt[cens]):
                raise AssertionError("imputed time not above its censoring time")

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.J)


@dataclass
class PosteriorDraws:
    labels: np.ndarray
    J: np.ndarray
    mu: np.ndarray
    sig2: np.ndarray
    logy: np.ndarray
    data: ModelData
    model: PPMxModel
    config: MCMCConfig
    final_state: Optional[PartitionState] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.J)

    def __getitem__(self, d: int) -> PartitionState:
        J = int(self.J[d])
        return PartitionState(self.labels[d].copy(), self.mu[d, :J].copy(),
                              self.sig2[d, :J].copy(), self.logy[d].copy())

    def records(self) -> list[dict]:
        """One record per (draw, cluster) for diagnostics."""
        out = []
        for d in range(len(self)):
            sizes = np.bincount(self.labels[d], minlength=int(self.J[d]))
            for j in range(int(self.J[d])):
                out.append({"draw": d, "cluster": j, "size": int(sizes[j]),
                            "mu": float(self.mu[d, j]), "sig2": float(self.sig2[d, j])})
        return out


# -- partition prior -------------------------------------------------------

def partition_log_mass(labels: Sequence[int], cov: np.ndarray, cohesion: CohesionConfig,
                       similarity: SimilarityHyper) -> float:
    """Unnormalized log prior mass: sum over clusters of log g + log M(|S|-1)!."""
    labels = np.asarray(labels)
    cov = np.asarray(cov)
    total = 0.0
    for j in np.unique(labels):
        members = cov[labels == j]
        total += math.log(cohesion.M) + math.lgamma(len(members))
        if similarity.enabled:
            for l, h in enumerate(similarity.covariates):
                vals = [int(v) for v in members[:, l] if v >= 0]
                if vals:
                    total += log_similarity_categorical(vals, h)
    return total


# -- sampler ---------------------------------------------------------------

def _kernel_args(data: ModelData, model: PPMxModel):
    alpha, alpha_sum, L = model.similarity.padded()
    if model.similarity.p != data.cov.shape[1]:
        raise InputError("similarity hyperparameters do not match the covariate columns")
    pr = model.prior
    lik = data.has_outcome
    logc = np.where(lik, data.logt, -np.inf)
    return dict(cov=data.cov, L=L, alpha=alpha, alpha_sum=alpha_sum, lik=lik, logc=logc,
                censored=data.censored & lik, logM=math.log(model.cohesion.M),
                use_sim=model.similarity.enabled, m=pr.m, k=pr.k, nu=pr.nu, s2=pr.s2)


def initial_state(data: ModelData) -> PartitionState:
    """Nobody seated yet (label -1): the chain seats patients one by one, urn style."""
    logy = np.where(data.has_outcome, data.logt, 0.0)
    return PartitionState(np.full(data.n, -1, np.int64), np.zeros(0), np.zeros(0), logy.astype(float))


def extend_state(state: PartitionState, data: ModelData) -> PartitionState:
    """Warm start for a larger roster whose first patients match ``state``."""
    n_old = len(state.labels)
    if n_old > data.n:
        raise InputError("previous state has more patients than the data")
    labels = np.concatenate([state.labels, np.full(data.n - n_old, -1, np.int64)])
    logy = np.where(data.has_outcome, data.logt, 0.0)
    # keep previous imputations only where they are still valid
    keep = np.zeros(data.n, bool)
    keep[:n_old] = data.censored[:n_old] & (state.logy > np.nan_to_num(data.logt[:n_old], nan=-np.inf))
    logy[keep] = state.logy[keep[:n_old]]
    return PartitionState(labels, state.mu.copy(), state.sig2.copy(), logy.astype(float))


def _work_arrays(state: PartitionState, n: int):
    mu = np.zeros(n + 1)
    sig2 = np.ones(n + 1)
    mu[:state.J] = state.mu
    sig2[:state.J] = state.sig2
    return state.labels.astype(np.int64).copy(), mu, sig2, state.logy.astype(float).copy()


def reassign_probabilities(state: PartitionState, i: int, data: ModelData,
                           model: PPMxModel) -> tuple[np.ndarray, PartitionState]:
    """Normalized full conditional of patient i over existing clusters plus a new one.

    Returns the probabilities (last slot = new cluster) and the state with
    patient i detached (label -1, emptied cluster removed).
    """
    a = _kernel_args(data, model)
    labels, mu, sig2, logy = _work_arrays(state, data.n)
    sizes, counts, nrec = K.build_counts(labels, state.J, a["cov"], a["L"])
    J = K._detach(i, labels, sizes, counts, nrec, mu, sig2, a["cov"], state.J)
    buf = np.empty(J + 1)
    K.conditional_logw(i, sizes, counts, nrec, mu, sig2, J, a["cov"], a["alpha"], a["alpha_sum"],
                       logy, a["lik"], a["logM"], a["use_sim"], a["m"], a["k"], a["nu"], a["s2"], buf)
    w = np.exp(buf - buf.max())
    return w / w.sum(), PartitionState(labels, mu[:J].copy(), sig2[:J].copy(), logy)


def gibbs_reassign(state: PartitionState, i: int, data: ModelData, model: PPMxModel,
                   rng: np.random.Generator) -> PartitionState:
    a = _kernel_args(data, model)
    labels, mu, sig2, logy = _work_arrays(state, data.n)
    sizes, counts, nrec = K.build_counts(labels, state.J, a["cov"], a["L"])
    buf = np.empty(data.n + 1)
    J = K.reassign(i, labels, sizes, counts, nrec, mu, sig2, state.J, a["cov"], a["alpha"],
                   a["alpha_sum"], logy, a["lik"], a["logM"], a["use_sim"], a["m"], a["k"],
                   a["nu"], a["s2"], buf, rng)
    return PartitionState(labels, mu[:J].copy(), sig2[:J].copy(), logy)


def update_cluster_params(state: PartitionState, data: ModelData, model: PPMxModel,
                          rng: np.random.Generator) -> PartitionState:
    """Redraw every cluster's (mu, sigma^2) from its conjugate full conditional."""
    a = _kernel_args(data, model)
    mu, sig2 = state.mu.copy(), state.sig2.copy()
    K.update_params(state.labels.astype(np.int64), state.J, mu, sig2, state.logy, a["lik"],
                    a["m"], a["k"], a["nu"], a["s2"], rng)
    return replace(state, mu=mu, sig2=sig2)


def impute_censored(state: PartitionState, data: ModelData, rng: np.random.Generator) -> PartitionState:
    logy = state.logy.copy()
    cens = data.censored & data.has_outcome
    if not cens.any():
        return replace(state, logy=logy)
    K.impute(state.labels.astype(np.int64), state.mu, state.sig2, logy,
             np.where(cens, data.logt, -np.inf), cens, rng)
    return replace(state, logy=logy)


def default_model(data: ModelData, M: float = 1.0, dirichlet_weight: float = 1.0,
                  k: float = 0.1, nu: float = 2.0, use_similarity: bool = True,
                  arm_weight: Optional[float] = None) -> PPMxModel:
    """Empirical-Bayes model.

    ``arm_weight`` overrides the Dirichlet weight of the last covariate
    column, which is the arm whenever the data were built with it.
    """
    sim = SimilarityHyper.uniform(data.levels, dirichlet_weight, use_similarity)
    if arm_weight is not None:
        cov = sim.covariates[:-1] + (CategoricalHyper.uniform(data.levels[-1], arm_weight),)
        sim = SimilarityHyper(cov, use_similarity)
    return PPMxModel(CohesionConfig(M), sim, LognormalPrior.empirical(data, k, nu))


def mcmc_run(data: ModelData, config: MCMCConfig, model: Optional[PPMxModel] = None,
             rng: Optional[np.random.Generator] = None,
             init: Optional[PartitionState] = None) -> PosteriorDraws:
    """Run the Gibbs sampler and keep every ``thin``-th sweep after burn-in.

    Unseated patients (label -1 in ``init``, everyone by default) are first
    placed sequentially from their full conditionals. Each sweep imputes censored times, reassigns every patient in index
    order, then redraws all cluster parameters.
    """
    if data.n == 0:
        raise InputError("cannot fit an empty dataset")
    if model is None:
        model = default_model(data)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    a = _kernel_args(data, model)
    state = init if init is not None else initial_state(data)
    labels, mu, sig2, logy = _work_arrays(state, data.n)
    out_labels, out_J, out_mu, out_sig2, out_logy, J = K.run_chain(
        labels, mu, sig2, state.J, a["cov"], a["L"], a["alpha"], a["alpha_sum"], logy,
        a["logc"], a["censored"], a["lik"], a["logM"], a["use_sim"], a["m"], a["k"],
        a["nu"], a["s2"], config.iterations, config.burn_in, config.thin, rng)
    final = PartitionState(labels, mu[:J].copy(), sig2[:J].copy(), logy)
    return PosteriorDraws(out_labels, out_J, out_mu, out_sig2, out_logy, data, model, config, final)
