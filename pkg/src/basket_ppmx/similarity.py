"""Covariate similarity functions for the PPMx partition prior.

Each similarity is the marginal likelihood of a cluster's covariate values
under a conjugate auxiliary model. Everything is evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .domain import InputError


@dataclass(frozen=True)
class CategoricalHyper:
    """Dirichlet weights over the ``len(alpha)`` category levels (0-based)."""

    alpha: tuple[float, ...]

    def __post_init__(self):
        if len(self.alpha) < 1 or any(not a > 0 for a in self.alpha):
            raise InputError("Dirichlet weights must be strictly positive")

    @classmethod
    def uniform(cls, levels: int, weight: float = 1.0) -> "CategoricalHyper":
        return cls((weight,) * levels)


@dataclass(frozen=True)
class ContinuousHyper:
    """Normal / scaled-inverse-chi-square: v ~ Inv-chi2(nu, s2), mu | v ~ N(m, v / k)."""

    m: float = 0.0
    k: float = 1.0
    nu: float = 1.0
    s2: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and self.nu > 0 and self.s2 > 0):
            raise InputError("k, nu and s2 must be strictly positive")


@dataclass(frozen=True)
class CountHyper:
    """Gamma(shape, rate) prior on a Poisson rate."""

    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise InputError("gamma shape and rate must be strictly positive")


CovariateHyper = Union[CategoricalHyper, ContinuousHyper, CountHyper]


def log_similarity_categorical(values: Sequence[int], hyper: CategoricalHyper) -> float:
    alpha = np.asarray(hyper.alpha, dtype=float)
    counts = np.zeros(len(alpha))
    for v in values:
        if not (0 <= v < len(alpha)) or int(v) != v:
            raise InputError(f"category {v!r} outside 0..{len(alpha) - 1}")
        counts[int(v)] += 1
    n = counts.sum()
    return float(gammaln(alpha.sum()) - gammaln(alpha.sum() + n)
                 + np.sum(gammaln(alpha + counts) - gammaln(alpha)))


def similarity_categorical(values: Sequence[int], hyper: CategoricalHyper) -> float:
    return math.exp(log_similarity_categorical(values, hyper))


def _nix_posterior(x: np.ndarray, h: ContinuousHyper) -> tuple[float, float, float, float]:
    n = len(x)
    if n == 0:
        return h.m, h.k, h.nu, h.s2
    xbar = float(x.mean())
    ss = float(np.sum((x - xbar) ** 2))
    kn = h.k + n
    nun = h.nu + n
    mn = (h.k * h.m + n * xbar) / kn
    s2n = (h.nu * h.s2 + ss + h.k * n / kn * (xbar - h.m) ** 2) / nun
    return mn, kn, nun, s2n


def log_similarity_continuous(values: Sequence[float], hyper: ContinuousHyper) -> float:
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n == 0:
        return 0.0
    _, kn, nun, s2n = _nix_posterior(x, hyper)
    h = hyper
    return float(gammaln(nun / 2) - gammaln(h.nu / 2) + 0.5 * math.log(h.k / kn)
                 + (h.nu / 2) * math.log(h.nu * h.s2) - (nun / 2) * math.log(nun * s2n)
                 - (n / 2) * math.log(math.pi))


def similarity_continuous(values: Sequence[float], hyper: ContinuousHyper) -> float:
    return math.exp(log_similarity_continuous(values, hyper))


def log_similarity_count(values: Sequence[int], hyper: CountHyper) -> float:
    x = np.asarray(values, dtype=float)
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise InputError("count covariates must be nonnegative integers")
    n, s = len(x), float(x.sum())
    a, b = hyper.shape, hyper.rate
    return float(a * math.log(b) - gammaln(a) + gammaln(a + s) - (a + s) * math.log(b + n)
                 - np.sum(gammaln(x + 1)))


def similarity_count(values: Sequence[int], hyper: CountHyper) -> float:
    return math.exp(log_similarity_count(values, hyper))


def log_similarity(values: Sequence, hyper: CovariateHyper) -> float:
    if isinstance(hyper, CategoricalHyper):
        return log_similarity_categorical(values, hyper)
    if isinstance(hyper, ContinuousHyper):
        return log_similarity_continuous(values, hyper)
    if isinstance(hyper, CountHyper):
        return log_similarity_count(values, hyper)
    raise TypeError(f"unsupported hyperparameter type {type(hyper).__name__}")


def log_product_similarity(rows: Sequence[Sequence[Optional[float]]],
                           hypers: Sequence[CovariateHyper]) -> float:
    """Product over covariates of the per-covariate similarity, NA entries dropped."""
    total = 0.0
    for l, hyper in enumerate(hypers):
        vals = [r[l] for r in rows if r[l] is not None]
        if vals:
            total += log_similarity(vals, hyper)
    return total


def product_similarity(rows, hypers) -> float:
    return math.exp(log_product_similarity(rows, hypers))


def similarity_bayes_identity_check(values: Sequence, hyper: CovariateHyper, probe) -> float:
    """Evaluate the marginal as prod q(x|probe) q(probe) / q(probe | x).

    Independent of the closed forms above: uses scipy densities only. The
    result must not depend on the probe.
    """
    x = np.asarray(values, dtype=float)
    if isinstance(hyper, CategoricalHyper):
        alpha = np.asarray(hyper.alpha, dtype=float)
        xi = np.atleast_1d(np.asarray(probe, dtype=float))
        if len(alpha) == 2 and xi.size == 1:
            xi = np.array([xi[0], 1.0 - xi[0]])
        if xi.shape != alpha.shape or np.any(xi <= 0) or not math.isclose(xi.sum(), 1.0):
            raise InputError("probe must lie in the open simplex")
        counts = np.bincount(x.astype(int), minlength=len(alpha)).astype(float)
        log_lik = float(np.sum(counts * np.log(xi)))
        log_prior = stats.dirichlet.logpdf(xi, alpha)
        log_post = stats.dirichlet.logpdf(xi, alpha + counts)
    elif isinstance(hyper, ContinuousHyper):
        mu, v = probe
        if not v > 0:
            raise InputError("probe variance must be positive")
        h = hyper
        mn, kn, nun, s2n = _nix_posterior(x, h)
        log_lik = float(np.sum(stats.norm.logpdf(x, mu, math.sqrt(v))))
        log_prior = _nix_logpdf(mu, v, h.m, h.k, h.nu, h.s2)
        log_post = _nix_logpdf(mu, v, mn, kn, nun, s2n)
    elif isinstance(hyper, CountHyper):
        lam = float(probe)
        if not lam > 0:
            raise InputError("probe rate must be positive")
        a, b = hyper.shape, hyper.rate
        log_lik = float(np.sum(stats.poisson.logpmf(x.astype(int), lam)))
        log_prior = stats.gamma.logpdf(lam, a, scale=1.0 / b)
        log_post = stats.gamma.logpdf(lam, a + x.sum(), scale=1.0 / (b + len(x)))
    else:
        raise TypeError(f"unsupported hyperparameter type {type(hyper).__name__}")
    if not np.isfinite(log_prior):
        raise InputError("probe has zero prior density")
    return math.exp(log_lik + log_prior - log_post)


def _nix_logpdf(mu, v, m, k, nu, s2) -> float:
    # scaled-inv-chi2(nu, s2) on v is InvGamma(nu/2, nu*s2/2)
    lp_v = stats.invgamma.logpdf(v, nu / 2, scale=nu * s2 / 2)
    lp_mu = stats.norm.logpdf(mu, m, math.sqrt(v / k))
    return float(lp_v + lp_mu)
