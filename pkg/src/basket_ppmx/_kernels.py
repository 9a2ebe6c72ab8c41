"""Compiled inner loops for the PPMx sampler and predictive summaries.

State layout shared by all kernels (n patients, p covariates, L max levels):

    labels  (n,)        cluster index in 0..J-1, -1 while a patient is detached
    sizes   (n,)        cluster sizes, first J slots used
    counts  (n, p, L)   per-cluster level counts of recorded covariates
    nrec    (n, p)      per-cluster number of recorded values per covariate
    mu, sig2 (n,)       cluster lognormal parameters on the log-time scale

Covariates are integer levels with -1 for not recorded.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def norm_cdf(z):
    return 0.5 * math.erfc(-z / SQRT2)


@njit(cache=True)
def norm_sf(z):
    return 0.5 * math.erfc(z / SQRT2)


@njit(cache=True)
def t_logpdf(x, nu, loc, scale2):
    r = (x - loc) ** 2 / (nu * scale2)
    return (math.lgamma((nu + 1.0) / 2.0) - math.lgamma(nu / 2.0)
            - 0.5 * math.log(nu * math.pi * scale2) - (nu + 1.0) / 2.0 * math.log1p(r))


@njit(cache=True)
def draw_nix(rng, m, k, nu, s2, n, xbar, ss):
    """Draw (mu, v) from the normal / scaled-inv-chi2 posterior given n values."""
    if n > 0:
        kn = k + n
        nun = nu + n
        mn = (k * m + n * xbar) / kn
        s2n = (nu * s2 + ss + k * n / kn * (xbar - m) ** 2) / nun
    else:
        kn, nun, mn, s2n = k, nu, m, s2
    chi2 = 2.0 * rng.standard_gamma(nun / 2.0)
    v = nun * s2n / chi2
    mu = mn + math.sqrt(v / kn) * rng.standard_normal()
    return mu, v


@njit(cache=True)
def trunc_normal_below(rng, a):
    """Standard normal conditioned on z > a (Robert 1995)."""
    if a < 0.45:
        while True:
            z = rng.standard_normal()
            if z > a:
                return z
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.standard_exponential() / lam
        if z > a and rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
            return z


@njit(cache=True)
def build_counts(labels, J, cov, L):
    n, p = cov.shape
    sizes = np.zeros(n, np.int64)
    counts = np.zeros((n, p, L), np.int64)
    nrec = np.zeros((n, p), np.int64)
    for i in range(n):
        c = labels[i]
        if c < 0:
            continue
        sizes[c] += 1
        for l in range(p):
            x = cov[i, l]
            if x >= 0:
                counts[c, l, x] += 1
                nrec[c, l] += 1
    return sizes, counts, nrec


@njit(cache=True)
def _detach(i, labels, sizes, counts, nrec, mu, sig2, cov, J):
    c = labels[i]
    p = cov.shape[1]
    sizes[c] -= 1
    for l in range(p):
        x = cov[i, l]
        if x >= 0:
            counts[c, l, x] -= 1
            nrec[c, l] -= 1
    labels[i] = -1
    if sizes[c] == 0:
        last = J - 1
        if c != last:
            sizes[c] = sizes[last]
            counts[c, :, :] = counts[last, :, :]
            nrec[c, :] = nrec[last, :]
            mu[c] = mu[last]
            sig2[c] = sig2[last]
            for h in range(labels.shape[0]):
                if labels[h] == last:
                    labels[h] = c
        sizes[last] = 0
        counts[last, :, :] = 0
        nrec[last, :] = 0
        J -= 1
    return J


@njit(cache=True)
def _attach(i, c, labels, sizes, counts, nrec, cov):
    labels[i] = c
    sizes[c] += 1
    for l in range(cov.shape[1]):
        x = cov[i, l]
        if x >= 0:
            counts[c, l, x] += 1
            nrec[c, l] += 1


@njit(cache=True)
def conditional_logw(i, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
                     logy, lik, logM, use_sim, m, k, nu, s2, out):
    """Unnormalized log full conditional of patient i (already detached).

    Slots 0..J-1 are existing clusters, slot J the new cluster.
    """
    p = cov.shape[1]
    for j in range(J):
        lw = math.log(sizes[j])
        if use_sim:
            for l in range(p):
                x = cov[i, l]
                if x >= 0:
                    lw += math.log(alpha[l, x] + counts[j, l, x]) - math.log(alpha_sum[l] + nrec[j, l])
        if lik[i]:
            d = logy[i] - mu[j]
            lw += -0.5 * (LOG_2PI + math.log(sig2[j])) - 0.5 * d * d / sig2[j]
        out[j] = lw
    lw = logM
    if use_sim:
        for l in range(p):
            x = cov[i, l]
            if x >= 0:
                lw += math.log(alpha[l, x]) - math.log(alpha_sum[l])
    if lik[i]:
        lw += t_logpdf(logy[i], nu, m, s2 * (1.0 + 1.0 / k))
    out[J] = lw


@njit(cache=True)
def sample_log_categorical(rng, logw, K):
    mx = logw[0]
    for j in range(1, K):
        if logw[j] > mx:
            mx = logw[j]
    tot = 0.0
    for j in range(K):
        tot += math.exp(logw[j] - mx)
    u = rng.random() * tot
    acc = 0.0
    for j in range(K):
        acc += math.exp(logw[j] - mx)
        if u < acc:
            return j
    return K - 1


@njit(cache=True)
def reassign(i, labels, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
             logy, lik, logM, use_sim, m, k, nu, s2, buf, rng):
    J = _detach(i, labels, sizes, counts, nrec, mu, sig2, cov, J)
    conditional_logw(i, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
                     logy, lik, logM, use_sim, m, k, nu, s2, buf)
    c = sample_log_categorical(rng, buf, J + 1)
    if c == J:
        if lik[i]:
            mu[J], sig2[J] = draw_nix(rng, m, k, nu, s2, 1, logy[i], 0.0)
        else:
            mu[J], sig2[J] = draw_nix(rng, m, k, nu, s2, 0, 0.0, 0.0)
        J += 1
    _attach(i, c, labels, sizes, counts, nrec, cov)
    return J


@njit(cache=True)
def place_unassigned(labels, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
                     logy, lik, logM, use_sim, m, k, nu, s2, buf, rng):
    """Sequentially seat every patient with label -1 given those already seated."""
    for i in range(labels.shape[0]):
        if labels[i] >= 0:
            continue
        conditional_logw(i, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
                         logy, lik, logM, use_sim, m, k, nu, s2, buf)
        c = sample_log_categorical(rng, buf, J + 1)
        if c == J:
            if lik[i]:
                mu[J], sig2[J] = draw_nix(rng, m, k, nu, s2, 1, logy[i], 0.0)
            else:
                mu[J], sig2[J] = draw_nix(rng, m, k, nu, s2, 0, 0.0, 0.0)
            J += 1
        _attach(i, c, labels, sizes, counts, nrec, cov)
    return J


@njit(cache=True)
def update_params(labels, J, mu, sig2, logy, lik, m, k, nu, s2, rng):
    n = labels.shape[0]
    cnt = np.zeros(J, np.int64)
    s = np.zeros(J)
    for i in range(n):
        if lik[i]:
            cnt[labels[i]] += 1
            s[labels[i]] += logy[i]
    ss = np.zeros(J)
    for i in range(n):
        if lik[i]:
            c = labels[i]
            d = logy[i] - s[c] / cnt[c]
            ss[c] += d * d
    for j in range(J):
        xbar = s[j] / cnt[j] if cnt[j] > 0 else 0.0
        mu[j], sig2[j] = draw_nix(rng, m, k, nu, s2, cnt[j], xbar, ss[j])


@njit(cache=True)
def impute(labels, mu, sig2, logy, logc, censored, rng):
    for i in range(labels.shape[0]):
        if censored[i]:
            c = labels[i]
            sd = math.sqrt(sig2[c])
            a = (logc[i] - mu[c]) / sd
            logy[i] = mu[c] + sd * trunc_normal_below(rng, a)


@njit(cache=True)
def run_chain(labels, mu, sig2, J, cov, L, alpha, alpha_sum, logy, logc, censored, lik,
              logM, use_sim, m, k, nu, s2, n_iter, burn_in, thin, rng):
    n = labels.shape[0]
    sizes, counts, nrec = build_counts(labels, J, cov, L)
    n_draws = 0
    for it in range(burn_in, n_iter):
        if (it - burn_in + 1) % thin == 0:
            n_draws += 1
    out_labels = np.empty((n_draws, n), np.int64)
    out_J = np.empty(n_draws, np.int64)
    out_mu = np.zeros((n_draws, n))
    out_sig2 = np.zeros((n_draws, n))
    out_logy = np.empty((n_draws, n))
    buf = np.empty(n + 1)
    J = place_unassigned(labels, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
                         logy, lik, logM, use_sim, m, k, nu, s2, buf, rng)
    d = 0
    for it in range(n_iter):
        impute(labels, mu, sig2, logy, logc, censored, rng)
        for i in range(n):
            J = reassign(i, labels, sizes, counts, nrec, mu, sig2, J, cov, alpha, alpha_sum,
                         logy, lik, logM, use_sim, m, k, nu, s2, buf, rng)
        update_params(labels, J, mu, sig2, logy, lik, m, k, nu, s2, rng)
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            out_labels[d] = labels
            out_J[d] = J
            out_mu[d, :J] = mu[:J]
            out_sig2[d, :J] = sig2[:J]
            out_logy[d] = logy
            d += 1
    return out_labels, out_J, out_mu, out_sig2, out_logy, J


# -- predictive ------------------------------------------------------------

@njit(cache=True)
def membership_weights(labels, Js, cov, L, alpha, alpha_sum, logM, use_sim, queries):
    """Normalized cluster-membership weights of each query row for each draw.

    Returns (W, Wnew) with W[d, q, j] for existing clusters (zero beyond J_d)
    and Wnew[d, q] for the new-cluster slot.
    """
    D = labels.shape[0]
    Q, p = queries.shape
    Jmax = 0
    for d in range(D):
        if Js[d] > Jmax:
            Jmax = Js[d]
    W = np.zeros((D, Q, Jmax))
    Wnew = np.zeros((D, Q))
    lw = np.empty(Jmax + 1)
    for d in range(D):
        J = Js[d]
        sizes, counts, nrec = build_counts(labels[d], J, cov, L)
        for q in range(Q):
            for j in range(J):
                v = math.log(sizes[j])
                if use_sim:
                    for l in range(p):
                        x = queries[q, l]
                        if x >= 0:
                            v += math.log(alpha[l, x] + counts[j, l, x]) - math.log(alpha_sum[l] + nrec[j, l])
                lw[j] = v
            v = logM
            if use_sim:
                for l in range(p):
                    x = queries[q, l]
                    if x >= 0:
                        v += math.log(alpha[l, x]) - math.log(alpha_sum[l])
            lw[J] = v
            mx = lw[0]
            for j in range(1, J + 1):
                if lw[j] > mx:
                    mx = lw[j]
            tot = 0.0
            for j in range(J + 1):
                tot += math.exp(lw[j] - mx)
            for j in range(J):
                W[d, q, j] = math.exp(lw[j] - mx) / tot
            Wnew[d, q] = math.exp(lw[J] - mx) / tot
    return W, Wnew


@njit(cache=True)
def mixture_cdf_sf(W, Wnew, mu, sig2, Js, logt, cdf_new, sf_new):
    """Mixture c.d.f. and survival at log time ``logt`` for every (draw, query)."""
    D, Q, _ = W.shape
    F = np.zeros((D, Q))
    S = np.zeros((D, Q))
    for d in range(D):
        for q in range(Q):
            f = Wnew[d, q] * cdf_new
            s = Wnew[d, q] * sf_new
            for j in range(Js[d]):
                w = W[d, q, j]
                if w > 0.0:
                    z = (logt - mu[d, j]) / math.sqrt(sig2[d, j])
                    f += w * norm_cdf(z)
                    s += w * norm_sf(z)
            F[d, q] = f
            S[d, q] = s
    return F, S


@njit(cache=True)
def _sample_component(rng, w, wnew, mu_d, sig2_d, J, m, k, nu, s2):
    u = rng.random()
    acc = 0.0
    for j in range(J):
        acc += w[j]
        if u < acc:
            return mu_d[j] + math.sqrt(sig2_d[j]) * rng.standard_normal()
    mu0, v0 = draw_nix(rng, m, k, nu, s2, 0, 0.0, 0.0)
    return mu0 + math.sqrt(v0) * rng.standard_normal()


@njit(cache=True)
def predictive_log_samples(W, Wnew, mu, sig2, Js, q, m, k, nu, s2, n_samples, rng):
    D = W.shape[0]
    out = np.empty(n_samples)
    for r in range(n_samples):
        d = min(int(rng.random() * D), D - 1)
        out[r] = _sample_component(rng, W[d, q], Wnew[d, q], mu[d], sig2[d], Js[d], m, k, nu, s2)
    return out


@njit(cache=True)
def superiority(W, Wnew, mu, sig2, Js, q_tt, q_o, m, k, nu, s2, n_mc, rng):
    """Fraction of replicates with TT outcome above the O outcome, both drawn from one draw."""
    D = W.shape[0]
    hits = 0
    for r in range(n_mc):
        d = min(int(rng.random() * D), D - 1)
        y1 = _sample_component(rng, W[d, q_tt], Wnew[d, q_tt], mu[d], sig2[d], Js[d], m, k, nu, s2)
        y0 = _sample_component(rng, W[d, q_o], Wnew[d, q_o], mu[d], sig2[d], Js[d], m, k, nu, s2)
        if y1 > y0:
            hits += 1
    return hits / n_mc
