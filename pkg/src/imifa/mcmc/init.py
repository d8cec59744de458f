"""Starting partitions: diagonal-covariance EM-GMM, k-means, random."""

from __future__ import annotations

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

VAR_FLOOR = 1e-6


def kmeans_labels(x, G, rng):
    if G == 1:
        return np.zeros(x.shape[0], dtype=int)
    _, labels = kmeans2(x, G, minit="++", seed=rng.gen)
    return labels


def _diag_loglik(x, means, variances, weights):
    # (N, G) joint log densities
    ll = -0.5 * (
        np.log(2 * np.pi * variances).sum(axis=1)[None, :]
        + (((x[:, None, :] - means[None]) ** 2) / variances[None]).sum(axis=2)
    )
    return ll + np.log(weights)[None, :]


def diag_gmm(x, G, rng, max_iter=200, tol=1e-6):
    """EM for a diagonal-covariance Gaussian mixture started from k-means.

    Returns ``(labels, loglik, converged)``.
    """
    n, p = x.shape
    labels = kmeans_labels(x, G, rng)
    resp = np.zeros((n, G))
    resp[np.arange(n), labels] = 1.0
    floor = VAR_FLOOR * max(x.var(axis=0).mean(), 1e-12)
    prev = -np.inf
    converged = False
    for _ in range(max_iter):
        nk = resp.sum(axis=0) + 1e-10
        weights = nk / n
        means = resp.T @ x / nk[:, None]
        variances = resp.T @ (x * x) / nk[:, None] - means**2
        variances = np.maximum(variances, floor)
        joint = _diag_loglik(x, means, variances, weights)
        norm = logsumexp(joint, axis=1)
        loglik = norm.sum()
        resp = np.exp(joint - norm[:, None])
        if not np.isfinite(loglik):
            break
        if abs(loglik - prev) <= tol * abs(loglik):
            converged = True
            break
        prev = loglik
    return np.argmax(resp, axis=1), loglik, converged


def gmm_bic(loglik, n, p, G):
    k = G * 2 * p + G - 1
    return 2 * loglik - k * np.log(n)


def initial_partition(x, G, method, rng, select_upto=None):
    """Labels in 0..G'-1, relabelled so cluster sizes are non-increasing.

    With ``select_upto`` the number of components is chosen by BIC over
    ``1..select_upto`` (gmm only). Returns ``(labels, warning)``.
    """
    n = x.shape[0]
    warning = None
    if method == "random":
        labels = rng.gen.integers(0, G, size=n)
    elif method == "kmeans":
        labels = kmeans_labels(x, G, rng)
    else:
        candidates = [G] if select_upto is None else range(1, select_upto + 1)
        best = None
        for k in candidates:
            lab, ll, ok = diag_gmm(x, k, rng)
            if not ok or not np.isfinite(ll):
                continue
            score = gmm_bic(ll, n, x.shape[1], k)
            if best is None or score > best[0]:
                best = (score, lab)
        if best is None:
            warning = "EM-GMM initialisation failed to converge; fell back to k-means"
            k = G if select_upto is None else min(G, select_upto)
            labels = kmeans_labels(x, k, rng)
        else:
            labels = best[1]
    sizes = np.bincount(labels)
    order = np.argsort(-sizes, kind="stable")
    order = order[sizes[order] > 0]
    remap = np.empty(sizes.size, dtype=int)
    remap[order] = np.arange(order.size)
    return remap[labels], warning
