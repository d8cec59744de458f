"""Gaussian log densities with low-rank-plus-diagonal covariance."""

import numpy as np
import scipy.linalg as sla

LOG2PI = np.log(2.0 * np.pi)


def fa_logpdf(x, mu, loadings, psi):
    """Row-wise log MVN(x; mu, L L^T + diag(psi)).

    Uses the Woodbury identity and matrix determinant lemma with the q x q
    capacitance matrix ``I + L^T Psi^-1 L``; the p x p covariance is never
    formed. ``loadings`` may have zero columns (pure diagonal density).
    """
    x = np.atleast_2d(x)
    r = x - mu
    p = r.shape[1]
    ipsi = 1.0 / psi
    quad = np.einsum("ij,ij->i", r * ipsi, r)
    logdet = np.sum(np.log(psi))
    q = loadings.shape[1]
    if q:
        lp = loadings * ipsi[:, None]
        cap = np.eye(q) + loadings.T @ lp
        chol = np.linalg.cholesky(cap)
        w = sla.solve_triangular(chol, (r @ lp).T, lower=True)
        quad -= np.einsum("ij,ij->j", w, w)
        logdet += 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (p * LOG2PI + logdet + quad)


def dense_logpdf(x, mu, cov):
    """Reference evaluation through a dense Cholesky factor of ``cov``."""
    x = np.atleast_2d(x)
    chol = np.linalg.cholesky(cov)
    w = sla.solve_triangular(chol, (x - mu).T, lower=True)
    p = x.shape[1]
    return -0.5 * (p * LOG2PI + 2.0 * np.sum(np.log(np.diag(chol))) + np.sum(w * w, axis=0))
