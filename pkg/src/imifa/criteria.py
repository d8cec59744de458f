"""Posterior-simulation model selection criteria from sampled log-likelihoods."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CriterionMismatchError, InsufficientSamplesError, ValidationError

FINITE_Q_KINDS = ("FA", "MFA")


@dataclass(frozen=True)
class CriteriaInput:
    loglik: np.ndarray
    n: int
    p: int
    G: int = 1
    q: int = 0

    def __post_init__(self):
        ll = np.asarray(self.loglik, dtype=float).ravel()
        if ll.size == 0 or not np.all(np.isfinite(ll)):
            raise ValidationError("log-likelihood samples must be non-empty and finite")
        object.__setattr__(self, "loglik", ll)


def effective_params(G, p, q):
    """G (pq - q(q-1)/2 + 2p) + G - 1."""
    return G * (p * q - q * (q - 1) / 2 + 2 * p) + G - 1


def bic_mcmc(inp, kind="MFA"):
    """2 max(loglik) - k ln N, with k the effective number of MFA parameters."""
    if kind not in FINITE_Q_KINDS:
        raise CriterionMismatchError(f"BIC-MCMC needs a finite-q model (FA/MFA), got {kind}")
    return float(2.0 * inp.loglik.max()) - effective_params(inp.G, inp.p, inp.q) * math.log(inp.n)


def bicm(inp):
    """2 max(loglik) - 2 s^2 ln N with s^2 the sample variance (ddof=1) of loglik."""
    if inp.loglik.size < 2:
        raise InsufficientSamplesError("BICM needs at least two log-likelihood samples")
    return float(2.0 * inp.loglik.max() - 2.0 * inp.loglik.var(ddof=1) * math.log(inp.n))


def selection_criterion(kind):
    """Criterion used to pick among candidate fits of a model kind."""
    return "bic_mcmc" if kind in FINITE_Q_KINDS else "bicm"
