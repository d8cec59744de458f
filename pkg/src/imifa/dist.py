"""Seedable random sampling primitives.

Every sampler takes an :class:`RngStream` as its first argument. Gamma and
inverse-gamma distributions are parameterised by shape and *rate* throughout.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import FactorizationError, NoSupportError, ValidationError

__all__ = [
    "RngStream",
    "sample_mvn",
    "sample_scalar",
    "gamma",
    "inv_gamma",
    "beta",
    "uniform",
    "dirichlet",
    "gumbel_max_categorical",
    "gumbel_max_rows",
]


class RngStream:
    """Single-owner random stream backed by a PCG64 generator.

    Sub-streams for parallel sections are derived with :meth:`spawn`; they are
    reproducible given the parent seed and statistically independent.
    """

    def __init__(self, seed=None, *, _seq=None):
        if _seq is None:
            _seq = np.random.SeedSequence(seed)
        self._seq = _seq
        self.seed = _seq.entropy
        self.gen = np.random.Generator(np.random.PCG64(_seq))

    def spawn(self, n):
        return [RngStream(_seq=s) for s in self._seq.spawn(n)]

    def __repr__(self):
        return f"RngStream(seed={self.seed})"


def _cholesky(mat, what="matrix"):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{what} is not positive definite") from exc


def sample_mvn(rng, mean, cov=None, prec=None, size=None):
    """Draw from MVN(mean, cov), or MVN(mean, prec^-1) when ``prec`` is given.

    With a precision matrix the draw is ``mean + L^-T z`` where ``L L^T = prec``,
    so no inverse is ever formed.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if (cov is None) == (prec is None):
        raise ValidationError("supply exactly one of cov or prec")
    mat = np.atleast_2d(np.asarray(cov if prec is None else prec, dtype=float))
    q = mean.shape[0]
    if mat.shape != (q, q):
        raise ValidationError(f"matrix shape {mat.shape} does not match mean length {q}")
    if not np.allclose(mat, mat.T, atol=1e-10, rtol=0):
        raise ValidationError("matrix is not symmetric")
    chol = _cholesky(mat, "covariance" if prec is None else "precision")
    shape = (q,) if size is None else (size, q)
    z = rng.gen.standard_normal(shape)
    if prec is None:
        return mean + z @ chol.T
    # x = L^-T z, row-wise
    return mean + sla.solve_triangular(chol, z.T, lower=True, trans="T").T


def _positive(**params):
    for name, value in params.items():
        if not np.all(np.asarray(value) > 0):
            raise ValidationError(f"{name} must be strictly positive, got {value}")


def gamma(rng, shape, rate, size=None):
    _positive(shape=shape, rate=rate)
    return rng.gen.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def inv_gamma(rng, shape, rate, size=None):
    """Inverse gamma: the reciprocal of a Ga(shape, rate) draw."""
    _positive(shape=shape, rate=rate)
    return np.asarray(rate, dtype=float) / rng.gen.gamma(shape, 1.0, size)


def beta(rng, a, b, size=None):
    _positive(a=a, b=b)
    return rng.gen.beta(a, b, size)


def uniform(rng, lo, hi, size=None):
    if not np.all(np.asarray(lo) < np.asarray(hi)):
        raise ValidationError(f"uniform needs lo < hi, got ({lo}, {hi})")
    return rng.gen.uniform(lo, hi, size)


def dirichlet(rng, alpha):
    """Dirichlet draw built from normalised gammas; valid for tiny concentrations."""
    alpha = np.asarray(alpha, dtype=float)
    _positive(alpha=alpha)
    # log-space via Ga(a+1) * U^(1/a) keeps precision for alpha << 1
    logg = np.log(rng.gen.gamma(alpha + 1.0)) + np.log(rng.gen.uniform(size=alpha.shape)) / alpha
    logg -= logg.max()
    w = np.exp(logg)
    return w / w.sum()


_SCALAR = {
    "gamma": gamma,
    "inverse-gamma": inv_gamma,
    "inv_gamma": inv_gamma,
    "beta": beta,
    "uniform": uniform,
    "dirichlet": dirichlet,
}


def sample_scalar(rng, dist, *params, size=None):
    """Dispatch by distribution name, e.g. ``sample_scalar(rng, "gamma", 2, 1)``."""
    try:
        fn = _SCALAR[dist]
    except KeyError:
        raise ValidationError(f"unknown distribution {dist!r}") from None
    if dist == "dirichlet":
        return fn(rng, *params)
    return fn(rng, *params, size=size)


def gumbel_max_categorical(rng, log_weights):
    """Return ``argmax_j(log_weights[j] + Gumbel noise)`` (0-based).

    The result is distributed as ``softmax(log_weights)``. Entries may be -inf.
    """
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        raise NoSupportError("all log weights are -inf")
    return int(np.argmax(lw + rng.gen.gumbel(size=lw.shape)))


def gumbel_max_rows(rng, log_weights):
    """Row-wise Gumbel-max over an (n, k) matrix of unnormalised log weights."""
    lw = np.asarray(log_weights, dtype=float)
    if not np.all(np.any(np.isfinite(lw), axis=1)):
        raise NoSupportError("a row has no finite log weight")
    return np.argmax(lw + rng.gen.gumbel(size=lw.shape), axis=1)
