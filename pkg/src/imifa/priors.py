"""Prior hyperparameters: uniqueness rates, MGP shrinkage, process priors, defaults."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShrinkageConditionError, ValidationError

LEARN = "learn"
PROCESS_KINDS = ("finite-dirichlet", "overfitted", "dp", "py")


@dataclass(frozen=True)
class UniquenessPrior:
    """IG(shape, rate_j) prior on uniquenesses; ``rate`` has length 1 when isotropic."""

    shape: float
    rate: np.ndarray
    isotropic: bool = False
    singular: bool = False

    def __post_init__(self):
        rate = np.atleast_1d(np.asarray(self.rate, dtype=float))
        object.__setattr__(self, "rate", rate)
        if not self.shape > 1:
            raise ValidationError(f"uniqueness shape must exceed 1, got {self.shape}")
        if not np.all(rate > 0):
            raise ValidationError("uniqueness rates must be positive")
        if self.isotropic and rate.size != 1:
            raise ValidationError("isotropic uniquenesses take a single rate")

    def rates(self, p):
        return np.broadcast_to(self.rate, (p,)).copy()


def derive_uniqueness_rates(sample_cov, shape=2.5, isotropic=False, n_obs=None):
    """Data-driven IG rates ``beta_j = (shape - 1) / (S^-1)_jj``.

    The isotropic rate uses the geometric mean of the pseudoinverse diagonal, so
    the prior determinant of Psi matches the variable-specific one. Isotropy is
    forced when ``n_obs <= p`` or when S is singular (the latter with a warning).
    """
    if not shape > 1:
        raise ValidationError(f"uniqueness shape must exceed 1, got {shape}")
    s = np.atleast_2d(np.asarray(sample_cov, dtype=float))
    p = s.shape[0]
    if s.shape != (p, p) or not np.allclose(s, s.T, atol=1e-10):
        raise ValidationError("sample covariance must be square and symmetric")
    if n_obs is not None and n_obs <= p:
        isotropic = True
    singular = np.linalg.matrix_rank(s) < p
    if singular and not isotropic:
        warnings.warn("sample covariance is singular; using isotropic pseudoinverse rate", RuntimeWarning)
        isotropic = True
    if isotropic:
        diag = np.diag(np.linalg.pinv(s, hermitian=True))
        if not np.all(diag > 0):
            raise ValidationError("pseudoinverse diagonal is not positive")
        rate = (shape - 1.0) / np.exp(np.mean(np.log(diag)))
        return UniquenessPrior(shape, np.array([rate]), True, singular)
    rate = (shape - 1.0) / np.diag(np.linalg.inv(s))
    return UniquenessPrior(shape, rate, False, False)


@dataclass(frozen=True)
class MgpHyper:
    nu: float = 3.0
    alpha1: float = 2.1
    beta1: float = 1.0
    alpha2: float = 3.1
    beta2: float = 1.0
    b0: float = 0.1
    b1: float = 5e-5
    epsilon: float = 0.1
    prop: float | None = None
    adapt_after_burnin: bool = False

    def resolve(self, p):
        """Fill the default proportion floor(0.7 p) / p."""
        if self.prop is not None:
            return self
        return replace(self, prop=max(math.floor(0.7 * p), 1) / p)

    def adapt_prob(self, t):
        return math.exp(-self.b0 - self.b1 * t)


def validate_mgp(h, p=None):
    """Check positivity and the cumulative shrinkage condition alpha2 > beta2 + 1."""
    if p is not None:
        h = h.resolve(p)
    for name in ("nu", "alpha1", "beta1", "alpha2", "beta2", "epsilon"):
        if not getattr(h, name) > 0:
            raise ValidationError(f"MGP {name} must be positive")
    if h.b0 < 0 or h.b1 < 0:
        raise ValidationError("adaptation rates b0, b1 must be >= 0")
    if not h.alpha2 > h.beta2 + 1:
        raise ShrinkageConditionError(
            f"cumulative shrinkage needs alpha2 > beta2 + 1, got alpha2={h.alpha2}, beta2={h.beta2}"
        )
    if h.prop is not None and not 0 < h.prop <= 1:
        raise ValidationError(f"proportion must lie in (0, 1], got {h.prop}")
    return h


def sample_mgp_loadings(rng, h, p, q, size):
    """Prior draws of a p x q loadings matrix, shape (size, p, q)."""
    gen = rng.gen
    phi = gen.gamma(h.nu + 1.0, 1.0 / h.nu, size=(size, p, q))
    delta = np.empty((size, q))
    delta[:, 0] = gen.gamma(h.alpha1, 1.0 / h.beta1, size=size)
    if q > 1:
        delta[:, 1:] = gen.gamma(h.alpha2, 1.0 / h.beta2, size=(size, q - 1))
    tau = np.cumprod(delta, axis=1)
    return gen.standard_normal((size, p, q)) / np.sqrt(phi * tau[:, None, :])


def free_params_per_cluster(p, q):
    """Free parameters of one factor-analytic cluster: loadings, mean, uniquenesses."""
    return p * q - q * (q - 1) / 2 + 2 * p


@dataclass(frozen=True)
class ProcessPrior:
    """Prior on mixing weights.

    ``alpha``/``d`` are numbers or ``"learn"``. ``gamma`` is the overfitted total
    mass (``None`` resolves to the default rule once G* and p are known).
    """

    kind: str = "finite-dirichlet"
    alpha: float | str = 1.0
    alpha_hyper: tuple = (2.0, 1.0)
    d: float | str = 0.0
    d_hyper: tuple = (0.5, 1.0, 1.0)
    gamma: float | None = None
    rho: float = 0.75

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ValidationError(f"process kind must be one of {PROCESS_KINDS}")
        a, b = self.alpha_hyper
        kappa, a2, b2 = self.d_hyper
        if not (a > 0 and b > 0 and a2 > 0 and b2 > 0 and 0 <= kappa <= 1):
            raise ValidationError("invalid alpha/d hyperparameters")
        if self.d != LEARN:
            if self.kind != "py" and self.d != 0:
                raise ValidationError("a non-zero discount needs the py process")
            if not 0 <= self.d < 1:
                raise ValidationError("discount d must lie in [0, 1)")
        elif self.kind != "py":
            raise ValidationError("learning d needs the py process")
        if self.alpha != LEARN:
            lower = -self.d if self.d != LEARN else 0.0
            if not self.alpha > lower or (self.kind != "py" and not self.alpha > 0):
                raise ValidationError("need alpha > -d (alpha > 0 outside the py process)")
        elif self.kind in ("finite-dirichlet", "overfitted"):
            raise ValidationError("alpha can only be learned for dp/py processes")
        if not 0 < self.rho < 1:
            raise ValidationError("slice decay rho must lie in (0, 1)")
        if self.gamma is not None and not self.gamma > 0:
            raise ValidationError("gamma must be positive")

    @property
    def infinite(self):
        return self.kind in ("dp", "py")

    @property
    def learn_alpha(self):
        return self.alpha == LEARN

    @property
    def learn_d(self):
        return self.d == LEARN

    def initial_alpha(self):
        return self.alpha_hyper[0] / self.alpha_hyper[1] if self.learn_alpha else float(self.alpha)

    def initial_d(self):
        return 0.0 if self.learn_d else float(self.d)


def default_overfitted_mass(p, G_star, q_min=0):
    """Per-component Dirichlet mass: 1% of d_free/2 for the smallest model, capped at 0.5/G*."""
    return min(1e-2 * free_params_per_cluster(p, q_min) / 2.0, 0.5 / G_star)


def overfitted_alpha(process, p, G_star, q_min=0):
    """Per-component mass alpha_g = gamma / G*, checked against d_free/2."""
    if process.gamma is None:
        alpha_g = default_overfitted_mass(p, G_star, q_min)
    else:
        alpha_g = process.gamma / G_star
    if not alpha_g < free_params_per_cluster(p, q_min) / 2:
        raise ValidationError("overfitted alpha_g must be below d_free / 2 of the smallest model")
    return alpha_g


def init_truncation(p, n):
    """Conservative starting number of factors: min(floor(3 ln p), p, N - 1)."""
    if p < 1 or n < 2:
        raise ValidationError("need p >= 1 and N >= 2")
    return int(min(math.floor(3 * math.log(p)), p, n - 1))


def init_cluster_ceiling(n, override=None):
    """Starting number of clusters: max(25, ceil(3 ln N)), or ``override`` (<= N)."""
    if n < 2:
        raise ValidationError("need N >= 2")
    if override is not None:
        if not 1 <= override <= n:
            raise ValidationError(f"cluster ceiling override must lie in [1, N={n}]")
        return int(override)
    return int(max(25, math.ceil(3 * math.log(n))))


@dataclass(frozen=True)
class MeanPrior:
    """MVN(mean, cov) prior on cluster means, with cached factorizations."""

    mean: np.ndarray
    cov: np.ndarray
    diagonal: bool = False
    prec: np.ndarray = field(init=False, repr=False)
    prec_mean: np.ndarray = field(init=False, repr=False)
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if self.diagonal:
            cov = np.diag(np.diag(cov))
        object.__setattr__(self, "cov", cov)
        chol = np.linalg.cholesky(cov)
        prec = np.linalg.inv(cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "prec", 0.5 * (prec + prec.T))
        object.__setattr__(self, "prec_mean", self.prec @ self.mean)


def derive_mean_prior(x):
    """Sample mean and covariance as hyperparameters; diagonal covariance when N <= p."""
    n, p = x.shape
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    diagonal = n <= p or np.linalg.matrix_rank(cov) < p
    return MeanPrior(x.mean(axis=0), cov, diagonal=diagonal)
