"""Model configuration and the resolved, data-bound model context."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ..errors import ValidationError
from ..priors import (
    LEARN,
    MgpHyper,
    ProcessPrior,
    derive_mean_prior,
    derive_uniqueness_rates,
    init_cluster_ceiling,
    init_truncation,
    overfitted_alpha,
    validate_mgp,
)

KINDS = ("FA", "IFA", "MFA", "MIFA", "OMFA", "OMIFA", "IMFA", "IMIFA")
ADAPTIVE = frozenset({"IFA", "MIFA", "OMIFA", "IMIFA"})
INITIALIZERS = ("gmm", "kmeans", "random")


@dataclass(frozen=True)
class McmcControl:
    n_iter: int = 25000
    burnin: int = 5000
    thin: int = 2
    seed: int = 0
    store_loadings: bool = True
    store_scores: bool = False
    label_switch_moves: bool = True
    init: str = "gmm"
    init_G: int | None = None

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1 or self.burnin < 0:
            raise ValidationError("n_iter and thin must be positive, burnin >= 0")
        if not self.burnin < self.n_iter:
            raise ValidationError("burnin must be smaller than n_iter")
        if self.init not in INITIALIZERS:
            raise ValidationError(f"init must be one of {INITIALIZERS}")

    @property
    def n_stored(self):
        return (self.n_iter - self.burnin) // self.thin


def default_process(kind):
    if kind.startswith("OM"):
        return ProcessPrior(kind="overfitted")
    if kind.startswith("IM"):
        return ProcessPrior(kind="py", alpha=LEARN, d=LEARN)
    return ProcessPrior(kind="finite-dirichlet", alpha=1.0)


@dataclass(frozen=True)
class ModelConfig:
    """What to fit.

    ``G`` is the number of components for MFA/MIFA, and an optional override of
    the cluster ceiling G* for the overfitted and infinite kinds. ``q`` is the
    fixed number of factors for FA/MFA/OMFA/IMFA and an optional override of the
    truncation bound for the adaptive kinds. ``isotropic=None`` lets the data
    decide (isotropic iff N <= p).
    """

    kind: str = "IMIFA"
    G: int | None = None
    q: int | None = None
    uniq_shape: float = 2.5
    isotropic: bool | None = None
    mgp: MgpHyper = field(default_factory=MgpHyper)
    process: ProcessPrior | None = None
    control: McmcControl = field(default_factory=McmcControl)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}")
        if self.process is None:
            object.__setattr__(self, "process", default_process(self.kind))
        k, proc = self.kind, self.process
        if k in ("FA", "IFA") and self.G not in (None, 1):
            raise ValidationError(f"{k} has a single cluster")
        if k in ("MFA", "MIFA") and (self.G is None or self.G < 1):
            raise ValidationError(f"{k} needs G >= 1")
        if k not in ADAPTIVE and (self.q is None or self.q < 0):
            raise ValidationError(f"{k} needs a fixed q >= 0")
        if k.startswith("OM") and proc.kind != "overfitted":
            raise ValidationError(f"{k} needs the overfitted process prior")
        if k.startswith("IM") and proc.kind not in ("dp", "py"):
            raise ValidationError(f"{k} needs a dp or py process prior")
        if k in ("FA", "IFA", "MFA", "MIFA") and proc.kind != "finite-dirichlet":
            raise ValidationError(f"{k} needs the finite-dirichlet process prior")
        if proc.kind == "finite-dirichlet" and proc.alpha != 1.0:
            raise ValidationError("the finite Dirichlet prior is symmetric with alpha = 1")
        if k in ADAPTIVE:
            validate_mgp(self.mgp)

    @property
    def adaptive(self):
        return self.kind in ADAPTIVE

    @property
    def mixture(self):
        """One of 'single', 'finite', 'overfitted', 'infinite'."""
        if self.kind in ("FA", "IFA"):
            return "single"
        if self.kind in ("MFA", "MIFA"):
            return "finite"
        return "overfitted" if self.kind.startswith("OM") else "infinite"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "mgp" in d and isinstance(d["mgp"], dict):
            d["mgp"] = MgpHyper(**d["mgp"])
        if d.get("process") is not None and isinstance(d["process"], dict):
            p = dict(d["process"])
            for key in ("alpha_hyper", "d_hyper"):
                if key in p:
                    p[key] = tuple(p[key])
            d["process"] = ProcessPrior(**p)
        if "control" in d and isinstance(d["control"], dict):
            d["control"] = McmcControl(**d["control"])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class Model:
    """A :class:`ModelConfig` bound to data, with every hyperparameter resolved.

    Hyperparameters are computed once from the data and held fixed for the run.
    Setting ``ignore_data`` turns the likelihood off (prior-reproduction checks).
    """

    def __init__(self, x, cfg, ignore_data=False):
        x = np.asarray(x, dtype=float)
        self.x = x
        self.n, self.p = x.shape
        self.cfg = cfg
        self.kind = cfg.kind
        self.adaptive = cfg.adaptive
        self.mixture = cfg.mixture
        self.infinite = self.mixture == "infinite"
        self.control = cfg.control
        self.ignore_data = ignore_data

        self.mean_prior = derive_mean_prior(x)
        cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
        iso = cfg.isotropic
        if iso is None:
            iso = self.n <= self.p
        self.uniq = derive_uniqueness_rates(cov, cfg.uniq_shape, isotropic=iso, n_obs=self.n)
        self.isotropic = self.uniq.isotropic
        self.uniq_rates = self.uniq.rates(self.p)

        self.mgp = validate_mgp(cfg.mgp, self.p) if self.adaptive else None
        if self.adaptive:
            self.q_bound = init_truncation(self.p, self.n) if cfg.q is None else int(cfg.q)
            if not 0 <= self.q_bound <= self.p:
                raise ValidationError("truncation bound must lie in [0, p]")
            self.q_init = self.q_bound
        else:
            if cfg.q > self.p:
                raise ValidationError(f"q={cfg.q} exceeds p={self.p}")
            self.q_bound = self.q_init = int(cfg.q)

        proc = cfg.process
        self.process = proc
        if self.mixture == "single":
            self.G_init = 1
        elif self.mixture == "finite":
            if cfg.G > self.n:
                raise ValidationError("G cannot exceed N")
            self.G_init = int(cfg.G)
        else:
            self.G_init = init_cluster_ceiling(self.n, cfg.G)
        if self.mixture == "overfitted":
            q_min = 0 if self.adaptive else self.q_init
            self.dir_alpha = overfitted_alpha(proc, self.p, self.G_init, q_min)
        else:
            self.dir_alpha = 1.0
        self.rho = proc.rho

    def xi(self, g):
        """Slice sequence value(s) (1 - rho) rho^g for 0-based cluster index g."""
        return (1.0 - self.rho) * self.rho ** np.asarray(g, dtype=float)

    def n_slice(self, u_min):
        """Number of g with xi_g > u_min."""
        t = math.log(u_min / (1.0 - self.rho)) / math.log(self.rho)
        k = max(int(math.ceil(t)), 1)
        while self.xi(k) > u_min:
            k += 1
        while k > 1 and not self.xi(k - 1) > u_min:
            k -= 1
        return k

    def resolved_dict(self):
        d = self.cfg.to_dict()
        d["resolved"] = {
            "N": self.n,
            "p": self.p,
            "isotropic": bool(self.isotropic),
            "uniqueness_rates": self.uniq_rates.tolist(),
            "mean_prior_diagonal": bool(self.mean_prior.diagonal),
            "q_bound": int(self.q_bound),
            "G_init": int(self.G_init),
            "dirichlet_alpha": float(self.dir_alpha),
            "mgp": asdict(self.mgp) if self.mgp else None,
        }
        return d


def with_control(cfg, **kw):
    return replace(cfg, control=replace(cfg.control, **kw))
