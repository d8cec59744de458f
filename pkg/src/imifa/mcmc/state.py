"""Chain state: every latent variable and parameter at one iteration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChainState:
    """Cluster-indexed quantities are indexed 0..G-1 along their first axis.

    ``loadings``, ``phi``, ``delta`` and ``tau`` are ragged per-cluster lists
    (``phi``/``delta``/``tau`` are empty arrays for finite-q kinds). ``eta`` is
    N x max_g q_g with rows zero-padded beyond the factors of their cluster.
    """

    z: np.ndarray
    mu: np.ndarray
    psi: np.ndarray
    loadings: list
    phi: list
    delta: list
    tau: list
    eta: np.ndarray
    pi: np.ndarray
    v: np.ndarray | None = None
    u: np.ndarray | None = None
    alpha: float = 1.0
    d: float = 0.0
    iteration: int = 0
    counters: dict = field(default_factory=lambda: {
        "move1_proposed": 0, "move1_accepted": 0,
        "move2_proposed": 0, "move2_accepted": 0,
        "alpha_proposed": 0, "alpha_accepted": 0,
        "d_proposed": 0, "d_accepted": 0,
        "adapt_events": 0, "columns_added": 0, "columns_removed": 0,
    })
    init_warning: str | None = None

    @property
    def G(self):
        return self.mu.shape[0]

    @property
    def q(self):
        return np.array([lam.shape[1] for lam in self.loadings], dtype=int)

    @property
    def counts(self):
        return np.bincount(self.z, minlength=self.G)

    def members(self):
        """Observation indices per cluster."""
        order = np.argsort(self.z, kind="stable")
        bounds = np.cumsum(np.bincount(self.z, minlength=self.G))
        return np.split(order, bounds[:-1])

    def count_nonempty(self):
        return int(np.count_nonzero(self.counts))

    def permute(self, order):
        """Reorder clusters so new cluster k is old cluster ``order[k]``."""
        order = np.asarray(order)
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        self.z = inv[self.z]
        self.mu = self.mu[order]
        self.psi = self.psi[order]
        self.pi = self.pi[order]
        for name in ("loadings", "phi", "delta", "tau"):
            lst = getattr(self, name)
            setattr(self, name, [lst[k] for k in order])
        if self.v is not None:
            self.v = self.v[order]

    def swap(self, g, h, swap_v=False):
        """Swap the parameters and members of clusters g and h, leaving pi in place."""
        order = np.arange(self.G)
        order[[g, h]] = order[[h, g]]
        pi, v = self.pi.copy(), None if self.v is None else self.v.copy()
        self.permute(order)
        self.pi = pi
        if self.v is not None and not swap_v:
            self.v = v

    def truncate(self, G):
        self.mu = self.mu[:G]
        self.psi = self.psi[:G]
        self.pi = self.pi[:G]
        for name in ("loadings", "phi", "delta", "tau"):
            setattr(self, name, getattr(self, name)[:G])
        if self.v is not None:
            self.v = self.v[:G]


def cap_mass(pi):
    """Shrink ``pi`` by a few ulps if rounding pushed its total above one."""
    while pi.sum() > 1.0:
        pi = pi * np.nextafter(1.0, 0.0)
    return pi


def stick_weights(v):
    """pi_g = v_g prod_{l<g} (1 - v_l)."""
    v = np.asarray(v, dtype=float)
    rest = np.concatenate(([1.0], np.cumprod(1.0 - v)[:-1]))
    return cap_mass(v * rest)


def sticks_from_weights(pi):
    """Inverse of :func:`stick_weights` for a (sub-)simplex ``pi``."""
    pi = np.asarray(pi, dtype=float)
    rem = 1.0 - np.concatenate(([0.0], np.cumsum(pi)[:-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(rem > 1e-300, pi / rem, 1.0)
    return np.clip(v, 0.0, 1.0)
