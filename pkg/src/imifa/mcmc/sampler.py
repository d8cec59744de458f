"""Initialisation, the Gibbs sweep, and the ``fit`` driver."""

from __future__ import annotations

import logging
import time

import numpy as np

from ..dist import RngStream, dirichlet
from ..errors import SamplerError, ValidationError
from .config import Model
from .init import initial_partition
from .state import ChainState, stick_weights
from .trace import ChainTrace
from .updates import (
    ProcessSteps,
    adapt_truncation,
    label_switch_moves,
    loadings_prior_precision,
    observed_loglik,
    prior_mean,
    prior_mgp,
    prior_psi,
    refresh_slice,
    reorder_by_weight,
    update_allocations,
    update_factor_scores,
    update_loadings,
    update_means,
    update_mgp,
    update_process_params,
    update_slice,
    update_uniquenesses,
    update_weights,
)

log = logging.getLogger(__name__)

# initial partition of overfitted/infinite kinds: BIC choice over 1..INIT_G_MAX
INIT_G_MAX = 9


def initialize(model, rng):
    """Starting state: z from the configured initializer, all else from the priors."""
    gen = rng.gen
    ctl = model.control
    n, p = model.n, model.p
    G = model.G_init
    warning = None
    if G == 1:
        z = np.zeros(n, dtype=int)
    elif model.mixture == "finite":
        z, warning = initial_partition(model.x, G, ctl.init, rng)
    else:
        k = ctl.init_G
        if k is not None and not 1 <= k <= G:
            raise ValidationError(f"init_G must lie in [1, {G}]")
        if ctl.init == "gmm" and k is None:
            z, warning = initial_partition(model.x, G, "gmm", rng, select_upto=min(INIT_G_MAX, G))
        else:
            z, warning = initial_partition(model.x, k or min(INIT_G_MAX, G), ctl.init, rng)
    if warning:
        log.warning(warning)

    q0 = model.q_init
    mu = prior_mean(model, gen, G)
    psi = prior_psi(model, gen, G)
    loadings, phis, deltas, taus = [], [], [], []
    for _ in range(G):
        phi, delta, tau = prior_mgp(model, gen, q0 if model.adaptive else 0)
        dprec = loadings_prior_precision(model, phi, tau, q0)
        loadings.append(gen.standard_normal((p, q0)) / np.sqrt(dprec))
        phis.append(phi)
        deltas.append(delta)
        taus.append(tau)
    eta = gen.standard_normal((n, q0))

    proc = model.process
    alpha, d = proc.initial_alpha(), proc.initial_d()
    v = u = None
    if model.mixture == "single":
        pi = np.ones(1)
    elif model.infinite:
        g1 = np.arange(1, G + 1)
        v = gen.beta(1.0 - d, alpha + g1 * d)
        pi = stick_weights(v)
    else:
        pi = dirichlet(rng, np.full(G, model.dir_alpha))
    state = ChainState(z=z, mu=mu, psi=psi, loadings=loadings, phi=phis, delta=deltas,
                       tau=taus, eta=eta, pi=pi, v=v, u=u, alpha=alpha, d=d)
    state.init_warning = warning
    if model.infinite:
        refresh_slice(state, model, rng)
    return state


def sweep(state, model, rng, steps=None):
    """One full pass of the sampler over every block, in order."""
    it = state.iteration + 1
    state.iteration = it
    try:
        update_factor_scores(state, model, rng)
        update_means(state, model, rng)
        update_loadings(state, model, rng)
        update_uniquenesses(state, model, rng)
        update_mgp(state, model, rng)
        update_weights(state, model, rng)
        if model.infinite:
            update_slice(state, model, rng)
        update_allocations(state, model, rng)
        if model.infinite:
            if model.control.label_switch_moves:
                label_switch_moves(state, model, rng)
            reorder_by_weight(state, model, rng)
            update_process_params(state, model, rng, steps, tune=it <= model.control.burnin)
        adapt_truncation(state, model, rng, it)
    except np.linalg.LinAlgError as exc:
        raise SamplerError(it, f"factorization failed: {exc}") from exc
    return state


def fit(data, cfg, callback=None, ignore_data=False, rng=None):
    """Run the sampler and return the thinned post-burn-in :class:`ChainTrace`.

    ``data`` is a :class:`~imifa.data.Dataset` or an (N, p) array. ``callback``,
    if given, is called as ``callback(state, model)`` after every sweep.
    """
    x = getattr(data, "x", data)
    model = Model(x, cfg, ignore_data=ignore_data)
    ctl = cfg.control
    rng = rng or RngStream(ctl.seed)
    t0 = time.perf_counter()
    state = initialize(model, rng)
    steps = ProcessSteps()
    trace = ChainTrace(n=model.n, p=model.p)
    trace.meta = {"kind": cfg.kind, "seed": ctl.seed, "init_warning": state.init_warning,
                  "config": model.resolved_dict()}
    for it in range(1, ctl.n_iter + 1):
        sweep(state, model, rng, steps)
        if callback is not None:
            callback(state, model)
        if it > ctl.burnin and (it - ctl.burnin) % ctl.thin == 0:
            trace.record(state, observed_loglik(state, model), ctl.store_loadings, ctl.store_scores)
    trace.counters = dict(state.counters)
    trace.meta["wall_time_s"] = time.perf_counter() - t0
    return trace
