"""Full-conditional updates for the FA / MFA / MIFA / OM(I)FA / IM(I)FA sweep.

Each ``update_*`` function takes ``(state, model, rng)``, mutates ``state`` in
place and returns it. Clusters with no members are refreshed from their priors.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
from scipy.special import gammaln, logsumexp

from ..dist import gumbel_max_rows
from .density import fa_logpdf
from .state import cap_mass, stick_weights, sticks_from_weights

STEP_WINDOW = 50


def _members(state, model):
    groups = state.members()
    if model.ignore_data:
        return [g[:0] for g in groups]
    return groups


def _chol(mat):
    return np.linalg.cholesky(mat)


def _ig(gen, shape, rate, size=None):
    return rate / gen.gamma(shape, 1.0, size)


# ---------------------------------------------------------------------------
# prior draws for a single cluster


def prior_mean(model, gen, k=1):
    mp = model.mean_prior
    return mp.mean + gen.standard_normal((k, model.p)) @ mp.chol.T


def prior_psi(model, gen, k=1):
    a = model.uniq.shape
    if model.isotropic:
        return np.repeat(_ig(gen, a, model.uniq_rates[0], (k, 1)), model.p, axis=1)
    return _ig(gen, a, model.uniq_rates, (k, model.p))


def prior_mgp(model, gen, q):
    """(phi, delta, tau) drawn from the MGP prior for q columns."""
    h, p = model.mgp, model.p
    if model.mgp is None:
        return np.empty((p, 0)), np.empty(0), np.empty(0)
    phi = gen.gamma(h.nu + 1.0, 1.0 / h.nu, (p, q))
    delta = np.empty(q)
    if q:
        delta[0] = gen.gamma(h.alpha1, 1.0 / h.beta1)
        delta[1:] = gen.gamma(h.alpha2, 1.0 / h.beta2, q - 1)
    return phi, delta, np.cumprod(delta)


def loadings_prior_precision(model, phi, tau, q):
    if model.adaptive:
        return phi * tau[None, :]
    return np.ones((model.p, q))


# ---------------------------------------------------------------------------
# conjugate parameter updates


def update_factor_scores(state, model, rng):
    """eta_i ~ MVN(C^-1 L^T Psi^-1 (x_i - mu), C^-1) with C = I + L^T Psi^-1 L."""
    gen = rng.gen
    q = state.q
    qmax = int(q.max()) if q.size else 0
    eta = np.zeros((model.n, qmax))
    groups = state.members()
    for g, idx in enumerate(groups):
        qg = q[g]
        if not qg or not idx.size:
            continue
        noise = gen.standard_normal((idx.size, qg))
        if model.ignore_data:
            eta[idx, :qg] = noise
            continue
        lam = state.loadings[g]
        lp = lam / state.psi[g][:, None]
        chol = _chol(np.eye(qg) + lam.T @ lp)
        rhs = (model.x[idx] - state.mu[g]) @ lp
        mean = sla.cho_solve((chol, True), rhs.T).T
        eta[idx, :qg] = mean + sla.solve_triangular(chol, noise.T, lower=True, trans="T").T
    state.eta = eta
    return state


def update_means(state, model, rng):
    """Conjugate MVN update of each cluster mean under the data-driven MVN prior."""
    gen = rng.gen
    mp = model.mean_prior
    groups = _members(state, model)
    empty = [g for g, idx in enumerate(groups) if not idx.size]
    if empty:
        state.mu[empty] = prior_mean(model, gen, len(empty))
    for g, idx in enumerate(groups):
        n_g = idx.size
        if not n_g:
            continue
        qg = state.loadings[g].shape[1]
        resid = model.x[idx]
        if qg:
            resid = resid - state.eta[idx, :qg] @ state.loadings[g].T
        ipsi = 1.0 / state.psi[g]
        rhs = mp.prec_mean + resid.sum(axis=0) * ipsi
        z = gen.standard_normal(model.p)
        if mp.diagonal:
            prec = np.diag(mp.prec) + n_g * ipsi
            state.mu[g] = rhs / prec + z / np.sqrt(prec)
        else:
            prec = mp.prec + np.diag(n_g * ipsi)
            chol = _chol(prec)
            mean = sla.cho_solve((chol, True), rhs)
            state.mu[g] = mean + sla.solve_triangular(chol, z, lower=True, trans="T")
    return state


def update_loadings(state, model, rng):
    """Row-wise MVN update: precision D_j + psi_j^-1 E^T E, mean prec^-1 E^T r_j / psi_j.

    D_j is diag(phi_jk tau_k) under the MGP prior and the identity otherwise.
    """
    gen = rng.gen
    p = model.p
    groups = _members(state, model)
    for g, idx in enumerate(groups):
        qg = state.loadings[g].shape[1]
        if not qg:
            continue
        dprec = loadings_prior_precision(model, state.phi[g], state.tau[g], qg)
        z = gen.standard_normal((p, qg))
        if not idx.size:
            state.loadings[g] = z / np.sqrt(dprec)
            continue
        e = state.eta[idx, :qg]
        ipsi = 1.0 / state.psi[g]
        r = model.x[idx] - state.mu[g]
        prec = (e.T @ e)[None, :, :] * ipsi[:, None, None]
        prec[:, np.arange(qg), np.arange(qg)] += dprec
        rhs = (r.T @ e) * ipsi[:, None]
        chol = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, rhs[:, :, None])[:, :, 0]
        noise = np.linalg.solve(np.swapaxes(chol, 1, 2), z[:, :, None])[:, :, 0]
        state.loadings[g] = mean + noise
    return state


def update_uniquenesses(state, model, rng):
    """psi_jg ~ IG(a + n_g/2, b_j + SSR_j/2), pooled over j when isotropic."""
    gen = rng.gen
    a, b = model.uniq.shape, model.uniq_rates
    groups = _members(state, model)
    p = model.p
    for g, idx in enumerate(groups):
        n_g = idx.size
        if not n_g:
            state.psi[g] = prior_psi(model, gen)[0]
            continue
        qg = state.loadings[g].shape[1]
        r = model.x[idx] - state.mu[g]
        if qg:
            r = r - state.eta[idx, :qg] @ state.loadings[g].T
        ss = np.einsum("ij,ij->j", r, r)
        if model.isotropic:
            state.psi[g] = _ig(gen, a + 0.5 * n_g * p, b[0] + 0.5 * ss.sum())
        else:
            state.psi[g] = _ig(gen, a + 0.5 * n_g, b + 0.5 * ss)
    return state


def update_mgp(state, model, rng):
    """Local phi ~ Ga(nu + 3/2, nu + tau_k lambda^2 / 2), then each delta_h in turn.

    delta_h ~ Ga(a_h + p (q - h + 1) / 2,
                 b_h + 1/2 sum_{k >= h} tau_k^(h) sum_j phi_jk lambda_jk^2)
    where tau_k^(h) is tau_k with delta_h removed; (a_1, b_1) for h = 1 and
    (a_2, b_2) otherwise. tau is recomputed as the exact cumulative product.
    These conditionals involve no data, so empty clusters use them too.
    """
    if not model.adaptive:
        return state
    gen = rng.gen
    h, p = model.mgp, model.p
    for g in range(state.G):
        lam = state.loadings[g]
        qg = lam.shape[1]
        if not qg:
            continue
        lam2 = lam * lam
        tau = state.tau[g]
        phi = gen.gamma(h.nu + 1.5, 1.0 / (h.nu + 0.5 * tau[None, :] * lam2))
        colsum = np.sum(phi * lam2, axis=0)
        delta = state.delta[g].copy()
        for k in range(qg):
            d_minus = delta.copy()
            d_minus[k] = 1.0
            tau_minus = np.cumprod(d_minus)[k:]
            shape = (h.alpha1 if k == 0 else h.alpha2) + 0.5 * p * (qg - k)
            rate = (h.beta1 if k == 0 else h.beta2) + 0.5 * np.dot(tau_minus, colsum[k:])
            delta[k] = gen.gamma(shape, 1.0 / rate)
        state.phi[g] = phi
        state.delta[g] = delta
        state.tau[g] = np.cumprod(delta)
    return state


# ---------------------------------------------------------------------------
# mixing weights, slice variables, allocations


def update_weights(state, model, rng):
    """Dirichlet draw (finite/overfitted) or stick-breaking posterior (dp/py)."""
    gen = rng.gen
    counts = np.bincount(state.z, minlength=state.G)
    if model.ignore_data:
        counts = np.zeros_like(counts) if model.infinite else counts
    if model.mixture == "single":
        state.pi = np.ones(1)
    elif not model.infinite:
        from ..dist import dirichlet

        state.pi = dirichlet(rng, model.dir_alpha + counts)
    else:
        update_sticks_and_weights(state, model, rng, counts)
    return state


def update_sticks_and_weights(state, model, rng, counts=None):
    """v_g ~ Beta(1 - d + n_g, alpha + g d + sum_{l>g} n_l), g = 1..G~."""
    if counts is None:
        counts = np.bincount(state.z, minlength=state.G)
    gen = rng.gen
    g1 = np.arange(1, state.G + 1)
    tail = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0]))
    a = 1.0 - state.d + counts
    b = state.alpha + g1 * state.d + tail
    state.v = gen.beta(a, b)
    state.pi = stick_weights(state.v)
    return state


def _new_cluster(state, model, rng, q):
    gen = rng.gen
    phi, delta, tau = prior_mgp(model, gen, q)
    dprec = loadings_prior_precision(model, phi, tau, q)
    lam = gen.standard_normal((model.p, q)) / np.sqrt(dprec)
    return prior_mean(model, gen)[0], prior_psi(model, gen)[0], lam, phi, delta, tau


def extend_clusters(state, model, rng, G_new):
    """Instantiate clusters G..G_new-1 from their priors (q = current eta width)."""
    gen = rng.gen
    q_new = state.eta.shape[1] if model.adaptive else model.q_init
    mus, psis = [state.mu], [state.psi]
    for g in range(state.G, G_new):
        mu, psi, lam, phi, delta, tau = _new_cluster(state, model, rng, q_new)
        mus.append(mu[None])
        psis.append(psi[None])
        state.loadings.append(lam)
        state.phi.append(phi)
        state.delta.append(delta)
        state.tau.append(tau)
        v = gen.beta(1.0 - state.d, state.alpha + (g + 1) * state.d)
        state.v = np.append(state.v, v)
    state.mu = np.vstack(mus)
    state.psi = np.vstack(psis)
    state.pi = stick_weights(state.v)


def update_slice(state, model, rng):
    """u_i ~ U(0, xi_{z_i}); resize the active set to G~ = max_i |{g: u_i < xi_g}|."""
    gen = rng.gen
    xi_z = model.xi(state.z)
    state.u = gen.uniform(size=model.n) * xi_z
    G_new = model.n_slice(state.u.min())
    if G_new > state.G:
        extend_clusters(state, model, rng, G_new)
    elif G_new < state.G:
        assert state.z.max() < G_new
        state.truncate(G_new)
    return state


def log_densities(state, model):
    """(N, G) matrix of log MVN(x_i; mu_g, L_g L_g^T + Psi_g)."""
    out = np.empty((model.n, state.G))
    for g in range(state.G):
        out[:, g] = fa_logpdf(model.x, state.mu[g], state.loadings[g], state.psi[g])
    return out


def update_allocations(state, model, rng):
    """Gumbel-max draw of z from unnormalised log weights.

    Finite kinds: log pi_g + log f_g(x_i). Infinite kinds: log(pi_g / xi_g) +
    log f_g(x_i), restricted to the active set {g: u_i < xi_g}.
    """
    with np.errstate(divide="ignore"):
        logpi = np.log(state.pi)
    if model.ignore_data:
        lw = np.broadcast_to(logpi, (model.n, state.G)).copy()
    else:
        lw = log_densities(state, model) + logpi[None, :]
    if model.infinite:
        xi = model.xi(np.arange(state.G))
        lw -= np.log(xi)[None, :]
        lw[state.u[:, None] >= xi[None, :]] = -np.inf
    state.z = gumbel_max_rows(rng, lw)
    return state


def observed_loglik(state, model):
    """sum_i log sum_g pi_g f_g(x_i) over non-empty clusters, weights renormalised."""
    counts = np.bincount(state.z, minlength=state.G)
    keep = np.flatnonzero(counts)
    pi = state.pi[keep]
    with np.errstate(divide="ignore"):
        logpi = np.log(pi) - np.log(pi.sum())
    ll = np.column_stack([
        fa_logpdf(model.x, state.mu[g], state.loadings[g], state.psi[g]) for g in keep
    ])
    return float(np.sum(logsumexp(ll + logpi[None, :], axis=1)))


# ---------------------------------------------------------------------------
# reordering and label-switching moves (infinite kinds)


def refresh_slice(state, model, rng):
    """Redraw u | z so u_i < xi_{z_i} holds after relabelling."""
    state.u = rng.gen.uniform(size=model.n) * model.xi(state.z)


def reorder_by_weight(state, model=None, rng=None):
    """Permute clusters so pi is non-increasing; sticks are recomputed from pi."""
    order = np.argsort(-state.pi, kind="stable")
    if np.any(order != np.arange(order.size)):
        state.permute(order)
        if state.v is not None:
            state.pi = cap_mass(state.pi)
            state.v = sticks_from_weights(state.pi)
    if model is not None and model.infinite and rng is not None:
        refresh_slice(state, model, rng)
    return state


def label_switch_moves(state, model, rng):
    """Two Metropolis label swaps.

    1. two random non-empty clusters g, h: accept w.p. min{1, (pi_h/pi_g)^(n_g - n_h)}
    2. neighbours g, g+1: accept w.p. min{1, (1-v_{g+1})^n_g / (1-v_g)^n_{g+1}},
       also swapping v_g and v_{g+1}.
    """
    gen = rng.gen
    c = state.counters
    counts = np.bincount(state.z, minlength=state.G)
    nonempty = np.flatnonzero(counts)
    if nonempty.size >= 2:
        g, h = gen.choice(nonempty, size=2, replace=False)
        c["move1_proposed"] += 1
        with np.errstate(divide="ignore", invalid="ignore"):
            log_a = (counts[g] - counts[h]) * (math.log(state.pi[h]) - math.log(state.pi[g])) \
                if state.pi[g] > 0 and state.pi[h] > 0 else (0.0 if counts[g] == counts[h] else -np.inf)
        if math.log(gen.uniform()) < min(0.0, log_a):
            state.swap(g, h)
            c["move1_accepted"] += 1
            counts[[g, h]] = counts[[h, g]]
    if state.G >= 2:
        g = int(gen.integers(0, state.G - 1))
        c["move2_proposed"] += 1
        with np.errstate(divide="ignore", invalid="ignore"):
            log_a = counts[g] * np.log1p(-state.v[g + 1]) - counts[g + 1] * np.log1p(-state.v[g])
        if np.isnan(log_a):
            log_a = -np.inf
        if math.log(gen.uniform()) < min(0.0, log_a):
            state.swap(g, g + 1, swap_v=True)
            state.pi = stick_weights(state.v)
            c["move2_accepted"] += 1
    return state


# ---------------------------------------------------------------------------
# DP / PY parameters


def log_eppf(alpha, d, counts):
    """Log exchangeable partition probability of the PY(alpha, d) prior."""
    counts = counts[counts > 0]
    k, n = counts.size, counts.sum()
    out = np.sum(np.log(alpha + d * np.arange(1, k)))
    out -= gammaln(alpha + n) - gammaln(alpha + 1.0)
    out += np.sum(gammaln(counts - d) - gammaln(1.0 - d))
    return float(out)


def west_alpha(gen, alpha, k, n, a, b):
    """Auxiliary-variable Gibbs draw of the DP concentration (two-gamma mixture)."""
    eta = gen.beta(alpha + 1.0, n)
    rate = b - math.log(eta)
    odds = (a + k - 1.0) / (n * rate)
    shape = a + k if gen.uniform() < odds / (1.0 + odds) else a + k - 1.0
    return gen.gamma(shape, 1.0 / rate)


class ProcessSteps:
    """Random-walk step sizes for the PY Metropolis-Hastings moves, tuned in burn-in."""

    def __init__(self, alpha_step=0.5, d_step=1.0):
        self.alpha_step = alpha_step
        self.d_step = d_step
        self._window = {"alpha": [0, 0], "d": [0, 0]}

    def record(self, which, accepted):
        w = self._window[which]
        w[0] += 1
        w[1] += int(accepted)

    def tune(self):
        for which, attr in (("alpha", "alpha_step"), ("d", "d_step")):
            tried, acc = self._window[which]
            if tried >= STEP_WINDOW:
                rate = acc / tried
                if rate < 0.2:
                    setattr(self, attr, getattr(self, attr) * 0.8)
                elif rate > 0.4:
                    setattr(self, attr, getattr(self, attr) * 1.25)
                self._window[which] = [0, 0]


def _alpha_prior(alpha, d, a, b):
    s = alpha + d
    return (a - 1.0) * math.log(s) - b * s if s > 0 else -np.inf


def update_process_params(state, model, rng, steps=None, tune=False):
    """Learn alpha (and d) for the dp/py processes.

    DP: exact auxiliary-variable Gibbs draw given the number of non-empty
    clusters. PY: random-walk MH on log(alpha + d) targeting the shifted
    gamma prior times the partition probability, and an MH move on d whose
    proposal puts mass 1/2 on d = 0 and otherwise moves on the logit scale
    (or draws from the beta prior component when d = 0).
    """
    proc = model.process
    if not model.infinite or not (proc.learn_alpha or proc.learn_d):
        return state
    gen = rng.gen
    counts = np.bincount(state.z, minlength=state.G)
    a, b = proc.alpha_hyper
    if proc.kind == "dp":
        k = int(np.count_nonzero(counts))
        state.alpha = west_alpha(gen, state.alpha, k, model.n, a, b)
        return state
    steps = steps or ProcessSteps()
    c = state.counters
    alpha, d = state.alpha, state.d

    if proc.learn_alpha:
        s_new = (alpha + d) * math.exp(steps.alpha_step * gen.standard_normal())
        alpha_new = s_new - d
        log_r = (_alpha_prior(alpha_new, d, a, b) + log_eppf(alpha_new, d, counts)
                 - _alpha_prior(alpha, d, a, b) - log_eppf(alpha, d, counts)
                 + math.log(s_new) - math.log(alpha + d))
        acc = math.log(gen.uniform()) < min(0.0, log_r)
        c["alpha_proposed"] += 1
        if acc:
            alpha = alpha_new
            c["alpha_accepted"] += 1
        steps.record("alpha", acc)

    if proc.learn_d:
        kappa, a2, b2 = proc.d_hyper

        def target(dv):
            if not alpha > -dv:
                return -np.inf
            out = log_eppf(alpha, dv, counts)
            if proc.learn_alpha:
                out += _alpha_prior(alpha, dv, a, b)
            return out

        def beta_logpdf(x):
            return (a2 - 1) * math.log(x) + (b2 - 1) * math.log1p(-x) - (
                gammaln(a2) + gammaln(b2) - gammaln(a2 + b2))

        log_kappa = math.log(kappa) if kappa > 0 else -np.inf
        log_1mkappa = math.log1p(-kappa) if kappa < 1 else -np.inf
        log_r = None
        random_walk = False
        if gen.uniform() < 0.5:
            # atom proposal; ratio of beta densities cancels against the reverse move
            if d > 0:
                d_new = 0.0
                log_r = log_kappa + target(0.0) - log_1mkappa - target(d)
        elif kappa < 1:
            if d == 0:
                d_new = gen.beta(a2, b2)
                log_r = log_1mkappa + target(d_new) - log_kappa - target(0.0)
            else:
                random_walk = True
                lg = math.log(d / (1 - d)) + steps.d_step * gen.standard_normal()
                d_new = 1.0 / (1.0 + math.exp(-lg))
                if 0 < d_new < 1:
                    log_r = (beta_logpdf(d_new) + target(d_new) - beta_logpdf(d) - target(d)
                             + math.log(d_new * (1 - d_new)) - math.log(d * (1 - d)))
        if log_r is not None:
            c["d_proposed"] += 1
            acc = math.log(gen.uniform()) < min(0.0, log_r)
            if acc:
                d = d_new
                c["d_accepted"] += 1
            if random_walk:
                steps.record("d", acc)

    state.alpha, state.d = alpha, d
    if tune:
        steps.tune()
    return state


# ---------------------------------------------------------------------------
# adaptive truncation


def _resize_cluster(state, model, rng, g, q_target):
    """Truncate or pad (by prior simulation) cluster g to q_target columns."""
    q = state.loadings[g].shape[1]
    if q_target < q:
        state.loadings[g] = state.loadings[g][:, :q_target]
        state.phi[g] = state.phi[g][:, :q_target]
        state.delta[g] = state.delta[g][:q_target]
        state.tau[g] = np.cumprod(state.delta[g])
    elif q_target > q:
        for _ in range(q_target - q):
            _append_column(state, model, rng, g)


def _append_column(state, model, rng, g):
    gen = rng.gen
    h, p = model.mgp, model.p
    q = state.loadings[g].shape[1]
    phi = gen.gamma(h.nu + 1.0, 1.0 / h.nu, p)
    delta = gen.gamma(h.alpha1, 1.0 / h.beta1) if q == 0 else gen.gamma(h.alpha2, 1.0 / h.beta2)
    state.delta[g] = np.append(state.delta[g], delta)
    state.tau[g] = np.cumprod(state.delta[g])
    lam = gen.standard_normal(p) / np.sqrt(phi * state.tau[g][-1])
    state.phi[g] = np.column_stack((state.phi[g], phi))
    state.loadings[g] = np.column_stack((state.loadings[g], lam))


def adapt_truncation(state, model, rng, iteration):
    """Prune near-zero loadings columns or grow by one column, w.p. exp(-b0 - b1 t).

    A column is redundant when at least a proportion ``prop`` of its entries lie
    within ``epsilon`` of zero. Clusters without redundant columns (and below
    the truncation bound) gain one column drawn from the MGP prior. Empty
    clusters are then truncated or padded to the width of eta.
    """
    if not model.adaptive:
        return state
    h = model.mgp
    if h.adapt_after_burnin and iteration <= model.control.burnin:
        return state
    gen = rng.gen
    if gen.uniform() > h.adapt_prob(iteration):
        return state
    c = state.counters
    c["adapt_events"] += 1
    groups = state.members()
    old_q = state.q
    new_eta_cols = {}
    for g, idx in enumerate(groups):
        if not idx.size:
            continue
        lam = state.loadings[g]
        q = lam.shape[1]
        eta_g = state.eta[idx, :q]
        redundant = np.mean(np.abs(lam) < h.epsilon, axis=0) >= h.prop if q else np.zeros(0, bool)
        if redundant.any():
            keep = ~redundant
            state.loadings[g] = lam[:, keep]
            state.phi[g] = state.phi[g][:, keep]
            state.delta[g] = state.delta[g][keep]
            state.tau[g] = np.cumprod(state.delta[g])
            eta_g = eta_g[:, keep]
            c["columns_removed"] += int(redundant.sum())
        elif q < model.q_bound:
            _append_column(state, model, rng, g)
            eta_g = np.column_stack((eta_g, gen.standard_normal(idx.size)))
            c["columns_added"] += 1
        new_eta_cols[g] = (idx, eta_g)
    q_now = state.q
    nonempty = [g for g, idx in enumerate(groups) if idx.size]
    q_tilde = int(max(q_now[nonempty])) if nonempty else int(old_q.max(initial=0))
    for g, idx in enumerate(groups):
        if not idx.size:
            _resize_cluster(state, model, rng, g, q_tilde)
    eta = np.zeros((model.n, q_tilde))
    for g, (idx, eta_g) in new_eta_cols.items():
        eta[idx, :eta_g.shape[1]] = eta_g
    state.eta = eta
    return state
