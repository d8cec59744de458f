"""Post-hoc identification and posterior summaries of a :class:`ChainTrace`.

Label switching is undone by mapping every sampled partition onto a template
partition with a cost-minimising assignment; loadings are then rotated onto a
template loadings matrix (orthogonal Procrustes, rotation only).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .criteria import CriteriaInput, bic_mcmc, bicm
from .errors import InsufficientSamplesError, ValidationError


def solve_assignment(cost):
    """Permutation ``perm`` (0-based) minimising ``sum_i cost[i, perm[i]]``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValidationError(f"assignment cost must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("assignment cost must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def modal_value(values):
    """Most frequent value; ties go to the smaller value. Returns (mode, tied)."""
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    best = counts.max()
    return int(vals[np.argmax(counts)]), bool(np.sum(counts == best) > 1)


def _agreement(labels, template, G):
    a = np.zeros((G, G), dtype=np.int64)
    np.add.at(a, (labels - 1, template - 1), 1)
    return a


def _subset(trace, keep):
    out = copy.copy(trace)
    for name in ("iters", "G0", "G_active", "loglik", "alpha", "d", "q", "pi", "z"):
        setattr(out, name, [getattr(trace, name)[s] for s in keep])
    out.params = [copy.deepcopy(trace.params[s]) for s in keep] if trace.params else []
    out.eta = [trace.eta[s].copy() for s in keep] if trace.eta else []
    out.meta = dict(trace.meta)
    return out


def template_index(trace, G, how="earliest"):
    cand = [s for s in range(len(trace)) if trace.G0[s] == G]
    if not cand:
        raise ValidationError(f"no stored sample has G0 = {G}")
    if how == "earliest":
        return cand[0]
    if how == "loglik":
        return max(cand, key=lambda s: trace.loglik[s])
    raise ValidationError("template must be 'earliest' or 'loglik'")


def relabel_trace(trace, template=None, G=None):
    """Map every sample with G0 == G onto ``template`` labels (1..G).

    ``G`` defaults to the number of clusters in ``template``; ``template``
    defaults to the earliest sample with modal G0. Samples with a different
    G0 are dropped; their original indices are listed in
    ``meta["relabel_excluded"]``. The same permutation is applied to q, pi and
    all stored cluster parameters.
    """
    if G is None:
        G = len(np.unique(template)) if template is not None else modal_value(trace.G0)[0]
    if template is None:
        template = trace.z[template_index(trace, G)]
    template = np.asarray(template)
    keep = [s for s in range(len(trace)) if trace.G0[s] == G]
    excluded = [s for s in range(len(trace)) if trace.G0[s] != G]
    out = _subset(trace, keep)
    for k in range(len(out)):
        z = out.z[k]
        agree = _agreement(z, template, G)
        perm = solve_assignment(-agree)  # old label a -> new label perm[a]
        # ties: keep current labels when they already attain the optimum, so relabelling is idempotent
        if np.trace(agree) >= agree[np.arange(G), perm].sum():
            continue
        order = np.argsort(perm)  # new cluster b is old cluster order[b]
        out.z[k] = (perm[z - 1] + 1).astype(z.dtype)
        out.q[k] = out.q[k][order]
        out.pi[k] = out.pi[k][order]
        if out.params:
            prm = out.params[k]
            prm.mu = prm.mu[order]
            prm.psi = prm.psi[order]
            prm.loadings = [prm.loadings[b] for b in order]
    out.meta["relabel_excluded"] = excluded
    out.meta["relabel_G"] = int(G)
    return out


def procrustes_rotation(loadings, template):
    """Orthogonal R minimising ||loadings @ R - template||_F (no scaling or shift).

    Returns ``(R, rank_deficient)``.
    """
    cross = loadings.T @ template
    u, s, vt = np.linalg.svd(cross)
    rank_def = bool(s.size and s.min() <= s.max() * 1e-12) or not s.size
    return u @ vt, rank_def


def procrustes_align(trace, modal_q, templates=None):
    """Rotate each cluster's sampled loadings onto a template, in place.

    For cluster g only samples with at least ``modal_q[g]`` columns are used,
    keeping the first ``modal_q[g]``. The template defaults to the earliest
    such sample. Stored factor scores of the cluster's members are rotated
    with the same matrix, so each sample's Lambda eta^T is unchanged.
    Returns ``{g: (sample_indices, rotated (S_g, p, q_g) array)}`` and records
    rank-deficient cross-products in ``meta["procrustes_flags"]``.
    """
    out = {}
    flags = []
    for g, qg in enumerate(modal_q):
        idx = [s for s in range(len(trace)) if trace.q[s][g] >= qg]
        if not idx:
            out[g] = ([], np.empty((0, trace.p, qg)))
            continue
        tmpl = templates[g] if templates is not None else trace.params[idx[0]].loadings[g][:, :qg]
        stack = np.empty((len(idx), trace.p, qg))
        for k, s in enumerate(idx):
            lam = trace.params[s].loadings[g][:, :qg]
            if qg:
                rot, bad = procrustes_rotation(lam, tmpl)
                if bad:
                    flags.append((s, g))
                lam = lam @ rot
                trace.params[s].loadings[g] = np.column_stack((lam, trace.params[s].loadings[g][:, qg:]))
                if trace.eta:
                    members = trace.z[s] == g + 1
                    trace.eta[s][np.ix_(members, np.arange(qg))] = trace.eta[s][members, :qg] @ rot
            stack[k] = lam
        out[g] = (idx, stack)
    trace.meta["procrustes_flags"] = flags
    return out


def credible_interval(values, level=0.95):
    """Central interval from empirical quantiles, rounded outward."""
    lo, hi = np.quantile(np.asarray(values, dtype=float), [(1 - level) / 2, (1 + level) / 2])
    return int(math.floor(lo + 1e-9)), int(math.ceil(hi - 1e-9))


def sign_align(mat):
    """Flip column signs so each column's largest-magnitude entry is positive."""
    if not mat.size:
        return mat
    idx = np.argmax(np.abs(mat), axis=0)
    signs = np.sign(mat[idx, np.arange(mat.shape[1])])
    signs[signs == 0] = 1
    return mat * signs


@dataclass
class PosteriorSummary:
    kind: str
    modal_G: int
    G_distribution: dict
    G_tie: bool
    retained_sample_count: int
    modal_q: list
    q_intervals: list
    q_distributions: list
    map_z: list
    posterior_mean_pi: list
    posterior_mean_means: list = field(default_factory=list)
    posterior_mean_uniquenesses: list = field(default_factory=list)
    posterior_mean_loadings: list = field(default_factory=list)
    loadings_sample_counts: list = field(default_factory=list)
    criteria: dict = field(default_factory=dict)
    alpha_mean: float | None = None
    d_mean: float | None = None
    kappa_hat: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def summarize(trace, template="earliest", kind=None, G_fixed=None, q_fixed=None):
    """Modal G0, modal q_g with 95% intervals, MAP partition and identified means.

    Cluster-specific quantities use only samples visiting the modal G0
    (ties broken towards smaller G). Loadings means use, per cluster, the
    samples with at least the modal number of factors after Procrustes
    rotation, followed by a column sign convention.
    """
    if len(trace) == 0:
        raise InsufficientSamplesError("trace holds no stored samples")
    meta = trace.meta
    cfg = meta.get("config") or {}
    kind = kind or meta.get("kind") or cfg.get("kind")
    G_fixed = G_fixed if G_fixed is not None else cfg.get("G")
    q_fixed = q_fixed if q_fixed is not None else cfg.get("q")
    notes = []

    modal_G, tie = modal_value(trace.G0)
    if tie:
        notes.append(f"modal G0 tie broken towards G={modal_G}")
    vals, counts = np.unique(trace.G0, return_counts=True)
    G_dist = {int(v): float(c / len(trace)) for v, c in zip(vals, counts)}

    t_idx = template_index(trace, modal_G, template)
    rt = relabel_trace(trace, trace.z[t_idx], modal_G)
    S = len(rt)

    qmat = np.array(rt.q, dtype=int).reshape(S, modal_G)
    modal_q, intervals, q_dists = [], [], []
    for g in range(modal_G):
        mq, _ = modal_value(qmat[:, g])
        lo, hi = credible_interval(qmat[:, g])
        modal_q.append(mq)
        intervals.append([min(lo, mq), max(hi, mq)])
        v, c = np.unique(qmat[:, g], return_counts=True)
        q_dists.append({int(a): float(b / S) for a, b in zip(v, c)})

    zmat = np.array(rt.z)
    map_z = [modal_value(zmat[:, i])[0] for i in range(trace.n)]
    pi_mean = np.mean(np.array(rt.pi), axis=0)
    pi_mean = pi_mean / pi_mean.sum()

    summary = PosteriorSummary(
        kind=kind, modal_G=modal_G, G_distribution=G_dist, G_tie=tie,
        retained_sample_count=S, modal_q=modal_q, q_intervals=intervals,
        q_distributions=q_dists, map_z=map_z, posterior_mean_pi=pi_mean.tolist(),
        alpha_mean=float(np.mean(trace.alpha)), d_mean=float(np.mean(trace.d)),
        kappa_hat=trace.kappa_hat, notes=notes,
    )

    if rt.params:
        summary.posterior_mean_means = np.mean([p.mu for p in rt.params], axis=0).tolist()
        summary.posterior_mean_uniquenesses = np.mean([p.psi for p in rt.params], axis=0).tolist()
        aligned = procrustes_align(rt, modal_q)
        for g in range(modal_G):
            idx, stack = aligned[g]
            mean = sign_align(stack.mean(axis=0)) if idx else np.zeros((trace.p, modal_q[g]))
            summary.posterior_mean_loadings.append(mean.tolist())
            summary.loadings_sample_counts.append(len(idx))
        if rt.meta.get("procrustes_flags"):
            notes.append(f"{len(rt.meta['procrustes_flags'])} rank-deficient Procrustes cross-products")

    crit = {}
    if len(trace) >= 2:
        crit["bicm"] = bicm(CriteriaInput(trace.loglik, trace.n, trace.p))
    if kind in ("FA", "MFA") and q_fixed is not None:
        G = 1 if kind == "FA" else int(G_fixed)
        crit["bic_mcmc"] = bic_mcmc(CriteriaInput(trace.loglik, trace.n, trace.p, G, int(q_fixed)), kind)
    crit["max_loglik"] = float(np.max(trace.loglik))
    summary.criteria = crit
    return summary
