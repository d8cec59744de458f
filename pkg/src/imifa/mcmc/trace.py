"""Thinned post-burn-in samples and their run-directory persistence.

Files written by :meth:`ChainTrace.save`:

``trace.meta.json``
    config, seed, dimensions, counters, and the params layout description.
``trace.scalars.csv``
    iter, G0, G_active, loglik, alpha, d, q_1..q_K, pi_1..pi_K (K = max G0;
    blank cells beyond G0).
``trace.z.bin``
    int32 little-endian labels in 1..G0, row-major (n_samples, N).
``trace.params.bin`` (optional)
    float64 little-endian. Per sample, per non-empty cluster g = 1..G0:
    mu_g (p), psi_g (p), Lambda_g (p x q_g, row-major); then, when scores
    are stored, eta (N x max_g q_g, row-major, zero-padded).

Within a sample clusters are the non-empty ones in sampler order, labelled
1..G0, so z, q, pi and the parameter blocks line up.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARAMS_LAYOUT = (
    "per sample s, per cluster g=1..G0[s]: mu_g[p], psi_g[p], lambda_g[p*q_g] row-major; "
    "then if store_scores: eta[N*max(q)] row-major; float64 little-endian"
)


@dataclass
class ClusterParams:
    mu: np.ndarray
    psi: np.ndarray
    loadings: list


@dataclass
class ChainTrace:
    n: int
    p: int
    meta: dict = field(default_factory=dict)
    iters: list = field(default_factory=list)
    G0: list = field(default_factory=list)
    G_active: list = field(default_factory=list)
    loglik: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    d: list = field(default_factory=list)
    q: list = field(default_factory=list)
    pi: list = field(default_factory=list)
    z: list = field(default_factory=list)
    params: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iters)

    @property
    def store_loadings(self):
        return bool(self.params)

    @property
    def store_scores(self):
        return bool(self.eta)

    @property
    def kappa_hat(self):
        """Proportion of stored discount samples exactly equal to zero."""
        if not self.d:
            return None
        return float(np.mean(np.asarray(self.d) == 0.0))

    def record(self, state, loglik, store_loadings, store_scores):
        counts = state.counts
        keep = np.flatnonzero(counts)
        remap = np.full(state.G, -1)
        remap[keep] = np.arange(keep.size)
        self.iters.append(state.iteration)
        self.G0.append(int(keep.size))
        self.G_active.append(int(state.G))
        self.loglik.append(float(loglik))
        self.alpha.append(float(state.alpha))
        self.d.append(float(state.d))
        q = state.q[keep]
        self.q.append(q)
        self.pi.append(state.pi[keep].copy())
        self.z.append((remap[state.z] + 1).astype(np.int32))
        if store_loadings:
            self.params.append(ClusterParams(
                state.mu[keep].copy(), state.psi[keep].copy(),
                [state.loadings[g].copy() for g in keep],
            ))
        if store_scores:
            width = int(q.max(initial=0))
            self.eta.append(state.eta[:, :width].copy())

    # ------------------------------------------------------------------
    def save(self, run_dir, config=None):
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        K = max(self.G0, default=0)
        meta = dict(self.meta)
        meta.update({
            "N": self.n,
            "p": self.p,
            "n_samples": len(self),
            "store_loadings": self.store_loadings,
            "store_scores": self.store_scores,
            "max_G0": K,
            "params_layout": PARAMS_LAYOUT if self.store_loadings else None,
            "counters": self.counters,
            "kappa_hat": self.kappa_hat,
        })
        if config is not None:
            meta["config"] = config
        (run_dir / "trace.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")

        with (run_dir / "trace.scalars.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "G0", "G_active", "loglik", "alpha", "d"]
                       + [f"q_{k + 1}" for k in range(K)] + [f"pi_{k + 1}" for k in range(K)])
            for s in range(len(self)):
                pad = [""] * (K - self.G0[s])
                w.writerow([self.iters[s], self.G0[s], self.G_active[s], repr(self.loglik[s]),
                            repr(self.alpha[s]), repr(self.d[s])]
                           + [int(v) for v in self.q[s]] + pad
                           + [repr(float(v)) for v in self.pi[s]] + pad)

        z = np.asarray(self.z, dtype="<i4").reshape(len(self), self.n)
        (run_dir / "trace.z.bin").write_bytes(z.tobytes(order="C"))

        params_path = run_dir / "trace.params.bin"
        if self.store_loadings:
            with params_path.open("wb") as fh:
                for s, prm in enumerate(self.params):
                    for g in range(self.G0[s]):
                        fh.write(prm.mu[g].astype("<f8").tobytes())
                        fh.write(prm.psi[g].astype("<f8").tobytes())
                        fh.write(np.ascontiguousarray(prm.loadings[g], dtype="<f8").tobytes())
                    if self.store_scores:
                        fh.write(np.ascontiguousarray(self.eta[s], dtype="<f8").tobytes())
        elif params_path.exists():
            params_path.unlink()

    @classmethod
    def load(cls, run_dir):
        run_dir = Path(run_dir)
        meta_path = run_dir / "trace.meta.json"
        if not meta_path.exists():
            raise FileNotFoundError(f"no trace in {run_dir}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n, p, S = meta["N"], meta["p"], meta["n_samples"]
        tr = cls(n=n, p=p)
        tr.counters = meta.pop("counters", {})
        for key in ("N", "p", "n_samples", "store_loadings", "store_scores", "max_G0",
                    "params_layout", "kappa_hat"):
            meta.pop(key, None)
        tr.meta = meta
        with (run_dir / "trace.scalars.csv").open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, rows = rows[0], rows[1:]
        K = sum(h.startswith("q_") for h in header)
        for row in rows:
            g0 = int(row[1])
            tr.iters.append(int(row[0]))
            tr.G0.append(g0)
            tr.G_active.append(int(row[2]))
            tr.loglik.append(float(row[3]))
            tr.alpha.append(float(row[4]))
            tr.d.append(float(row[5]))
            tr.q.append(np.array([int(v) for v in row[6:6 + g0]], dtype=int))
            tr.pi.append(np.array([float(v) for v in row[6 + K:6 + K + g0]]))
        z = np.frombuffer((run_dir / "trace.z.bin").read_bytes(), dtype="<i4").reshape(S, n)
        tr.z = [row.copy() for row in z]
        params_path = run_dir / "trace.params.bin"
        if params_path.exists():
            flat = np.frombuffer(params_path.read_bytes(), dtype="<f8")
            pos = 0
            scores = bool(json.loads(meta_path.read_text())["store_scores"])
            for s in range(S):
                mus, psis, lams = [], [], []
                for g in range(tr.G0[s]):
                    qg = int(tr.q[s][g])
                    mus.append(flat[pos:pos + p]); pos += p
                    psis.append(flat[pos:pos + p]); pos += p
                    lams.append(flat[pos:pos + p * qg].reshape(p, qg).copy()); pos += p * qg
                tr.params.append(ClusterParams(np.array(mus).reshape(-1, p), np.array(psis).reshape(-1, p), lams))
                if scores:
                    w = int(tr.q[s].max(initial=0))
                    tr.eta.append(flat[pos:pos + n * w].reshape(n, w).copy()); pos += n * w
            if pos != flat.size:
                raise ValueError(f"{params_path}: {flat.size - pos} trailing values; layout mismatch")
        return tr
