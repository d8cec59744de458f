"""Data ingestion, preprocessing and MFA simulation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dist import RngStream
from .errors import DegenerateColumnError, ParseError, ValidationError

SCALE_MODES = ("none", "unit", "pareto")


@dataclass(frozen=True)
class PreprocessSpec:
    center: bool = True
    scale_mode: str = "unit"

    def __post_init__(self):
        if self.scale_mode not in SCALE_MODES:
            raise ValidationError(f"scale_mode must be one of {SCALE_MODES}")


@dataclass
class Dataset:
    """N x p data matrix with optional ground-truth labels (1-based)."""

    x: np.ndarray
    var_names: list = field(default_factory=list)
    true_labels: np.ndarray | None = None
    preprocessing: PreprocessSpec | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise ValidationError("x must be a 2-d matrix")
        n, p = self.x.shape
        if n < 2 or p < 1:
            raise ValidationError(f"need N >= 2 and p >= 1, got N={n}, p={p}")
        if not np.all(np.isfinite(self.x)):
            raise ValidationError("x contains non-finite entries")
        if not self.var_names:
            self.var_names = [f"V{j + 1}" for j in range(p)]
        if len(self.var_names) != p:
            raise ValidationError("var_names length does not match p")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=int)
            if self.true_labels.shape != (n,):
                raise ValidationError("true_labels must have length N")
            if self.true_labels.min() < 1:
                raise ValidationError("true_labels must be >= 1")
            present = np.unique(self.true_labels)
            if not np.array_equal(present, np.arange(1, present.max() + 1)):
                raise ValidationError("every label in 1..L must occur at least once")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


def canonical_labels(labels):
    """Map arbitrary hashable labels to 1..L in order of first appearance."""
    mapping = {}
    out = np.empty(len(labels), dtype=int)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(lab, len(mapping) + 1)
    return out


def load_matrix(path, has_header=True, label_column=None):
    """Read a rectangular numeric CSV into a :class:`Dataset`.

    ``label_column`` (a header name, or a 0-based index when there is no
    header) is removed from ``x`` and stored, canonicalised, as ``true_labels``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows.pop(0) if has_header else None
    width = len(header) if header else len(rows[0])
    label_idx = None
    if label_column is not None:
        if header is not None and label_column in header:
            label_idx = header.index(label_column)
        elif isinstance(label_column, int) or str(label_column).isdigit():
            label_idx = int(label_column)
        else:
            raise ParseError(f"{path}: no column named {label_column!r}")
    x = np.empty((len(rows), width - (label_idx is not None)))
    raw_labels = []
    for r, row in enumerate(rows):
        line = r + 1 + (header is not None)
        if len(row) != width:
            raise ParseError(f"{path}: row {line} has {len(row)} fields, expected {width} (shape error)")
        col = 0
        for c, cell in enumerate(row):
            if c == label_idx:
                raw_labels.append(cell.strip())
                continue
            try:
                x[r, col] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric value {cell!r} at row {line}, column {c + 1}") from None
            col += 1
    names = None
    if header is not None:
        names = [h for c, h in enumerate(header) if c != label_idx]
    labels = canonical_labels(raw_labels) if label_idx is not None else None
    return Dataset(x, names or [], labels)


def preprocess(d, spec):
    """Center and/or scale columns (unit: divide by sd; pareto: by sqrt(sd))."""
    x = d.x.copy()
    if spec.center:
        x -= x.mean(axis=0)
    if spec.scale_mode != "none":
        sd = d.x.std(axis=0, ddof=1)
        bad = np.flatnonzero(~(sd > 0))
        if bad.size:
            raise DegenerateColumnError(f"column {d.var_names[bad[0]]!r} has zero variance")
        x /= sd if spec.scale_mode == "unit" else np.sqrt(sd)
    return replace(d, x=x, preprocessing=spec)


@dataclass(frozen=True)
class SimSpec:
    n: int
    p: int
    G: int
    q: tuple
    pi: tuple | None = None
    separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.p, self.G) < 1:
            raise ValidationError("n, p and G must be positive")
        q = tuple(int(v) for v in np.broadcast_to(self.q, (self.G,)))
        object.__setattr__(self, "q", q)
        if any(v < 0 or v > self.p for v in q):
            raise ValidationError(f"every q_g must lie in [0, p={self.p}], got {q}")
        pi = np.full(self.G, 1.0 / self.G) if self.pi is None else np.asarray(self.pi, dtype=float)
        if pi.shape != (self.G,) or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValidationError("pi must be a G-simplex")
        object.__setattr__(self, "pi", tuple(pi))
        if not self.separation > 0:
            raise ValidationError("separation must be positive")


@dataclass
class SimTruth:
    z: np.ndarray
    mu: np.ndarray
    loadings: list
    psi: np.ndarray
    pi: np.ndarray
    seed: int

    def to_json(self):
        return {
            "z": self.z.tolist(),
            "mu": self.mu.tolist(),
            "lambda": [lam.tolist() for lam in self.loadings],
            "psi": self.psi.tolist(),
            "pi": self.pi.tolist(),
            "seed": self.seed,
        }


def simulate_mfa(spec):
    """Simulate from a G-component MFA.

    Means ~ MVN(0, s^2 I) with s the separation scale, loadings entries ~ N(0, 1),
    uniquenesses ~ U(0.2, 1). Returns ``(Dataset, SimTruth)`` with 1-based labels.
    """
    rng = RngStream(spec.seed).gen
    G, p, n = spec.G, spec.p, spec.n
    pi = np.asarray(spec.pi)
    mu = rng.normal(0.0, spec.separation, size=(G, p))
    loadings = [rng.standard_normal((p, q)) for q in spec.q]
    psi = rng.uniform(0.2, 1.0, size=(G, p))
    z = rng.choice(G, size=n, p=pi)
    x = np.empty((n, p))
    for g in range(G):
        idx = np.flatnonzero(z == g)
        eta = rng.standard_normal((idx.size, spec.q[g]))
        eps = rng.standard_normal((idx.size, p)) * np.sqrt(psi[g])
        x[idx] = mu[g] + eta @ loadings[g].T + eps
    # labels of absent clusters are compacted so Dataset's contiguity holds
    labels = canonical_labels(z + 1) if len(np.unique(z)) < G else z + 1
    truth = SimTruth(z + 1, mu, loadings, psi, pi, spec.seed)
    return Dataset(x, [], labels), truth


def write_dataset(d, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = list(d.var_names) + (["label"] if d.true_labels is not None else [])
        w.writerow(cols)
        for i in range(d.n):
            row = [repr(float(v)) for v in d.x[i]]
            if d.true_labels is not None:
                row.append(int(d.true_labels[i]))
            w.writerow(row)


def write_simulated(d, truth, stem):
    """Write ``<stem>.csv`` and the ``<stem>.json`` truth sidecar."""
    stem = Path(stem)
    write_dataset(d, stem.with_suffix(".csv"))
    stem.with_suffix(".json").write_text(json.dumps(truth.to_json()), encoding="utf-8")
