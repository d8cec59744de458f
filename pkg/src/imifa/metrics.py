"""External cluster validity: adjusted Rand index, misclassification rate, confusion."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def _check(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"partitions differ in length: {a.shape} vs {b.shape}")
    return a, b


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def contingency(a, b):
    """Counts n_ij of items with label i in ``a`` and j in ``b`` (labels compacted)."""
    a, b = _check(a, b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def adjusted_rand(a, b):
    """Hubert-Arabie adjusted Rand index.

    When the expected and maximum indices coincide (both partitions trivial),
    returns 1.0 if the partitions are equal up to relabelling, else 0.0.
    """
    table = contingency(a, b)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        same = table.shape[0] == table.shape[1] and np.count_nonzero(table) == table.shape[0]
        return 1.0 if same else 0.0
    return float((sum_ij - expected) / (max_index - expected))


def error_rate(pred, truth):
    """Misclassification rate under the best matching of predicted to true labels.

    The confusion matrix (rows: truth, columns: prediction) is zero-padded to
    square before the assignment. Returns ``(rate, mapping, confusion)`` where
    ``mapping[k]`` is the true-class row index matched to predicted column k,
    and ``confusion`` has its columns permuted so matches lie on the diagonal.
    """
    from .posthoc import solve_assignment

    pred, truth = _check(pred, truth)
    table = contingency(truth, pred)
    L, K = table.shape
    k = max(L, K)
    sq = np.zeros((k, k), dtype=np.int64)
    sq[:L, :K] = table
    perm = solve_assignment(-sq.T)  # predicted column -> truth row
    order = np.argsort(perm)  # truth row r is matched by column order[r]
    confusion = sq[:, order][:L]
    # drop padded all-zero columns that matched padding rows
    keep = [c for c in range(k) if order[c] < K]
    confusion = confusion[:, keep]
    hits = sq[perm, np.arange(k)].sum()
    return 1.0 - hits / len(pred), perm[:K], confusion
