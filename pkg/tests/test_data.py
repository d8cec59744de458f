import json

import numpy as np
import pytest

from imifa.data import (
    Dataset,
    PreprocessSpec,
    SimSpec,
    canonical_labels,
    load_matrix,
    preprocess,
    simulate_mfa,
    write_simulated,
)
from imifa.errors import DegenerateColumnError, ParseError, ValidationError


def _write(tmp_path, text, name="x.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadMatrix:
    def test_plain_numeric(self, tmp_path):
        d = load_matrix(_write(tmp_path, "1,2\n3,4\n5,6\n"), has_header=False)
        assert (d.n, d.p) == (3, 2)
        np.testing.assert_array_equal(d.x, [[1, 2], [3, 4], [5, 6]])

    def test_label_column_removed_and_canonicalised(self, tmp_path):
        d = load_matrix(_write(tmp_path, "a,b,area\n1,2,South\n3,4,North\n5,6,South\n"), label_column="area")
        assert d.var_names == ["a", "b"]
        np.testing.assert_array_equal(d.true_labels, [1, 2, 1])
        assert d.p == 2

    def test_non_numeric_cell_names_row(self, tmp_path):
        with pytest.raises(ParseError, match="row 2"):
            load_matrix(_write(tmp_path, "1,2\nabc,4\n5,6\n"), has_header=False)

    def test_ragged_rows(self, tmp_path):
        with pytest.raises(ParseError, match="shape error"):
            load_matrix(_write(tmp_path, "1,2\n3\n"), has_header=False)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_matrix(tmp_path / "nope.csv")


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Dataset(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_rejects_gap_in_labels(self):
        with pytest.raises(ValidationError):
            Dataset(np.zeros((3, 1)), true_labels=[1, 3, 3])

    def test_canonical_labels_first_appearance(self):
        np.testing.assert_array_equal(canonical_labels(["b", "a", "b", "c"]), [1, 2, 1, 3])


class TestPreprocess:
    def test_center_unit_hand_value(self):
        d = preprocess(Dataset(np.array([[1.0], [2.0], [3.0]])), PreprocessSpec(True, "unit"))
        np.testing.assert_allclose(d.x[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)

    def test_center_pareto_hand_value(self):
        d = preprocess(Dataset(np.array([[0.0], [0.0], [4.0]])), PreprocessSpec(True, "pareto"))
        sd = np.sqrt(16.0 / 3.0)
        np.testing.assert_allclose(d.x[:, 0], np.array([-4 / 3, -4 / 3, 8 / 3]) / np.sqrt(sd), rtol=1e-14)

    def test_identity_mode(self):
        x = np.random.default_rng(0).standard_normal((5, 3))
        d = preprocess(Dataset(x), PreprocessSpec(False, "none"))
        np.testing.assert_array_equal(d.x, x)

    def test_zero_variance_column_named(self):
        x = np.column_stack((np.arange(4.0), np.ones(4)))
        with pytest.raises(DegenerateColumnError, match="V2"):
            preprocess(Dataset(x), PreprocessSpec(True, "unit"))

    def test_unit_scaling_moments(self):
        x = np.random.default_rng(1).normal(3.0, 7.0, (50, 4))
        d = preprocess(Dataset(x), PreprocessSpec())
        assert np.abs(d.x.mean(axis=0)).max() < 1e-10
        np.testing.assert_allclose(d.x.std(axis=0, ddof=1), 1.0, atol=1e-10)


class TestSimulate:
    def test_balanced_three_cluster_design(self):
        d, truth = simulate_mfa(SimSpec(n=300, p=50, G=3, q=4, seed=1))
        assert d.x.shape == (300, 50)
        assert [lam.shape for lam in truth.loadings] == [(50, 4)] * 3
        assert set(np.unique(truth.z)) == {1, 2, 3}

    def test_deterministic(self):
        a, _ = simulate_mfa(SimSpec(n=40, p=4, G=2, q=1, seed=9))
        b, _ = simulate_mfa(SimSpec(n=40, p=4, G=2, q=1, seed=9))
        np.testing.assert_array_equal(a.x, b.x)

    def test_zero_factors_gives_diagonal_covariance(self):
        d, _ = simulate_mfa(SimSpec(n=20000, p=3, G=1, q=0, seed=2))
        cov = np.cov(d.x, rowvar=False)
        off = cov[~np.eye(3, dtype=bool)]
        assert np.abs(off).max() < 0.03

    def test_proportions_converge(self):
        pi = np.array([0.2, 0.3, 0.5])
        n = 100000
        _, truth = simulate_mfa(SimSpec(n=n, p=1, G=3, q=0, pi=tuple(pi), seed=3))
        freq = np.bincount(truth.z, minlength=4)[1:] / n
        assert np.all(np.abs(freq - pi) < 3 * np.sqrt(pi * (1 - pi) / n))

    @pytest.mark.parametrize("kw", [dict(q=5), dict(pi=(0.5, 0.6)), dict(separation=0.0)])
    def test_invalid_spec(self, kw):
        base = dict(n=10, p=4, G=2, q=1)
        base.update(kw)
        with pytest.raises(ValidationError):
            SimSpec(**base)

    def test_sidecar_keys(self, tmp_path):
        d, truth = simulate_mfa(SimSpec(n=10, p=2, G=2, q=1, seed=4))
        write_simulated(d, truth, tmp_path / "rep")
        side = json.loads((tmp_path / "rep.json").read_text())
        assert set(side) == {"z", "mu", "lambda", "psi", "pi", "seed"}
        back = load_matrix(tmp_path / "rep.csv", label_column="label")
        np.testing.assert_array_equal(back.x, d.x)
