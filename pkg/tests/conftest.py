import numpy as np
import pytest

from imifa.dist import RngStream

ACCEPTANCE = []


def record_acceptance(number, name, passed, detail=""):
    ACCEPTANCE.append((number, name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}  {detail}")


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def toy_mfa():
    """Two well separated clusters, N=60, p=5."""
    from imifa.data import SimSpec, preprocess, PreprocessSpec, simulate_mfa

    d, truth = simulate_mfa(SimSpec(n=60, p=5, G=2, q=1, separation=3.0, seed=7))
    return preprocess(d, PreprocessSpec()), truth


def random_spd(gen, p):
    a = gen.standard_normal((p, p))
    return a @ a.T + p * np.eye(p)


def batch_se(x, n_batches=50):
    """Batch-means Monte-Carlo standard error along the first axis."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    means = x[: m * n_batches].reshape(n_batches, m, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)
