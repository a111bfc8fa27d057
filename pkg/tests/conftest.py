import numpy as np
import pytest

from impactfall.dataio import CanonicalDataset


def make_dataset(X, y=None, ts=None, names=None, subject=None, normalized=False):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    ts = np.arange(n, dtype=np.int64) * 10 if ts is None else np.asarray(ts)
    names = names or [f"f{j}" for j in range(d)]
    ones = np.ones(n, dtype=np.int64)
    return CanonicalDataset(tuple(names), ts, X, ones if subject is None else subject, ones, ones,
                            None if y is None else np.asarray(y), normalized)


@pytest.fixture
def dataset_factory():
    return make_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def svm_kkt_violation(model, X, y01):
    """Largest KKT violation of a fitted SVM over its training set."""
    X = np.asarray(X, dtype=float)
    y = np.where(np.asarray(y01) == 1, 1.0, -1.0)
    alpha, C = model.alpha_full_, model.C
    margin = y * model.decision_score(X)
    at_zero = alpha <= 1e-8
    at_c = alpha >= C - 1e-8
    free = ~at_zero & ~at_c
    worst = 0.0
    if at_zero.any():
        worst = max(worst, float(np.max(1.0 - margin[at_zero])))
    if free.any():
        worst = max(worst, float(np.max(np.abs(margin[free] - 1.0))))
    if at_c.any():
        worst = max(worst, float(np.max(margin[at_c] - 1.0)))
    equality = abs(float(np.dot(alpha, y)))
    return max(worst, equality)


ACCEPTANCE_RESULTS = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE_RESULTS[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
