import numpy as np
import pytest

from fcvi.dataset import ClientSpec, GaussianSpec, LabeledSet, ScenarioSchedule
from fcvi.nn_core import ModelParams


def numeric_grad(params: ModelParams, X, y, h=1e-5):
    """Central differences of the batch-mean cross-entropy, computed from scratch."""
    def mean_ce(vec):
        p = ModelParams.from_flat(params, vec)
        H = np.maximum(X @ p.hidden_weights.T + p.hidden_bias, 0.0)
        Z = H @ p.output_weights.T + p.output_bias
        Z = Z - Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        return -logp[np.arange(len(y)), y].mean()

    v = params.flat()
    g = np.empty_like(v)
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (mean_ce(v + e) - mean_ce(v - e)) / (2 * h)
    return g


def blob_set(num_classes=2, per_class=50, dim=2, scale=6.0, seed=0) -> LabeledSet:
    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes) % dim] = scale
    if num_classes > dim:
        means[dim:, :] = -scale * np.eye(dim)[: num_classes - dim]
    y = np.repeat(np.arange(num_classes), per_class)
    X = means[y] + rng.standard_normal((len(y), dim))
    return LabeledSet(X, y, num_classes)


def small_schedule(rounds=6, leave=None, join=None, L=3, per=60, beta=0.5) -> ScenarioSchedule:
    """Client 0 holds classes 0 and 1 throughout; client 1 is the only holder of class L-1."""
    data = GaussianSpec.simplex(L, dim=4, scale=5.0)
    c0 = [per] * (L - 1) + [0]
    c1 = [0] * (L - 1) + [per]
    clients = [
        ClientSpec.from_totals(0, 1, rounds + 1, c0, beta),
        ClientSpec.from_totals(1, join or 1, leave or rounds + 1, c1, beta),
    ]
    return ScenarioSchedule(rounds, data, clients, beta=beta, test_per_class=30)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
