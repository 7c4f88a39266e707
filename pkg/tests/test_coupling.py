import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deltacert.coupling import coupling_matrix, find_weights
from deltacert.errors import DimensionMismatchError, InvalidInputError, RegionTooLargeError
from deltacert.linalg import lambda_extremes
from deltacert.network import interleave_permutation

PASSIVE = np.array([[0, 0.5], [0.5, 0]])


def _scalar_problem(rng, N):
    C = rng.standard_normal((N, N))
    Xs = []
    for _ in range(N):
        a = rng.standard_normal((2, 2))
        Xs.append(a + a.T)
    return Xs, C, interleave_permutation([1] * N)


def test_scalar_passivity_feedback():
    K = coupling_matrix([1.0], [PASSIVE], [[1.0]], interleave_permutation([1]))
    assert np.asarray(K).tolist() == [[-1.0]]
    cert = find_weights([PASSIVE], [[1.0]], interleave_permutation([1]), "fixed", p=[1.0])
    assert cert.feasible and cert.lambda_max_K == -1.0 and cert.weights.tolist() == [1.0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    Xs, C, P = _scalar_problem(rng, 3)
    p = rng.uniform(0.1, 3, 3)
    K1 = np.asarray(coupling_matrix(p, Xs, C, P))
    K2 = np.asarray(coupling_matrix(c * p, Xs, C, P))
    assert np.allclose(K2, c * K1, rtol=1e-12, atol=1e-12 * c * np.abs(K1).max())
    # the verdict is scale invariant
    a = find_weights(Xs, C, P, "fixed", p=p)
    b = find_weights(Xs, C, P, "fixed", p=c * p)
    assert a.feasible == b.feasible


@pytest.mark.parametrize("strategy", ["auto", "grid", "subgradient"])
def test_positive_supply_is_infeasible(strategy, rng):
    Xs = [np.eye(4), np.eye(4)]
    C = rng.standard_normal((4, 4))
    cert = find_weights(Xs, C, interleave_permutation([2, 2]), strategy, grid_points=7, iterations=100)
    assert not cert.feasible and cert.lambda_max_K > 0


def test_returned_weights_reevaluate(rng):
    found = 0
    for _ in range(60):
        Xs, C, P = _scalar_problem(rng, 3)
        cert = find_weights(Xs, C, P, "auto", grid_points=9, iterations=200)
        lmax = lambda_extremes(coupling_matrix(cert.weights, Xs, C, P))[1]
        assert lmax == pytest.approx(cert.lambda_max_K, abs=1e-12)
        assert cert.feasible == (lmax <= 1e-9)
        assert np.all(cert.weights > 0)
        found += cert.feasible
    assert found > 0


def test_search_never_worse_than_uniform():
    X1 = np.array([[-3.0, 0], [0, 1.0]])
    X2 = np.array([[0.5, 0], [0, -1.0]])
    C = np.array([[0.0, 1.0], [-1.0, 0.0]])
    P = interleave_permutation([1, 1])
    fixed = find_weights([X1, X2], C, P, "fixed", p=[1, 1])
    auto = find_weights([X1, X2], C, P, "auto", p=[1, 1])
    assert auto.lambda_max_K <= fixed.lambda_max_K
    grid = find_weights([X1, X2], C, P, "grid", grid_points=41)
    sub = find_weights([X1, X2], C, P, "subgradient", iterations=500)
    assert sub.lambda_max_K <= grid.lambda_max_K + 1e-3


def test_blockwise_monotone(rng):
    for _ in range(30):
        Xs, C, P = _scalar_problem(rng, 3)
        p = rng.uniform(0.1, 3, 3)
        k = rng.integers(3)
        Xs2 = [X.copy() for X in Xs]
        Xs2[k] = Xs2[k] - rng.uniform(1e-3, 1) * np.eye(2)
        a = lambda_extremes(coupling_matrix(p, Xs, C, P))[1]
        b = lambda_extremes(coupling_matrix(p, Xs2, C, P))[1]
        assert b <= a + 1e-12


def test_validation(rng):
    Xs, C, P = _scalar_problem(rng, 2)
    with pytest.raises(InvalidInputError):
        find_weights(Xs, C, P, "fixed")
    with pytest.raises(InvalidInputError):
        find_weights(Xs, C, P, "fixed", p=[1, -1])
    with pytest.raises(InvalidInputError):
        find_weights(Xs, C, P, "simplex")
    with pytest.raises(DimensionMismatchError):
        coupling_matrix([1, 1, 1], Xs, C, P)
    with pytest.raises(DimensionMismatchError):
        coupling_matrix([1, 1], Xs, np.eye(3), P)
    Xs5, C5, P5 = _scalar_problem(rng, 5)
    with pytest.raises(RegionTooLargeError):
        find_weights(Xs5, C5, P5, "grid", grid_points=21)
