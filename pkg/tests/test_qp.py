import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from stresswear.errors import DimensionTooLarge
from stresswear.qp import kkt_residual, objective, qp_oracle, solve_nnqp


def random_instance(rng, n, rank_deficient=False):
    r = max(1, n - 3) if rank_deficient else n + 5
    A = rng.normal(size=(r, n))
    H = A.T @ A / r
    c = rng.normal(size=n)
    mask = rng.random(n) < 0.7
    if rank_deficient:
        # keep the problem bounded: the linear term lies in range(H)
        c = H @ rng.normal(size=n)
        c[mask] += np.abs(rng.normal(size=mask.sum()))
    return H, c, mask


def test_scalar_examples():
    one = np.eye(1)
    assert abs(solve_nnqp(one, np.array([-1.0]), np.array([True])).x[0] - 1.0) <= 1e-9
    assert solve_nnqp(one, np.array([1.0]), np.array([True])).x.tolist() == [0.0]
    assert qp_oracle(one, np.array([-1.0]), np.array([True])).tolist() == [1.0]
    assert qp_oracle(one, np.array([1.0]), np.array([True])).tolist() == [0.0]


@pytest.mark.parametrize("seed", range(10))
def test_six_dim_against_oracle(seed):
    rng = np.random.default_rng(seed)
    H, c, mask = random_instance(rng, 6)
    res = solve_nnqp(H, c, mask)
    x_or = qp_oracle(H, c, mask)
    assert objective(H, c, x_or) <= res.objective + 1e-8
    np.testing.assert_allclose(res.x, x_or, atol=1e-6)
    assert res.kkt_residual <= 1e-6


@given(st.integers(1, 14), st.integers(0, 10_000), st.booleans())
def test_random_instances_match_oracle(n, seed, deficient):
    rng = np.random.default_rng(seed)
    H, c, mask = random_instance(rng, n, deficient)
    res = solve_nnqp(H, c, mask)
    x_or = qp_oracle(H, c, mask)
    assert abs(res.objective - objective(H, c, x_or)) <= 1e-8
    assert res.kkt_residual <= 1e-6
    assert np.all(res.x[mask] >= 0)


def test_sparse_and_dense_agree():
    rng = np.random.default_rng(7)
    H, c, mask = random_instance(rng, 12)
    dense = solve_nnqp(H, c, mask)
    sparse = solve_nnqp(sp.csr_matrix(H), c, mask)
    np.testing.assert_allclose(dense.x, sparse.x, atol=1e-9)


def test_history_is_monotone():
    rng = np.random.default_rng(8)
    H, c, mask = random_instance(rng, 14)
    res = solve_nnqp(H, c, mask, x0=np.abs(rng.normal(size=14)) * 5)
    assert np.all(np.diff(res.history) <= 1e-12)


def test_kkt_residual_definition():
    H = np.eye(2)
    c = np.array([1.0, -1.0])
    mask = np.array([True, False])
    assert kkt_residual(H, c, np.array([0.0, 1.0]), mask) == 0.0
    # a bound coordinate pushed the wrong way shows up in the residual
    assert kkt_residual(H, -c, np.array([0.0, -1.0]), mask) == 1.0


def test_oracle_refuses_large_problems():
    with pytest.raises(DimensionTooLarge):
        qp_oracle(np.eye(30), np.zeros(30), np.ones(30, dtype=bool), max_masked=20)
