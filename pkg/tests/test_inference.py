import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baker_copula import copula, em, inference
from baker_copula.copula import ParamTensor
from baker_copula.marginals import fit_continuous

from oracles import naive_upper_sums

R22 = ParamTensor([[0.35, 0.15], [0.15, 0.35]])


@given(st.lists(st.integers(0, 6), min_size=1, max_size=40), st.integers(0, 1000))
@settings(max_examples=50)
def test_upper_rank_sums_with_ties(keys, seed):
    keys = np.array(keys, dtype=float)
    vals = np.random.default_rng(seed).normal(size=(len(keys), 3))
    np.testing.assert_allclose(inference.upper_rank_sums(keys, vals), naive_upper_sums(keys, vals),
                               atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_penrose_conditions(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 3))
    s = a @ a.T
    p = inference.pinv_sym(s)
    for lhs, rhs in ((s @ p @ s, s), (p @ s @ p, p), ((s @ p).T, s @ p), ((p @ s).T, p @ s)):
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    np.testing.assert_allclose(p, np.linalg.pinv(s), atol=1e-9)


def test_pinv_zero_matrix():
    np.testing.assert_array_equal(inference.pinv_sym(np.zeros((3, 3))), 0.0)


@pytest.fixture(scope="module")
def fitted():
    ps = em.rank_pseudo(copula.sample_copula(R22, 500, seed=1))
    return em.fit(ps, (2, 2)).params, ps


def test_covariance_shape_and_rank(fitted):
    params, ps = fitted
    cov = inference.covariance_r(params, ps)
    assert cov.sigma.shape == (4, 4)
    assert cov.rank == 1
    np.testing.assert_allclose(cov.sigma, cov.sigma.T)
    assert np.all(np.linalg.eigvalsh(cov.sigma) > -1e-10)
    # every row/column-sum direction has zero variance
    ones = np.kron(np.ones(2), [1.0, 0.0])
    assert abs(ones @ cov.sigma @ ones) < 1e-10


def test_covariance_rank_2x3():
    p = ParamTensor(np.array([[3, 2, 1], [1, 2, 3]]) / 12.0)
    ps = em.rank_pseudo(copula.sample_copula(p, 400, seed=2))
    cov = inference.covariance_r(em.fit(ps, (2, 3)).params, ps)
    assert cov.rank == 2


def test_unprojected_variant(fitted):
    params, ps = fitted
    raw = inference.covariance_r(params, ps, project=False)
    assert raw.rank > 1


def test_covariance_json_round_trip(fitted):
    cov = inference.covariance_r(*fitted)
    back = inference.CovarianceEstimate.from_dict(cov.to_dict())
    np.testing.assert_array_equal(back.sigma, cov.sigma)
    assert back.n_obs == 500 and back.to_dict()["order"] == "lexicographic"


def test_pseudo_obs_reduce_to_scores_without_correction(fitted):
    params, ps = fitted
    U, V = inference.pseudo_obs(params, ps)
    # scores average to the gradient of the mean log-likelihood, which is
    # orthogonal to the feasible directions at the optimum
    proj = inference.tangent_projector(params.dims)
    assert np.max(np.abs(U.mean(axis=0) @ proj)) < 1e-5
    assert U.shape == V.shape == (500, 4)


def test_tangent_projector():
    P = inference.tangent_projector((3, 4))
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    assert round(np.trace(P)) == 6


def test_var_density_at(fitted):
    params, ps = fitted
    cov = inference.covariance_r(params, ps)
    rng = np.random.default_rng(0)
    ms = [fit_continuous(rng.normal(size=500)) for _ in range(2)]
    v = inference.var_density_at(params, cov, [0.1, -0.2], ms)
    grid = inference.var_density_at(params, cov, np.array([[0.1, -0.2], [1.0, 1.0]]), ms)
    assert v >= 0 and grid[0] == pytest.approx(v)
    g = inference.density_gradient(params, [0.1, -0.2], ms)[0]
    assert v == pytest.approx(g @ cov.sigma @ g / 500)


def test_var_qhat_positive():
    ps = em.rank_pseudo(copula.sample_copula(copula.hpm_params("+", 0.7, 4), 800, seed=3))
    assert inference.var_qhat("+", 0.7, 4, ps) > 0
    with pytest.raises(ValueError):
        inference.var_qhat("+", 0.7, 4, em.rank_pseudo(np.random.default_rng(1).normal(size=(20, 3))))
