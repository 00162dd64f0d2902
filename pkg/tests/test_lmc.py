from dataclasses import replace

import numpy as np
import pytest

from src.gp.exact_gp import condition
from src.gp.kernels import correlation
from src.gp.lmc import (
    LMCConfig,
    LMCModel,
    MultiSVState,
    coregional_cov,
    dense_multi_predict,
    full_multi_elbo,
    init_lmc,
    kronecker_covariance,
    multi_elbo,
    multi_elbo_parts,
)
from src.gp.numerics import cholesky_with_jitter, make_rng
from src.gp.svgp import SVModel, VariationalGaussian, elbo, kl_term
from src.utils.errors import DimensionMismatch, UsageError


W_SCALE = 1.5


def _rough_sv(data, sv_model, rng, random_varstate):
    """Single-output sparse model with sigma^2 = W_SCALE^2, short length scales and no jitter."""
    base = sv_model(data, n_inducing=6, jitter=0.0)
    params = replace(
        base.params,
        log_sigma2=float(np.log(W_SCALE**2)),
        log_phi=np.full(2, np.log(5.0)),
        log_phi_z=np.full(2, np.log(5.0)),
    )
    return SVModel(params, base.latent, base.inducing, random_varstate(6, rng), base.schema, base.normalization, 0.0)


def _as_lmc(sv: SVModel) -> LMCModel:
    state = VariationalGaussian(mu=sv.varstate.mu / W_SCALE, sigma_lower=sv.varstate.sigma_lower / W_SCALE)
    return LMCModel(
        config=LMCConfig(n_outputs=1, n_functions=1),
        schema=sv.schema,
        latent=sv.latent,
        W=np.array([[W_SCALE]]),
        beta=sv.params.beta,
        log_noise=np.array([sv.params.log_noise]),
        log_phi=sv.params.log_phi[None, :],
        log_phi_z=sv.params.log_phi_z[None, :],
        state=MultiSVState(inducing=[sv.inducing], varstates=[state]),
        normalization=sv.normalization,
        jitter=0.0,
    )


@pytest.fixture
def multi_model(small_multi):
    data = small_multi.normalized()
    cfg = LMCConfig(n_outputs=2, n_functions=2)
    return data, init_lmc(data, cfg, make_rng(0), latent_dim=2, n_inducing=8)


def test_one_output_one_function_reduces_to_the_single_output_bound(random_dataset, sv_model, random_varstate):
    data = random_dataset(30)
    sv = _rough_sv(data, sv_model, make_rng(4), random_varstate)
    lmc = _as_lmc(sv)
    assert multi_elbo(lmc, data, 30) == pytest.approx(elbo(sv, data, 30), rel=1e-10, abs=1e-10)

    queries = random_dataset(6, seed=5).inputs
    np.testing.assert_allclose(lmc.predict(queries).mean, sv.predict(queries).mean, rtol=1e-10)
    np.testing.assert_allclose(lmc.predict(queries).variance, sv.predict(queries).variance, rtol=1e-9)


def test_dense_oracle_matches_exact_gp_for_one_output(random_dataset, sv_model, random_varstate):
    data = random_dataset(20)
    sv = _rough_sv(data, sv_model, make_rng(1), random_varstate)
    lmc = _as_lmc(sv)
    queries = random_dataset(5, seed=6).inputs
    exact = condition(sv.params, sv.latent, data).predict(queries)
    dense = dense_multi_predict(lmc, data, queries)
    np.testing.assert_allclose(dense.mean, exact.mean, rtol=1e-8)
    np.testing.assert_allclose(dense.variance, exact.variance, rtol=1e-7, atol=1e-12)


def test_coregional_covariance_at_a_point_is_w_w_transpose(multi_model):
    data, model = multi_model
    u = data.inputs.subset(np.array([0]))
    WWt = model.W @ model.W.T
    for i in range(2):
        for j in range(2):
            assert model.coregional_cov(i, j, u, u) == pytest.approx(WWt[i, j], rel=1e-12, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        model.coregional_cov(2, 0, u, u)


def test_kronecker_covariance_uses_point_major_index(multi_model):
    data, model = multi_model
    inputs = data.inputs.subset(np.array([3, 10]))
    K = kronecker_covariance(model, inputs)
    u = [inputs.subset(np.array([a])) for a in range(2)]
    for a in range(2):
        for b in range(2):
            for o in range(2):
                for o2 in range(2):
                    expected = model.coregional_cov(o, o2, u[a], u[b])
                    assert K[a * 2 + o, b * 2 + o2] == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_kl_is_summed_over_latent_functions(multi_model, random_varstate):
    data, model = multi_model
    r = make_rng(2)
    model = model.with_params(model.to_params(), varstates=[random_varstate(8, r) for _ in range(2)])
    parts = multi_elbo_parts(model, data, len(data))
    expected = 0.0
    for l in range(2):
        S_I = model.state.inducing_for(l).locations
        chol = cholesky_with_jitter(correlation(S_I, S_I, model.weights(l)), model.jitter)
        expected += kl_term(model.state.varstates[l], chol)
    assert parts.kl == pytest.approx(expected, rel=1e-10)


def test_full_covariance_agrees_with_diagonal_prediction(multi_model):
    data, model = multi_model
    queries = data.inputs.subset(np.arange(5))
    full = model.predict(queries, full_cov=True)
    diag = model.predict(queries)
    np.testing.assert_allclose(full.mean, diag.mean, rtol=1e-12)
    np.testing.assert_allclose(full.variance, diag.variance, rtol=1e-9, atol=1e-12)
    assert full.covariance.shape == (10, 10)
    np.testing.assert_allclose(np.diag(full.covariance).reshape(5, 2), full.variance, rtol=1e-9)


def test_chunked_full_elbo_matches_single_pass(multi_model):
    data, model = multi_model
    assert full_multi_elbo(model, data, chunk=40) == pytest.approx(multi_elbo(model, data, len(data)), rel=1e-10)


def test_shared_structure_stores_one_latent_copy(multi_model):
    _, model = multi_model
    assert model.latent.copies == 1
    assert len(model.state.inducing) == 1
    assert len(model.state.varstates) == 2
    assert model.W.shape == (2, 2)


def test_independent_structure_stores_one_copy_per_function(small_multi):
    cfg = LMCConfig(n_outputs=2, n_functions=2, structure="independent", share_inducing=True)
    assert cfg.share_inducing is False
    model = init_lmc(small_multi.normalized(), cfg, make_rng(0), latent_dim=2, n_inducing=6)
    assert model.latent.copies == 2
    assert len(model.state.inducing) == 2
    queries = small_multi.inputs.subset(np.arange(4))
    assert not np.array_equal(model.encode(queries, 0), model.encode(queries, 1))


def test_unshared_inducing_sets_for_shared_latent_map(small_multi):
    cfg = LMCConfig(n_outputs=2, n_functions=2, share_inducing=False)
    model = init_lmc(small_multi.normalized(), cfg, make_rng(0), latent_dim=2, n_inducing=6)
    assert model.latent.copies == 1
    assert len(model.state.inducing) == 2


def test_more_functions_than_outputs_is_a_usage_error():
    with pytest.raises(UsageError):
        LMCConfig(n_outputs=2, n_functions=3)


def test_output_count_must_match(small_single):
    with pytest.raises(DimensionMismatch):
        init_lmc(small_single, LMCConfig(n_outputs=2, n_functions=1), make_rng(0), 2, 5)


def test_dict_roundtrip_predicts_identically(multi_model):
    data, model = multi_model
    restored = LMCModel.from_dict(model.to_dict(), data.schema)
    queries = data.inputs.subset(np.arange(7))
    np.testing.assert_array_equal(model.predict(queries).mean, restored.predict(queries).mean)
    np.testing.assert_array_equal(model.predict(queries).variance, restored.predict(queries).variance)


def test_worked_coregional_example():
    W = np.array([[-0.02, 1.14], [-0.03, 1.12]])
    s = np.zeros(4)
    weights = np.ones((2, 4))
    assert coregional_cov(0, 0, s, s, W, weights) == pytest.approx(1.3000, abs=1e-12)
    assert coregional_cov(0, 1, s, s, W, weights) == pytest.approx(1.2774, abs=1e-12)
    assert coregional_cov(1, 0, s, s, W, weights) == pytest.approx(1.2774, abs=1e-12)


def test_flipping_the_sign_of_a_latent_function_changes_nothing(multi_model, random_varstate):
    data, model = multi_model
    r = make_rng(3)
    model = model.with_params(model.to_params(), varstates=[random_varstate(8, r) for _ in range(2)])
    params = model.to_params()
    params["W"][:, 1] *= -1.0
    kept, negated = model.state.varstates
    flipped = model.with_params(
        params, varstates=[kept, VariationalGaussian(mu=-negated.mu, sigma_lower=negated.sigma_lower)]
    )

    queries = data.inputs.subset(np.arange(6))
    before = model.predict(queries, full_cov=True)
    after = flipped.predict(queries, full_cov=True)
    np.testing.assert_allclose(after.mean, before.mean, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(after.variance, before.variance, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(after.covariance, before.covariance, rtol=1e-10, atol=1e-10)
    assert multi_elbo(flipped, data, len(data)) == pytest.approx(multi_elbo(model, data, len(data)), rel=1e-10)


def _posterior_varstates(model: LMCModel, data) -> list:
    """
    Exact q(f_l) at the training inputs. Columns of W are orthogonal and the noise is shared, so
    the posterior over (f_1, f_2) factorizes across latent functions.
    """
    noise = model.noise[0]
    resid = data.outputs - model.beta
    states = []
    for l in range(model.n_functions):
        S = model.state.inducing_for(l).locations
        K = correlation(S, S, model.weights(l))
        c = np.sum(model.W[:, l] ** 2) / noise
        Sigma = np.linalg.solve(np.eye(len(S)) + c * K, K)
        Sigma = 0.5 * (Sigma + Sigma.T)
        mu = Sigma @ (resid @ model.W[:, l]) / noise
        states.append(VariationalGaussian(mu=mu, sigma_lower=np.linalg.cholesky(Sigma)))
    return states


def test_sparse_prediction_matches_the_dense_model_for_two_outputs(random_dataset):
    data = random_dataset(12, n_outputs=2)
    start = init_lmc(data, LMCConfig(n_outputs=2, n_functions=2), make_rng(3), latent_dim=2, n_inducing=12, jitter=0.0)
    params = start.to_params()
    params["W"] = np.array([[1.0, 0.6], [1.0, -0.6]])
    params["log_noise"] = np.full(2, np.log(0.05))
    params["log_phi"] = np.log([[5.0, 5.0], [2.0, 2.0]])
    params["log_phi_z"] = np.log([[5.0, 5.0], [2.0, 2.0]])
    params["inducing"] = [start.encode(data.inputs, 0)]
    rough = start.with_params(params, varstates=start.state.varstates)
    model = rough.with_params(params, varstates=_posterior_varstates(rough, data))

    queries = random_dataset(4, seed=7).inputs
    sparse = model.predict(queries, full_cov=True)
    dense = dense_multi_predict(model, data, queries)
    np.testing.assert_allclose(sparse.mean, dense.mean, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(sparse.variance, dense.variance, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(sparse.covariance, dense.covariance, rtol=1e-6, atol=1e-8)
    cross_output = np.array([sparse.covariance[2 * a, 2 * a + 1] for a in range(4)])
    assert np.max(np.abs(cross_output)) > 1e-4
