from dataclasses import replace

import numpy as np
import pytest

from src.gp import svgp
from src.gp.exact_gp import log_marginal_likelihood
from src.gp.kernels import correlation
from src.gp.latent_map import MixedInputs
from src.gp.numerics import cholesky_with_jitter, make_rng
from src.gp.svgp import InducingSet, SVModel, VariationalGaussian, elbo, full_elbo, kl_term, optimal_varstate
from src.utils.errors import DimensionMismatch


def _with_inducing(model: SVModel, locations: np.ndarray, varstate: VariationalGaussian = None, params=None) -> SVModel:
    params = params or model.params
    if varstate is None:
        K_II = params.sigma2 * correlation(locations, locations, params.weights())
        varstate = VariationalGaussian.prior(cholesky_with_jitter(K_II, model.jitter))
    return SVModel(
        params=params,
        latent=model.latent,
        inducing=InducingSet(locations),
        varstate=varstate,
        schema=model.schema,
        normalization=model.normalization,
        jitter=model.jitter,
    )


def _rough(model: SVModel):
    """Short length scales keep K_II well conditioned."""
    return replace(model.params, log_phi=np.full(2, np.log(30.0)), log_phi_z=np.full(2, np.log(30.0)))


def _prior_chol(model: SVModel):
    S_I = model.inducing.locations
    return cholesky_with_jitter(model.params.sigma2 * correlation(S_I, S_I, model.params.weights()), model.jitter)


def test_kl_vanishes_at_the_prior(random_dataset, sv_model):
    model = sv_model(random_dataset(30), n_inducing=6)
    model = _with_inducing(model, model.inducing.locations, params=_rough(model))
    assert abs(kl_term(model.varstate, _prior_chol(model))) < 1e-9


def test_kl_is_nonnegative_and_positive_away_from_prior(random_dataset, sv_model, random_varstate):
    model = sv_model(random_dataset(30), n_inducing=6)
    model = _with_inducing(model, model.inducing.locations, params=_rough(model))
    chol = _prior_chol(model)
    r = make_rng(3)
    for _ in range(100):
        value = kl_term(random_varstate(6, r), chol)
        assert value >= -1e-9
        assert value > 1e-9


def test_elbo_lower_bounds_the_log_marginal_likelihood(random_dataset, sv_model, random_varstate):
    r = make_rng(11)
    for instance in range(50):
        n = int(r.integers(10, 81))
        data = random_dataset(n, seed=instance)
        model = sv_model(data, n_inducing=int(r.integers(1, min(n, 12) + 1)), seed=instance, noise=float(r.uniform(0.01, 0.5)))
        model = _with_inducing(model, model.inducing.locations, random_varstate(model.inducing.size, r))
        bound = elbo(model, data, n_total=n)
        lml = log_marginal_likelihood(model.params, model.latent, data)
        assert bound <= lml + 1e-6


def test_inducing_at_training_inputs_recovers_the_exact_marginal(random_dataset, sv_model):
    data = random_dataset(20)
    model = sv_model(data, n_inducing=20, jitter=1e-10)
    model = _with_inducing(model, model.encode(data.inputs), params=_rough(model))
    model = _with_inducing(model, model.inducing.locations, optimal_varstate(model, data))
    lml = log_marginal_likelihood(model.params, model.latent, data)
    assert elbo(model, data, n_total=20) == pytest.approx(lml, abs=1e-2)


def test_optimal_varstate_beats_other_states(random_dataset, sv_model, random_varstate):
    data = random_dataset(40)
    model = sv_model(data, n_inducing=8)
    model = _with_inducing(model, model.inducing.locations, params=_rough(model))
    best = elbo(_with_inducing(model, model.inducing.locations, optimal_varstate(model, data)), data, 40)
    assert best >= elbo(model, data, 40)
    r = make_rng(1)
    for _ in range(5):
        assert best >= elbo(_with_inducing(model, model.inducing.locations, random_varstate(8, r)), data, 40)


def test_minibatch_elbo_is_unbiased_over_a_partition(random_dataset, sv_model):
    data = random_dataset(30)
    model = sv_model(data, n_inducing=5)
    full = svgp.elbo_parts(model, data, 30)
    halves = [svgp.elbo_parts(model, data.subset(np.arange(s, s + 15)), 30) for s in (0, 15)]
    assert np.mean([h.lt for h in halves]) == pytest.approx(full.lt, rel=1e-12)
    assert halves[0].kl == pytest.approx(full.kl)


def test_chunked_full_elbo_matches_single_pass(random_dataset, sv_model):
    data = random_dataset(33)
    model = sv_model(data, n_inducing=5)
    assert full_elbo(model, data, chunk=7) == pytest.approx(elbo(model, data, 33), rel=1e-12)


def test_prediction_moments(random_dataset, sv_model):
    data = random_dataset(25)
    queries = random_dataset(9, seed=4).inputs
    model = sv_model(data, n_inducing=6)
    pred = model.predict(queries, full_cov=True)
    diag = model.predict(queries)
    assert pred.mean.shape == (9, 1)
    np.testing.assert_allclose(pred.mean, diag.mean)
    np.testing.assert_allclose(np.diag(pred.covariance), diag.variance[:, 0], atol=1e-10)
    assert np.all(diag.variance >= 0.0)
    noisy = model.predict(queries, include_noise=True)
    np.testing.assert_allclose(noisy.variance - diag.variance, model.params.noise, atol=1e-12)


def test_prior_state_predicts_the_constant_mean(random_dataset, sv_model):
    data = random_dataset(25)
    model = sv_model(data, n_inducing=6)
    pred = model.predict(random_dataset(5, seed=8).inputs)
    np.testing.assert_allclose(pred.mean[:, 0], model.params.beta[0])


def test_prediction_reverts_to_the_prior_far_from_the_inducing_points(random_dataset, sv_model, random_varstate):
    data = random_dataset(25)
    base = sv_model(data, n_inducing=6)
    model = _with_inducing(base, base.inducing.locations, varstate=random_varstate(6, make_rng(2)))
    queries = random_dataset(5, seed=8).inputs
    far = MixedInputs(x=queries.x + 100.0, t=queries.t)
    pred = model.predict(far)
    np.testing.assert_allclose(pred.variance[:, 0], model.params.sigma2, rtol=1e-12)
    np.testing.assert_allclose(pred.mean[:, 0], model.params.beta[0], atol=1e-12)
    near = model.predict(data.inputs)
    assert not np.allclose(near.variance[:, 0], model.params.sigma2)


def test_init_inducing_rejects_bad_sizes(random_dataset, rng):
    data = random_dataset(10)
    latent = svgp.LatentMap.random(data.schema, rng)
    with pytest.raises(ValueError):
        svgp.init_inducing(data, latent, 11, rng)
    with pytest.raises(ValueError):
        svgp.init_inducing(data, latent, 0, rng)
    assert svgp.init_inducing(data, latent, 10, rng).size == 10


def test_variational_factor_needs_positive_diagonal():
    with pytest.raises(ValueError):
        VariationalGaussian(mu=np.zeros(2), sigma_lower=np.array([[1.0, 0.0], [0.3, -0.1]]))


def test_raw_factor_roundtrip(random_varstate):
    state = random_varstate(4, make_rng(2))
    restored = VariationalGaussian.from_raw(state.mu, state.to_raw())
    np.testing.assert_allclose(restored.sigma_lower, state.sigma_lower, rtol=1e-12)


def test_width_mismatch_is_rejected(random_dataset, sv_model):
    model = sv_model(random_dataset(10), n_inducing=3)
    with pytest.raises(DimensionMismatch):
        _with_inducing(model, np.zeros((3, 5)))


def test_dict_roundtrip_predicts_identically(random_dataset, sv_model):
    data = random_dataset(20)
    model = sv_model(data, n_inducing=5)
    restored = SVModel.from_dict(model.to_dict(), data.schema)
    queries = random_dataset(6, seed=2).inputs
    np.testing.assert_array_equal(model.predict(queries).mean, restored.predict(queries).mean)
    np.testing.assert_array_equal(model.predict(queries).variance, restored.predict(queries).variance)


def test_fixed_noise_is_floored(random_dataset, rng):
    data = random_dataset(10)
    params = svgp.initial_params(data, rng, 2, 4, 1e-6, fixed_noise=0.0)
    assert np.exp(params["log_noise"]) == pytest.approx(1e-8 * np.var(data.outputs))
