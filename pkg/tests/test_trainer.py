import logging
from dataclasses import replace

import numpy as np
import pytest

from src.gp import svgp
from src.gp.exact_gp import ExactModel
from src.gp.lmc import LMCModel
from src.gp.numerics import make_rng
from src.gp.prediction import PerOutputModel
from src.gp.svgp import SVModel
from src.tools import trainer
from src.tools.trainer import VariationalTrainer, fit, fit_sv
from src.utils.errors import NonFinite


@pytest.fixture
def fixed_config(quick_config):
    return replace(quick_config, check_convergence=False)


def test_fit_sv_returns_a_model_and_full_trace(small_single, fixed_config):
    model, trace = fit_sv(small_single, fixed_config)
    assert isinstance(model, SVModel)
    assert len(trace) == fixed_config.max_iters
    assert trace.iterations == list(range(fixed_config.max_iters))
    assert all(np.isfinite(trace.elbo))
    assert model.inducing.size == fixed_config.n_inducing
    pred = model.predict(small_single.inputs)
    assert pred.mean.shape == (len(small_single), 1)
    assert np.all(pred.variance >= 0)


def test_latent_vectors_freeze_at_the_configured_iteration(small_single, fixed_config):
    _, trace = fit_sv(small_single, fixed_config)
    assert trace.z_frozen_at == int(0.8 * fixed_config.max_iters)


def test_latent_vectors_never_move_when_frozen_from_the_start(small_single, fixed_config):
    cfg = replace(fixed_config, z_freeze_fraction=0.0)
    model, _ = fit_sv(small_single, cfg)
    column = small_single.column(0).normalized()
    start = svgp.initial_params(column, make_rng(cfg.seed), cfg.latent_dim, cfg.n_inducing, cfg.jitter)
    for fitted, initial in zip(model.latent.values, start["z"]):
        np.testing.assert_array_equal(fitted, initial)


def test_training_is_deterministic_for_a_seed(small_single, fixed_config):
    a, trace_a = fit_sv(small_single, fixed_config)
    b, trace_b = fit_sv(small_single, fixed_config)
    assert a.to_dict() == b.to_dict()
    assert trace_a.elbo == trace_b.elbo


def test_different_seeds_give_different_fits(small_single, fixed_config):
    a, _ = fit_sv(small_single, fixed_config)
    b, _ = fit_sv(small_single, replace(fixed_config, seed=1))
    assert a.to_dict() != b.to_dict()


def test_training_improves_the_bound(small_single, fixed_config):
    cfg = replace(fixed_config, max_iters=120, natgrad_gamma=0.5, step_size=0.02)
    _, trace = fit_sv(small_single, cfg)
    assert np.mean(trace.elbo[-10:]) > np.mean(trace.elbo[:10])


def test_returned_model_is_the_last_scored_state(small_single, fixed_config):
    cfg = replace(fixed_config, batch_size=len(small_single), convergence_window=fixed_config.max_iters)
    model, trace = fit_sv(small_single, cfg)
    data = small_single.column(0).normalized()
    assert svgp.elbo(model, data, len(data)) == pytest.approx(trace.elbo[-1], rel=1e-8)


def test_exact_family_dispatches_to_mle(small_single, fixed_config):
    cfg = replace(fixed_config, family="exact", max_iters=20, restarts=1)
    model, trace = fit("exact", small_single, cfg, workers=1)
    assert isinstance(model, ExactModel)
    assert len(trace) == 20


def test_single_output_family_on_multi_output_data_fits_each_column(small_multi, fixed_config):
    model, trace = fit("sv", small_multi, replace(fixed_config, max_iters=10), workers=1)
    assert isinstance(model, PerOutputModel)
    assert model.n_outputs == 2
    assert model.predict(small_multi.inputs.subset(np.arange(4))).mean.shape == (4, 2)
    assert len(trace) == 10


@pytest.mark.parametrize("family,copies", [("lmc-shared", 1), ("lmc-independent", 2)])
def test_lmc_families(small_multi, fixed_config, family, copies):
    model, trace = fit(family, small_multi, replace(fixed_config, max_iters=15), workers=1)
    assert isinstance(model, LMCModel)
    assert model.latent.copies == copies
    assert len(trace) == 15
    assert model.predict(small_multi.inputs.subset(np.arange(3))).mean.shape == (3, 2)


def test_numeric_failure_carries_the_partial_trace(small_single, fixed_config):
    column = small_single.column(0).normalized()
    rng = make_rng(0)
    problem = trainer._sv_problem(column, fixed_config, rng)
    calls = {"n": 0}
    terms = problem.terms

    def failing(p, idx):
        calls["n"] += 1
        if calls["n"] > 5:
            raise NonFinite("objective evaluated to nan", group="objective")
        return terms(p, idx)

    with pytest.raises(NonFinite) as info:
        VariationalTrainer(fixed_config).run(replace(problem, terms=failing), len(column), rng)
    assert len(info.value.trace) == 5


def test_oversized_batch_uses_full_batches(small_single, fixed_config, caplog):
    cfg = replace(fixed_config, batch_size=10_000, max_iters=5)
    with caplog.at_level(logging.WARNING):
        _, trace = fit_sv(small_single, cfg)
    assert "full batches" in caplog.text
    assert len(trace) == 5


def test_inducing_count_is_clamped_to_the_data(small_single, fixed_config, caplog):
    small = small_single.subset(np.arange(6))
    cfg = replace(fixed_config, n_inducing=50, max_iters=5)
    with caplog.at_level(logging.WARNING):
        model, _ = fit_sv(small, cfg)
    assert model.inducing.size == 6
    assert "n_inducing=50" in caplog.text
