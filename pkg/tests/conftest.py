import numpy as np
import pytest

from src.config.config import TrainConfig
from src.gp import svgp
from src.gp.latent_map import Dataset, MixedInputs, MixedSchema
from src.gp.numerics import make_rng
from src.gp.svgp import SVModel, VariationalGaussian
from src.tools.benchmarks import NoiseSpec, gen_multi, gen_single


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(0)


@pytest.fixture
def small_single() -> Dataset:
    """60 rows of the single-response benchmark with a little noise."""
    return gen_single((4, 3), NoiseSpec(sd=0.1, seed=1))


@pytest.fixture
def small_multi() -> Dataset:
    """150 rows of the two-output benchmark."""
    return gen_multi((3, 2), NoiseSpec(sd=0.05, seed=2))


@pytest.fixture
def quick_config() -> TrainConfig:
    return TrainConfig(
        family="sv",
        n_inducing=8,
        n_latent_functions=2,
        batch_size=20,
        max_iters=30,
        convergence_window=10,
        restarts=2,
        log_every=0,
        seed=0,
    )


@pytest.fixture
def random_dataset():
    """Factory for small random mixed datasets: p=2 quantitative inputs, one 3-level factor."""

    def make(n: int, seed: int = 0, n_outputs: int = 1) -> Dataset:
        r = make_rng(seed)
        schema = MixedSchema(p=2, q=1, levels=(3,), x_bounds=((0.0, 1.0), (0.0, 1.0)))
        inputs = MixedInputs(x=r.uniform(size=(n, 2)), t=r.integers(0, 3, size=(n, 1)))
        y = np.sin(3.0 * inputs.x[:, :1]) + 0.5 * inputs.t + 0.1 * r.standard_normal((n, n_outputs))
        return Dataset(schema, inputs, y)

    return make


@pytest.fixture
def random_varstate():
    def make(n_inducing: int, rng: np.random.Generator) -> VariationalGaussian:
        lower = np.tril(0.3 * rng.standard_normal((n_inducing, n_inducing)), -1)
        lower[np.diag_indices(n_inducing)] = rng.uniform(0.2, 1.2, size=n_inducing)
        return VariationalGaussian(mu=rng.standard_normal(n_inducing), sigma_lower=lower)

    return make


@pytest.fixture
def sv_model():
    """Factory for an untrained single-output sparse model at its initial parameters."""

    def make(data: Dataset, n_inducing: int, seed: int = 0, noise: float = 0.1, jitter: float = 1e-6) -> SVModel:
        params = svgp.initial_params(data, make_rng(seed), 2, n_inducing, jitter)
        params["log_noise"] = np.asarray(np.log(noise))
        return SVModel.from_params(params, data.schema, data.normalization, 2, jitter)

    return make
