from dataclasses import replace

import numpy as np
import pytest

from src.gp.latent_map import LatentMap, collinearity_report
from src.tools.latent_exporter import COLLINEARITY_COLUMNS, LatentExporter
from src.tools.trainer import fit


@pytest.fixture(scope="module")
def fitted():
    from src.config.config import TrainConfig
    from src.tools.benchmarks import NoiseSpec, gen_multi, gen_single

    cfg = TrainConfig(family="sv", n_inducing=6, batch_size=20, max_iters=5, log_every=0, check_convergence=False)
    single = gen_single((4, 3), NoiseSpec(sd=0.1, seed=1))
    multi = gen_multi((3, 2), NoiseSpec(sd=0.05, seed=2))
    sv, _ = fit("sv", single, cfg, workers=1)
    per_output, _ = fit("sv", multi, cfg, workers=1)
    lmc_ind, _ = fit("lmc-independent", multi, replace(cfg, family="lmc-independent"), workers=1)
    return {"sv": sv, "per_output": per_output, "lmc": lmc_ind}


def test_one_row_per_variable_level_and_copy(fitted):
    frame = LatentExporter(fitted["sv"]).to_dataframe()
    assert list(frame.columns) == ["variable", "level", "label", "copy", "z_1", "z_2"]
    assert len(frame) == 5
    assert list(frame["level"]) == [1, 2, 3, 4, 5]


def test_canonical_export_pins_the_first_levels(fitted):
    frame = LatentExporter(fitted["sv"]).to_dataframe()
    assert frame.loc[0, "z_1"] == pytest.approx(0.0, abs=1e-12)
    assert frame.loc[0, "z_2"] == pytest.approx(0.0, abs=1e-12)
    assert frame.loc[1, "z_2"] == pytest.approx(0.0, abs=1e-12)
    assert frame.loc[1, "z_1"] >= 0.0
    assert frame.loc[2, "z_2"] >= 0.0


def test_raw_export_keeps_stored_values(fitted):
    model = fitted["sv"]
    frame = LatentExporter(model, canonical=False).to_dataframe()
    np.testing.assert_array_equal(frame[["z_1", "z_2"]].to_numpy(), model.latent.values[0][0])


def test_canonicalization_preserves_distances(fitted):
    model = fitted["sv"]
    raw = LatentExporter(model, canonical=False).to_dataframe()[["z_1", "z_2"]].to_numpy()
    canon = LatentExporter(model).to_dataframe()[["z_1", "z_2"]].to_numpy()
    dist = lambda a: np.linalg.norm(a[:, None, :] - a[None, :, :], axis=-1)  # noqa: E731
    np.testing.assert_allclose(dist(raw), dist(canon), atol=1e-10)


def test_per_output_models_export_one_copy_each(fitted):
    frame = LatentExporter(fitted["per_output"]).to_dataframe()
    assert sorted(frame["copy"].unique()) == [1, 2]
    assert len(frame) == 2 * 2 * 5


def test_independent_lmc_exports_a_copy_per_function(fitted):
    exporter = LatentExporter(fitted["lmc"])
    frame = exporter.to_dataframe()
    assert sorted(frame["copy"].unique()) == [1, 2]
    inducing = exporter.inducing_dataframe()
    assert sorted(inducing["function"].unique()) == [1, 2]
    assert list(inducing.columns[:4]) == ["function", "index", "x_1", "x_2"]
    assert "t_2_z_2" in inducing.columns


def test_collinearity_table(fitted):
    frame = LatentExporter(fitted["lmc"]).collinearity_dataframe()
    assert list(frame.columns) == COLLINEARITY_COLUMNS
    assert len(frame) == 2 * 2
    assert frame["explained_fraction"].between(0.0, 1.0).all()


def test_collinearity_of_points_on_a_line():
    values = np.zeros((1, 5, 2))
    values[0, :, 0] = [0.0, 4.0, 1.0, 3.0, 2.0]
    latent = LatentMap(g=2, structure="shared", values=[values])
    report = collinearity_report(latent, 0)
    assert report.explained_fraction == pytest.approx(1.0)
    assert report.ordering == (1, 3, 5, 4, 2)
