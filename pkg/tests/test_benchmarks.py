import numpy as np
import pytest

from src.tools.benchmarks import (
    NOISE_PRESETS,
    BenchmarkGenerator,
    NoiseSpec,
    gen_multi,
    gen_single,
    multi_response,
    parse_grid,
    single_response,
)
from src.utils.errors import UsageError


def test_full_single_grid_has_two_thousand_rows():
    data = gen_single((20, 20), NoiseSpec())
    assert len(data) == 2000
    assert data.schema.levels == (5,)
    assert data.inputs.x.min() == 0.0 and data.inputs.x.max() == 1.0


def test_full_multi_grid_size_and_bounds():
    data = gen_multi((10, 10), NoiseSpec())
    assert len(data) == 10 * 10 * 25
    assert data.n_outputs == 2
    assert data.inputs.x.min() == -100.0 and data.inputs.x.max() == 100.0


def test_single_response_at_a_known_point():
    assert single_response(np.array([[0.25, 0.25]]), np.array([0]))[0] == pytest.approx(-8.0)
    # level 2 carries the largest coefficient
    assert single_response(np.array([[0.25, 0.25]]), np.array([1]))[0] == pytest.approx(-20.0)


def test_multi_response_at_the_origin_of_the_middle_levels():
    y = multi_response(np.zeros((1, 2)), np.array([[2, 2]]))
    assert y[0, 0] == pytest.approx(1.0)
    assert y[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_cross_term_pairs_each_input_with_the_other_factor():
    x = np.array([[80.0, 0.0]])
    product = np.cos(80.0) * np.cos(50.0 / np.sqrt(2.0))
    # t2 one level above the middle: x1 enters through the cross term
    assert multi_response(x, np.array([[2, 3]]))[0, 0] == pytest.approx(1.0 + product)
    # t1 one level above the middle pairs with x2 = 0, so no cross term
    assert multi_response(x, np.array([[3, 2]]))[0, 0] == pytest.approx(product)


def test_rows_are_ordered_x1_major():
    inputs = BenchmarkGenerator("single").grid_inputs(3, 2)
    assert len(inputs) == 30
    np.testing.assert_array_equal(inputs.x[:10, 0], 0.0)
    np.testing.assert_array_equal(inputs.t[:5, 0], np.arange(5))


def test_noise_presets():
    assert NOISE_PRESETS["single"] == {"none": 0.0, "low": 0.4, "high": 4.0}
    assert NoiseSpec.preset("multi", "high").sd == 1.0
    with pytest.raises(UsageError):
        NoiseSpec.preset("single", "extreme")


def test_noise_is_seeded():
    a = gen_single((4, 4), NoiseSpec(sd=0.4, seed=3))
    b = gen_single((4, 4), NoiseSpec(sd=0.4, seed=3))
    c = gen_single((4, 4), NoiseSpec(sd=0.4, seed=4))
    np.testing.assert_array_equal(a.outputs, b.outputs)
    assert not np.array_equal(a.outputs, c.outputs)
    clean = gen_single((4, 4), NoiseSpec())
    assert np.std(a.outputs - clean.outputs) == pytest.approx(0.4, rel=0.3)


def test_negative_noise_is_rejected():
    with pytest.raises(UsageError):
        NoiseSpec(sd=-0.1)


@pytest.mark.parametrize(
    "text,family,expected",
    [("20x20x5", "single", (20, 20)), ("10x10", "single", (10, 10)), ("20x20x5x5", "multi", (20, 20))],
)
def test_parse_grid(text, family, expected):
    assert parse_grid(text, family) == expected


@pytest.mark.parametrize("text,family", [("20x20x4", "single"), ("20x20x5", "multi"), ("twenty", "single")])
def test_parse_grid_rejects_bad_shapes(text, family):
    with pytest.raises(UsageError):
        parse_grid(text, family)
