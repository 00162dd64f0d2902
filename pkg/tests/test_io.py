import numpy as np
import pandas as pd
import pytest

from src.gp.latent_map import MixedSchema
from src.utils.errors import LevelOutOfRange, MalformedCsv
from src.utils.io import read_dataset, read_inputs, write_dataframe, write_dataset


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_dataset_write_then_read(tmp_path, small_multi):
    path = tmp_path / "multi.csv"
    write_dataset(small_multi, path)
    header = path.read_text().splitlines()[0]
    assert header == "x_1,x_2,t_1,t_2,y_1,y_2"
    loaded = read_dataset(path)
    np.testing.assert_array_equal(loaded.inputs.x, small_multi.inputs.x)
    np.testing.assert_array_equal(loaded.inputs.t, small_multi.inputs.t)
    np.testing.assert_array_equal(loaded.outputs, small_multi.outputs)
    assert loaded.schema.levels == (5, 5)


def test_levels_are_one_based_on_disk(tmp_path):
    path = _write(tmp_path / "d.csv", "x_1,t_1,y_1\n0.5,1,1.0\n0.1,3,2.0\n")
    inputs, y, schema = read_inputs(path)
    np.testing.assert_array_equal(inputs.t[:, 0], [0, 2])
    assert schema.levels == (3,)
    np.testing.assert_array_equal(y[:, 0], [1.0, 2.0])


def test_query_file_without_responses(tmp_path):
    path = _write(tmp_path / "q.csv", "x_1,t_1\n0.5,2\n")
    inputs, y, _ = read_inputs(path)
    assert y is None
    assert len(inputs) == 1


def test_non_numeric_cell_reports_its_row_and_column(tmp_path):
    path = _write(tmp_path / "d.csv", "x_1,t_1,y_1\n0.5,1,1.0\n0.1,2,abc\n")
    with pytest.raises(MalformedCsv) as info:
        read_dataset(path)
    assert info.value.row == 3
    assert info.value.column == "y_1"
    assert "ERROR MALFORMED_CSV" in info.value.one_line()


def test_fractional_level_is_malformed(tmp_path):
    path = _write(tmp_path / "d.csv", "x_1,t_1,y_1\n0.5,1.5,1.0\n")
    with pytest.raises(MalformedCsv) as info:
        read_dataset(path)
    assert info.value.row == 2
    assert info.value.column == "t_1"


def test_bad_header(tmp_path):
    path = _write(tmp_path / "d.csv", "x_1,level,y_1\n0.5,1,1.0\n")
    with pytest.raises(MalformedCsv) as info:
        read_dataset(path)
    assert info.value.row == 1


def test_empty_file(tmp_path):
    with pytest.raises(MalformedCsv):
        read_dataset(_write(tmp_path / "d.csv", ""))


def test_level_beyond_the_schema(tmp_path):
    schema = MixedSchema(p=1, q=1, levels=(3,), x_bounds=((0.0, 1.0),))
    path = _write(tmp_path / "q.csv", "x_1,t_1\n0.5,4\n")
    with pytest.raises(LevelOutOfRange):
        read_inputs(path, schema)


@pytest.mark.parametrize("level", ["0", "-2"])
def test_level_below_one(tmp_path, level):
    path = _write(tmp_path / "d.csv", f"x_1,t_1,y_1\n0.5,1,1.0\n0.2,{level},2.0\n")
    with pytest.raises(LevelOutOfRange) as info:
        read_dataset(path)
    assert "row 3" in str(info.value)
    assert "ERROR LEVEL_OUT_OF_RANGE" in info.value.one_line()


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "nope.csv")


def test_parquet_by_suffix(tmp_path):
    frame = pd.DataFrame({"x_1": [0.25, 0.75], "t_1": [1, 2], "y_1": [0.1, 0.2]})
    path = tmp_path / "d.parquet"
    write_dataframe(frame, path)
    data = read_dataset(path)
    np.testing.assert_array_equal(data.outputs[:, 0], [0.1, 0.2])


def test_writes_leave_no_temporary_files(tmp_path):
    write_dataframe(pd.DataFrame({"a": [1.0 / 3.0]}), tmp_path / "out.csv")
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]
    assert float((tmp_path / "out.csv").read_text().splitlines()[1]) == 1.0 / 3.0
